//! Reader for the big-endian IDX image/label container.

use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(Error::Format(format!(
            "{}: truncated at byte {offset}, expected 4 more bytes",
            path.display()
        )));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Load an IDX image file plus its label file. Pixels scale to [0, 1]
/// and each image flattens row-major into one matrix row.
pub fn load_idx_images(images_path: &Path, labels_path: &Path) -> Result<(Matrix, Vec<u8>)> {
    let bytes = std::fs::read(images_path)?;
    let magic = read_u32_be(&bytes, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:#010x} at byte 0, expected {IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = read_u32_be(&bytes, 4, images_path)? as usize;
    let rows = read_u32_be(&bytes, 8, images_path)? as usize;
    let cols = read_u32_be(&bytes, 12, images_path)? as usize;
    let pixels = count * rows * cols;
    if bytes.len() != 16 + pixels {
        return Err(Error::Format(format!(
            "{}: expected {} pixel bytes after byte 16, found {}",
            images_path.display(),
            pixels,
            bytes.len().saturating_sub(16)
        )));
    }
    let data: Vec<f64> = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let matrix = Matrix::new(count, rows * cols, data)?;

    let label_bytes = std::fs::read(labels_path)?;
    let magic = read_u32_be(&label_bytes, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:#010x} at byte 0, expected {LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let label_count = read_u32_be(&label_bytes, 4, labels_path)? as usize;
    if label_bytes.len() != 8 + label_count {
        return Err(Error::Format(format!(
            "{}: expected {label_count} label bytes after byte 8, found {}",
            labels_path.display(),
            label_bytes.len().saturating_sub(8)
        )));
    }
    if label_count != count {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            count, label_count
        )));
    }
    Ok((matrix, label_bytes[8..].to_vec()))
}
