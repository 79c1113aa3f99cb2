//! Shared helpers for integration tests: a deterministic synthetic
//! digit renderer (seven-segment glyphs with jitter and pixel noise)
//! plus an IDX writer so image-pipeline tests run end to end without
//! network access.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const CANVAS: usize = 28;

type Segment = ((f64, f64), (f64, f64));

// Seven-segment layout on the 28x28 canvas.
const SEGMENTS: [Segment; 7] = [
    ((8.0, 5.0), (20.0, 5.0)),    // A: top
    ((20.0, 5.0), (20.0, 14.0)),  // B: top right
    ((20.0, 14.0), (20.0, 23.0)), // C: bottom right
    ((8.0, 23.0), (20.0, 23.0)),  // D: bottom
    ((8.0, 14.0), (8.0, 23.0)),   // E: bottom left
    ((8.0, 5.0), (8.0, 14.0)),    // F: top left
    ((8.0, 14.0), (20.0, 14.0)),  // G: middle
];

const DIGIT_SEGMENTS: [&[usize]; 10] = [
    &[0, 1, 2, 3, 4, 5],    // 0
    &[1, 2],                // 1
    &[0, 1, 6, 4, 3],       // 2
    &[0, 1, 6, 2, 3],       // 3
    &[5, 6, 1, 2],          // 4
    &[0, 5, 6, 2, 3],       // 5
    &[0, 5, 6, 4, 3, 2],    // 6
    &[0, 1, 2],             // 7
    &[0, 1, 2, 3, 4, 5, 6], // 8
    &[0, 1, 2, 3, 5, 6],    // 9
];

fn dist_to_segment(px: f64, py: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((px - x0) * dx + (py - y0) * dy) / len_sq).clamp(0.0, 1.0)
    };
    let (cx, cy) = (x0 + t * dx, y0 + t * dy);
    ((px - cx) * (px - cx) + (py - cy) * (py - cy)).sqrt()
}

/// One jittered glyph as 28x28 grayscale bytes. Heavy jitter and pixel
/// noise keep the classes from being trivially separable at desk scale.
pub fn render_digit(digit: u8, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let dx: f64 = rng.gen_range(-3.0..=3.0);
    let dy: f64 = rng.gen_range(-3.0..=3.0);
    let thickness: f64 = rng.gen_range(0.9..2.2);
    let brightness: f64 = rng.gen_range(0.35..1.0);
    let mut img = vec![0.0f64; CANVAS * CANVAS];
    for &si in DIGIT_SEGMENTS[digit as usize] {
        let ((ax, ay), (bx, by)) = SEGMENTS[si];
        let j = |rng: &mut ChaCha8Rng| -> f64 { rng.gen_range(-1.2..=1.2) };
        let (x0, y0) = (ax + dx + j(rng), ay + dy + j(rng));
        let (x1, y1) = (bx + dx + j(rng), by + dy + j(rng));
        for py in 0..CANVAS {
            for px in 0..CANVAS {
                let d = dist_to_segment(px as f64, py as f64, x0, y0, x1, y1);
                if d < thickness {
                    let v = brightness * (1.0 - d / thickness);
                    let idx = py * CANVAS + px;
                    if v > img[idx] {
                        img[idx] = v;
                    }
                }
            }
        }
    }
    img.iter()
        .map(|&v| {
            let noisy = (v + rng.gen_range(0.0..0.6)).clamp(0.0, 1.0);
            (noisy * 255.0).round() as u8
        })
        .collect()
}

/// Write an IDX image/label pair for the given (digit, count) plan.
/// Returns the two file paths.
pub fn write_digit_idx(
    dir: &Path,
    plan: &[(u8, usize)],
    rng: &mut ChaCha8Rng,
) -> (PathBuf, PathBuf) {
    let mut images: Vec<Vec<u8>> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for &(digit, count) in plan {
        for _ in 0..count {
            images.push(render_digit(digit, rng));
            labels.push(digit);
        }
    }
    let mut img_bytes = Vec::new();
    img_bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    img_bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img_bytes.extend_from_slice(&(CANVAS as u32).to_be_bytes());
    img_bytes.extend_from_slice(&(CANVAS as u32).to_be_bytes());
    for im in &images {
        img_bytes.extend_from_slice(im);
    }
    let mut label_bytes = Vec::new();
    label_bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    label_bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    label_bytes.extend_from_slice(&labels);

    let images_path = dir.join("digits-images.idx");
    let labels_path = dir.join("digits-labels.idx");
    std::fs::write(&images_path, img_bytes).unwrap();
    std::fs::write(&labels_path, label_bytes).unwrap();
    (images_path, labels_path)
}
