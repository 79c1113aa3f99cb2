//! CSV persistence for matrices with an optional trailing label column.
//!
//! Values print in the shortest decimal form that parses back to the
//! identical f64 (at most 17 significant digits), so round trips are
//! bitwise exact. The header names the value columns `x0..x{d-1}` plus
//! `label` when labels are present.

use std::fs;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

pub fn save_csv(matrix: &Matrix, labels: Option<&[String]>, path: &Path) -> Result<()> {
    if let Some(labels) = labels {
        if labels.len() != matrix.rows() && !(matrix.cols() == 0 && matrix.rows() == 0) {
            return Err(Error::Contract(format!(
                "{} labels for {} rows",
                labels.len(),
                matrix.rows()
            )));
        }
    }
    let mut out = String::new();
    let mut header: Vec<String> = (0..matrix.cols()).map(|i| format!("x{i}")).collect();
    if labels.is_some() {
        header.push("label".to_string());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    let n_rows = match labels {
        Some(l) if matrix.cols() == 0 => l.len(),
        _ => matrix.rows(),
    };
    for r in 0..n_rows {
        let mut fields: Vec<String> = if matrix.cols() > 0 {
            matrix.row(r).iter().map(|v| format!("{v}")).collect()
        } else {
            Vec::new()
        };
        if let Some(labels) = labels {
            fields.push(labels[r].clone());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<(Matrix, Option<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: missing header", path.display())))?;
    let header_fields: Vec<&str> = if header.is_empty() {
        Vec::new()
    } else {
        header.split(',').collect()
    };
    let has_labels = header_fields.last() == Some(&"label");
    let n_cols = header_fields.len() - usize::from(has_labels);

    let mut matrix = Matrix::empty(n_cols);
    let mut labels: Vec<String> = Vec::new();
    let mut row_buf = vec![0.0; n_cols];
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header_fields.len() {
            return Err(Error::Format(format!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                lineno + 1,
                fields.len(),
                header_fields.len()
            )));
        }
        for (i, f) in fields[..n_cols].iter().enumerate() {
            row_buf[i] = f.parse::<f64>().map_err(|_| {
                Error::Format(format!(
                    "{}: line {}: bad number {f:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
        }
        if has_labels {
            labels.push(fields[n_cols].to_string());
        }
        if n_cols > 0 {
            matrix.push_row(&row_buf)?;
        }
    }
    if n_cols == 0 && has_labels {
        // pure label table: represent the rows without value columns
        matrix = Matrix::empty(0);
    }
    Ok((matrix, has_labels.then_some(labels)))
}
