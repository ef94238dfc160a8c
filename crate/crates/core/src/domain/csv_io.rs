//! CSV persistence for datasets.
//!
//! Layout: an optional single header row, one column per feature, and for
//! labeled data a trailing integer column named `label`. Floats are written
//! with 17 significant digits so a save/load cycle is lossless.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::types::{CategoryId, FeatureMatrix, LabelSpace, LabeledDataset, Provenance, UnlabeledDataset};
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "label";

#[derive(Clone, Debug, PartialEq)]
pub enum CsvDataset {
    Labeled(LabeledDataset),
    Unlabeled(UnlabeledDataset),
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn feature_header(dim: usize, out: &mut String) {
    for j in 0..dim {
        if j > 0 {
            out.push(',');
        }
        out.push('x');
        out.push_str(&j.to_string());
    }
}

fn push_row(row: &[f64], out: &mut String) {
    for (j, &v) in row.iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&format_float(v));
    }
}

pub fn labeled_to_csv(data: &LabeledDataset) -> String {
    let mut out = String::new();
    feature_header(data.dim(), &mut out);
    out.push(',');
    out.push_str(LABEL_COLUMN);
    out.push('\n');
    for (row, label) in data.features().iter_rows().zip(data.labels()) {
        push_row(row, &mut out);
        out.push(',');
        out.push_str(&label.0.to_string());
        out.push('\n');
    }
    out
}

pub fn unlabeled_to_csv(data: &UnlabeledDataset) -> String {
    let mut out = String::new();
    feature_header(data.dim(), &mut out);
    out.push('\n');
    for row in data.features().iter_rows() {
        push_row(row, &mut out);
        out.push('\n');
    }
    out
}

/// SHA-256 of the canonical CSV encoding, hex encoded. Used by clients to
/// confirm they hold the same public dataset as the coordinator.
pub fn content_hash(data: &UnlabeledDataset) -> String {
    hex::encode(Sha256::digest(unlabeled_to_csv(data).as_bytes()))
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

pub fn save_labeled(data: &LabeledDataset, path: &Path) -> Result<()> {
    write_file(path, &labeled_to_csv(data))
}

pub fn save_unlabeled(data: &UnlabeledDataset, path: &Path) -> Result<()> {
    write_file(path, &unlabeled_to_csv(data))
}

pub fn save_csv(data: &CsvDataset, path: &Path) -> Result<()> {
    match data {
        CsvDataset::Labeled(d) => save_labeled(d, path),
        CsvDataset::Unlabeled(d) => save_unlabeled(d, path),
    }
}

fn csv_err(path: &Path, row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        row,
        column,
        message: message.into(),
    }
}

/// Reads a CSV file. A header whose last column is `label` marks the file
/// as labeled; anything else is read as unlabeled features.
pub fn load_csv(path: &Path) -> Result<CsvDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, 0, 0, e.to_string()))?;

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, i + 1, 0, e.to_string()))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        records.push((i + 1, rec));
    }
    if records.is_empty() {
        return Err(csv_err(path, 0, 0, "file contains no rows"));
    }

    let first = &records[0].1;
    let has_header = first.iter().any(|c| c.parse::<f64>().is_err());
    let labeled = has_header && first.iter().last() == Some(LABEL_COLUMN);
    let width = first.len();
    let body = if has_header { &records[1..] } else { &records[..] };
    let dim = if labeled { width - 1 } else { width };
    if dim == 0 {
        return Err(csv_err(path, records[0].0, 1, "no feature columns"));
    }

    let mut data = Vec::with_capacity(body.len() * dim);
    let mut labels = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != width {
            let column = rec.len().min(width) + 1;
            return Err(csv_err(
                path,
                *line,
                column,
                format!("expected {width} cells, found {}", rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                return Err(csv_err(path, *line, j + 1, "missing value"));
            }
            if labeled && j == dim {
                let v: u32 = cell
                    .parse()
                    .map_err(|_| csv_err(path, *line, j + 1, format!("label {cell:?} is not a non-negative integer")))?;
                labels.push(CategoryId(v));
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| csv_err(path, *line, j + 1, format!("{cell:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(csv_err(path, *line, j + 1, "non-finite value"));
                }
                data.push(v);
            }
        }
    }

    let features = FeatureMatrix::new(dim, data)?;
    if labeled {
        Ok(CsvDataset::Labeled(LabeledDataset::new(features, labels, Provenance::Synthetic)?))
    } else {
        Ok(CsvDataset::Unlabeled(UnlabeledDataset::new(features)?))
    }
}

/// Loads a labeled file and checks every label against `space`.
pub fn load_labeled(path: &Path, space: Option<&LabelSpace>, provenance: Provenance) -> Result<LabeledDataset> {
    match load_csv(path)? {
        CsvDataset::Labeled(mut d) => {
            if let Some(space) = space {
                for (row, &c) in d.labels().iter().enumerate() {
                    if !space.contains(c) {
                        // +2: one for the header, one for 1-based numbering.
                        return Err(csv_err(path, row + 2, d.dim() + 1, format!("label {c} outside declared label space")));
                    }
                }
            }
            d.set_provenance(provenance);
            Ok(d)
        }
        CsvDataset::Unlabeled(_) => Err(csv_err(path, 1, 0, "expected a trailing \"label\" column")),
    }
}

pub fn load_unlabeled(path: &Path) -> Result<UnlabeledDataset> {
    match load_csv(path)? {
        CsvDataset::Unlabeled(d) => Ok(d),
        CsvDataset::Labeled(_) => Err(csv_err(path, 1, 0, "expected an unlabeled file")),
    }
}
