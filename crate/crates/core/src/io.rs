//! Manifest and CSV matrix formats.
//!
//! A manifest is a JSON object `{"views": ["v1.csv", ...], "labels": "labels.csv" | null}`
//! with paths relative to the manifest. Matrix files hold one feature
//! dimension per row, comma-separated, no header. Label files hold one
//! integer per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub views: Vec<String>,
    #[serde(default)]
    pub labels: Option<String>,
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<MultiViewDataset> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if manifest.views.is_empty() {
        return Err(Error::Manifest {
            path: manifest_path.to_path_buf(),
            message: "no views listed".into(),
        });
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let views = manifest
        .views
        .iter()
        .map(|rel| read_matrix_csv(base.join(rel)))
        .collect::<Result<Vec<_>>>()?;
    let labels = manifest
        .labels
        .as_ref()
        .map(|rel| read_labels(base.join(rel)))
        .transpose()?;
    MultiViewDataset::new(views, labels)
}

/// Write `view1.csv … viewV.csv`, `labels.csv` (when present) and
/// `manifest.json` into `dir`. Returns the manifest path.
pub fn save_dataset(data: &MultiViewDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::with_capacity(data.num_views());
    for (v, x) in data.views().iter().enumerate() {
        let name = format!("view{}.csv", v + 1);
        write_matrix_csv(dir.join(&name), x)?;
        names.push(name);
    }
    let labels = match data.labels() {
        Some(labels) => {
            write_labels(dir.join("labels.csv"), labels)?;
            Some("labels.csv".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        views: names,
        labels,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let values = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        row,
                        col,
                        cell: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(Error::Shape(format!(
                    "{}: row {row} has {} cells, row 0 has {}",
                    path.display(),
                    values.len(),
                    first.len()
                )));
            }
        }
        rows.push(values);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::Invalid(format!("{} is empty", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if c > 0 {
                    out.write_all(b",")?;
                }
                write!(out, "{:?}", m[(r, c)])?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(row, line)| {
            let cell = line.trim();
            cell.parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                col: 0,
                cell: cell.to_string(),
            })
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(labels.len() * 2);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
