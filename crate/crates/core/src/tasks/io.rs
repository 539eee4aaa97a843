//! Dataset and candidate files.
//!
//! A dataset is a CSV with header `x0,...,x{d-1},y_raw` plus a sidecar
//! `<name>.meta.toml` holding the task, bounds, normalization extremes and
//! seed. Floats are written in Rust's shortest round-trip form, so files are
//! byte-identical across runs and parse back to the same bits.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{normalize_score, Dataset, ScoredDesign, TaskKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub task: String,
    pub design: TaskKind,
    pub y_min: f64,
    pub y_max: f64,
    pub seed: u64,
    #[serde(default)]
    pub predicted: bool,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_stem().unwrap_or_default().to_os_string();
    name.push(".meta.toml");
    csv.with_file_name(name)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_dataset(path: &Path, data: &Dataset, design: &TaskKind, seed: u64) -> Result<()> {
    let d = data.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("y_raw".into());
    w.write_record(&header)?;
    for it in &data.items {
        let mut rec: Vec<String> = it.x.iter().map(|&v| fmt(v)).collect();
        rec.push(fmt(it.y_raw));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let meta = DatasetMeta {
        task: data.task.clone(),
        design: design.clone(),
        y_min: data.y_min,
        y_max: data.y_max,
        seed,
        predicted: data.predicted,
    };
    let text = toml::to_string(&meta).map_err(|e| format_err(path, e.to_string()))?;
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn read_meta(csv_path: &Path) -> Result<DatasetMeta> {
    let p = sidecar_path(csv_path);
    let text = std::fs::read_to_string(&p)?;
    toml::from_str(&text).map_err(|e| format_err(&p, e.to_string()))
}

pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta = read_meta(path)?;
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let d = header.len().checked_sub(1).ok_or_else(|| format_err(path, "empty header"))?;
    for (i, h) in header.iter().enumerate() {
        let want = if i < d { format!("x{i}") } else { "y_raw".into() };
        if h != want {
            return Err(format_err(path, format!("column {i} is {h:?}, expected {want:?}")));
        }
    }
    let mut items = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format_err(path, format!("row {}: {e}", line + 1)))?;
        let y_raw = vals[d];
        items.push(ScoredDesign {
            x: vals[..d].to_vec(),
            y_raw,
            y_norm: normalize_score(y_raw, meta.y_min, meta.y_max)?,
        });
    }
    let data = Dataset {
        task: meta.task.clone(),
        items,
        y_min: meta.y_min,
        y_max: meta.y_max,
        predicted: meta.predicted,
    };
    Ok((data, meta))
}

/// One oracle-scored candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRow {
    pub k: usize,
    pub x: Vec<f64>,
    pub y_raw: f64,
    pub y_norm: f64,
}

/// Candidates CSV: `k,x0,...,x{d-1},y_raw,y_norm`.
pub fn write_candidates(path: &Path, rows: &[CandidateRow]) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.x.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["k".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.push("y_raw".into());
    header.push("y_norm".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.k.to_string()];
        rec.extend(r.x.iter().map(|&v| fmt(v)));
        rec.push(fmt(r.y_raw));
        rec.push(fmt(r.y_norm));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_candidates(path: &Path) -> Result<Vec<CandidateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 3 {
        return Err(format_err(path, "candidate file needs k, designs, y_raw, y_norm"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let k = rec[0].parse::<usize>().map_err(|e| format_err(path, e.to_string()))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format_err(path, e.to_string()))?;
        let n = vals.len();
        rows.push(CandidateRow {
            k,
            x: vals[..n - 2].to_vec(),
            y_raw: vals[n - 2],
            y_norm: vals[n - 1],
        });
    }
    Ok(rows)
}
