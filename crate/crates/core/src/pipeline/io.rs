use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::seeds::sha256_hex;
use crate::error::{invalid, Error, Result};
use crate::structural::{DofInfo, DofKind};

/// Column label of a DOF, e.g. `w@2.4` or `r@10`.
pub fn dof_label(d: &DofInfo) -> String {
    let k = match d.kind {
        DofKind::Translation => "w",
        DofKind::Rotation => "r",
    };
    format!("{k}@{}", d.x)
}

/// `t` plus one column per channel; channels are the rows of `data`.
/// Values carry 17 significant digits so they parse back bit-exactly.
pub fn write_series(path: &Path, times: &[f64], names: &[String], data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() != names.len() || data.ncols() != times.len() {
        return Err(invalid(format!(
            "{}: {} names and {} times for a {:?} series",
            path.display(),
            names.len(),
            times.len(),
            data.shape()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(names.len() + 1);
    for (k, t) in times.iter().enumerate() {
        row.clear();
        row.push(format!("{t:.16e}"));
        row.extend(data.column(k).iter().map(|v| format!("{v:.16e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub struct Series {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub data: DMatrix<f64>,
}

impl Series {
    /// Rows whose names start with `prefix`, in file order.
    pub fn rows_with_prefix(&self, prefix: &str) -> DMatrix<f64> {
        let idx: Vec<usize> = self
            .names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with(prefix))
            .map(|(i, _)| i)
            .collect();
        self.data.select_rows(&idx)
    }
}

pub fn read_series(path: &Path) -> Result<Series> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("t") {
        return Err(Error::IncompatibleArtifacts(format!(
            "{} does not start with a time column",
            path.display()
        )));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut it = rec.iter().map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::IncompatibleArtifacts(format!("{}: {e}", path.display())))
        });
        times.push(it.next().transpose()?.unwrap_or(f64::NAN));
        for v in it {
            values.push(v?);
        }
    }
    let nt = times.len();
    if values.len() != nt * names.len() {
        return Err(Error::IncompatibleArtifacts(format!(
            "{} has ragged rows",
            path.display()
        )));
    }
    // values are time-major: column k of the result is row k of the file
    let data = DMatrix::from_vec(names.len(), nt, values);
    Ok(Series { names, times, data })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::IncompatibleArtifacts(format!("{}: {e}", path.display())))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Fails with a pipeline-order error naming every missing file.
pub fn require(paths: &[PathBuf], stage: &str, hint: &str) -> Result<()> {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::PipelineOrder(format!(
            "{stage} needs {}; run `mre {hint}` first",
            missing.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let data = DMatrix::from_fn(3, 5, |i, k| (i as f64 + 0.1).powf(k as f64 * 0.7) / 3.0);
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 1e-3).collect();
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        write_series(&p, &times, &names, &data).unwrap();
        let s = read_series(&p).unwrap();
        assert_eq!(s.data, data);
        assert_eq!(s.times, times);
        assert_eq!(s.names, names);
        assert_eq!(s.rows_with_prefix("b"), data.rows(1, 1).into_owned());
    }

    #[test]
    fn missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let err = require(
            &[dir.path().join("x.csv"), dir.path().join("y.json")],
            "infer",
            "simulate",
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 4);
        let msg = err.to_string();
        assert!(msg.contains("x.csv") && msg.contains("y.json") && msg.contains("mre simulate"));
    }
}
