//! File formats: time series as CSV (one row per interval or node), specs and
//! reports as JSON. Floats are written with 17 significant digits so that a
//! write/read round trip is exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::estep::EStepResiduals;
use crate::fit::{FitReport, StopReason, SweepRecord};
use crate::linalg::to_rows;
use crate::model::{Dataset, Dims, TimeGrid};
use crate::simulate::SimResult;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {reason}")]
    Row {
        path: PathBuf,
        row: usize,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(file_err(path))
}

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

/// `t, v_1..v_d, y_1..y_p`, one row per interval, `t` at the left endpoint.
pub fn write_dataset_csv(path: &Path, dataset: &Dataset) -> Result<(), IoError> {
    let mut out = create(path)?;
    let d = dataset.v.first().map_or(0, |v| v.len());
    let p = dataset.y.first().map_or(0, |y| y.len());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("v", d))
        .chain(numbered("y", p))
        .collect();
    let mut text = header.join(",");
    text.push('\n');
    for (k, (v, y)) in dataset.v.iter().zip(&dataset.y).enumerate() {
        let row: Vec<String> = std::iter::once(dataset.grid.node(k))
            .chain(v.iter().copied())
            .chain(y.iter().copied())
            .map(fmt_f64)
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(file_err(path))?;
    out.flush().map_err(file_err(path))
}

/// `t, x_1..x_N`, one row per grid node.
pub fn write_truth_csv(path: &Path, sim: &SimResult) -> Result<(), IoError> {
    let mut out = create(path)?;
    let n = sim.x_true.first().map_or(0, |x| x.len());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("x", n))
        .collect();
    let mut text = header.join(",");
    text.push('\n');
    for (k, x) in sim.x_true.iter().enumerate() {
        let row: Vec<String> = std::iter::once(sim.dataset.grid.node(k))
            .chain(x.iter().copied())
            .map(fmt_f64)
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(file_err(path))?;
    out.flush().map_err(file_err(path))
}

/// Read a dataset written by [`write_dataset_csv`] for the given grid.
///
/// Rows are numbered from 1 after the header. The `t` column is informational
/// and not checked against the grid.
pub fn read_dataset_csv(path: &Path, dims: Dims, grid: TimeGrid) -> Result<Dataset, IoError> {
    let file = File::open(path).map_err(file_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let width = 1 + dims.d + dims.p;
    let row_err = |row: usize, reason: String| IoError::Row {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let header = reader.headers().map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if header.len() != width {
        return Err(row_err(
            0,
            format!("header has {} columns, expected {width}", header.len()),
        ));
    }

    let mut v = Vec::with_capacity(grid.intervals());
    let mut y = Vec::with_capacity(grid.intervals());
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| row_err(row, e.to_string()))?;
        if record.len() != width {
            return Err(row_err(
                row,
                format!("found {} columns, expected {width}", record.len()),
            ));
        }
        let values = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| row_err(row, e.to_string()))?;
        v.push(DVector::from_column_slice(&values[1..1 + dims.d]));
        y.push(DVector::from_column_slice(&values[1 + dims.d..]));
    }
    if v.len() != grid.intervals() {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            reason: format!("found {} rows, expected {}", v.len(), grid.intervals()),
        });
    }
    Dataset::new(grid, v, y).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct ReportDocument {
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub J_history: Vec<f64>,
    pub step_norms: Vec<f64>,
    pub descent_gap_errors: Vec<f64>,
    pub A: Vec<Vec<f64>>,
    pub B: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub estep_residuals: EStepResiduals,
    pub mstep_residual: f64,
    pub sweeps: Vec<SweepRecord>,
}

fn seq_rows(seq: &[DVector<f64>]) -> Vec<Vec<f64>> {
    seq.iter().map(|v| v.iter().copied().collect()).collect()
}

impl From<&FitReport> for ReportDocument {
    fn from(r: &FitReport) -> Self {
        ReportDocument {
            iterations: r.iterations,
            converged: r.converged,
            stop_reason: r.stop_reason,
            J_history: r.j_history.clone(),
            step_norms: r.step_norms.clone(),
            descent_gap_errors: r.descent_gap_errors.clone(),
            A: to_rows(&r.final_estimate.a),
            B: to_rows(&r.final_estimate.b),
            x: seq_rows(&r.final_traj.x),
            w: seq_rows(&r.final_traj.w),
            q: seq_rows(&r.final_traj.q),
            estep_residuals: r.final_residuals.0,
            mstep_residual: r.final_residuals.1,
            sweeps: r.sweeps.clone(),
        }
    }
}

pub fn report_json(report: &FitReport) -> String {
    serde_json::to_string_pretty(&ReportDocument::from(report)).expect("report is serializable")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    out.write_all(b"\n").map_err(file_err(path))?;
    out.flush().map_err(file_err(path))
}

pub const DESCENT_LOG_HEADER: &str = "iter,J,step_norm,gap_error,estep_residual,mstep_residual";

/// One row per sweep.
pub fn write_descent_log(path: &Path, report: &FitReport) -> Result<(), IoError> {
    let mut out = create(path)?;
    let mut text = String::from(DESCENT_LOG_HEADER);
    text.push('\n');
    for s in &report.sweeps {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.iter,
            fmt_f64(s.j),
            fmt_f64(s.step_norm),
            fmt_f64(s.gap_error()),
            fmt_f64(s.estep_residual),
            fmt_f64(s.mstep_residual)
        ));
    }
    out.write_all(text.as_bytes()).map_err(file_err(path))?;
    out.flush().map_err(file_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_grid;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn wrong_column_count_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,v_1,y_1\n0,1,2\n0.5,1\n").unwrap();
        let dims = Dims::new(1, 1, 1, 1).unwrap();
        let err = read_dataset_csv(&path, dims, make_grid(1.0, 2).unwrap()).unwrap_err();
        match err {
            IoError::Row { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn wrong_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.csv");
        std::fs::write(&path, "t,v_1,y_1\n0,1,2\n").unwrap();
        let dims = Dims::new(1, 1, 1, 1).unwrap();
        assert!(read_dataset_csv(&path, dims, make_grid(1.0, 2).unwrap()).is_err());
    }
}
