//! CSV and JSON emission.
//!
//! Floats are written in shortest round-trip form so a file parsed back
//! reproduces the exact values. Columns without a value (no reference
//! point, no Lyapunov function) hold `NaN`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pdflow::{IterationRecord, Trajectory};
use serde::Serialize;

use crate::error::{CliError, Result};

pub const CSV_HEADER: &str = "iter,time,fixed_point_residual,kkt_residual,lyapunov,dist_to_ref";

/// Shortest decimal that parses back to `v`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    fmt_float(v.unwrap_or(f64::NAN))
}

pub fn csv_header(n: usize, m: usize, full_state: bool) -> String {
    let mut header = CSV_HEADER.to_string();
    if full_state {
        for i in 0..n {
            write!(header, ",x_{i}").unwrap();
        }
        for i in 0..m {
            write!(header, ",lambda_{i}").unwrap();
        }
    }
    header
}

pub fn csv_row(rec: &IterationRecord, full_state: bool) -> String {
    let mut row = format!(
        "{},{},{},{},{},{}",
        rec.iter,
        fmt_float(rec.time),
        fmt_float(rec.fixed_point_residual),
        fmt_float(rec.kkt_residual),
        opt(rec.lyapunov),
        opt(rec.dist_to_ref),
    );
    if full_state {
        for v in rec.z.x.iter().chain(rec.z.lambda.iter()) {
            row.push(',');
            row.push_str(&fmt_float(*v));
        }
    }
    row
}

pub fn trajectory_csv(traj: &Trajectory, full_state: bool) -> String {
    let (n, m) = (traj.final_z.n(), traj.final_z.m());
    let mut out = csv_header(n, m, full_state);
    out.push('\n');
    for rec in &traj.records {
        out.push_str(&csv_row(rec, full_state));
        out.push('\n');
    }
    out
}

/// Run summary. Geometry fields are `null` for the Euclidean flow, rate
/// fields are `null` when no fit was possible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub rho: Option<f64>,
    pub k: Option<f64>,
    pub nu: Option<f64>,
    pub lipschitz: Option<f64>,
    pub alpha_max: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub fitted_rate: Option<f64>,
    pub r_squared: Option<f64>,
}

impl RunSummary {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let g = traj.geometry.as_ref();
        let fit = traj.fitted_rate.as_ref();
        Self {
            rho: g.map(|g| g.rho),
            k: g.map(|g| g.k),
            nu: g.map(|g| g.nu),
            lipschitz: g.map(|g| g.lipschitz),
            alpha_max: g.map(|g| g.alpha_max),
            converged: traj.converged,
            iterations: traj.iterations,
            fitted_rate: fit.map(|f| f.rate),
            r_squared: fit.map(|f| f.r_squared),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    text
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Parses the `time` and `dist_to_ref` columns of a trajectory CSV,
/// skipping rows whose distance is `NaN`.
pub fn read_distance_series(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| CliError::Config("empty CSV".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let index = |name: &str| {
        columns
            .iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| CliError::Config(format!("CSV has no `{name}` column")))
    };
    let (t_col, d_col) = (index("time")?, index("dist_to_ref")?);
    let mut series = Vec::new();
    for (line_no, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |col: usize| -> Result<f64> {
            fields
                .get(col)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::Config(format!("CSV row {}: bad value in column {col}", line_no + 2)))
        };
        let (t, d) = (parse(t_col)?, parse(d_col)?);
        if !d.is_nan() {
            series.push((t, d));
        }
    }
    Ok(series)
}
