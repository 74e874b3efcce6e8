//! Run summaries, per-iteration CSV and bench tables.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Vector;
use crate::solver::{Mode, PhaseTimings, Report, Residuals, Step, StopReason};

pub const HISTORY_COLUMNS: [&str; 9] =
    ["n", "x_norm", "eps_n", "res_y", "res_z", "res_S", "t_phase1_ms", "t_phase3_ms", "t_project_ms"];

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub problem: &'static str,
    pub mode: Mode,
    pub x0: Vector,
    pub x: Vector,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub wall_time_ms: f64,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_to_reference: Option<f64>,
    pub last_residuals: Option<Residuals>,
    pub cuts: usize,
    pub phase_totals_ms: PhaseTimings,
}

impl Summary {
    pub fn new(problem: &'static str, mode: Mode, x0: &Vector, reference: Option<&Vector>, report: &Report) -> Self {
        Summary {
            problem,
            mode,
            x0: x0.clone(),
            x: report.x.clone(),
            iterations: report.iterations,
            stop_reason: report.stop,
            wall_time_ms: report.wall_time.as_secs_f64() * 1e3,
            workers: report.workers,
            reference: reference.cloned(),
            error_to_reference: reference.map(|r| report.x.dist(r)),
            last_residuals: report.last_residuals,
            cuts: report.cuts.len(),
            phase_totals_ms: report.phase_totals,
        }
    }
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn history_row(step: &Step) -> [String; 9] {
    [
        step.n.to_string(),
        fmt_float(step.x.norm()),
        fmt_float(step.eps),
        fmt_float(step.residuals.y),
        fmt_float(step.residuals.z),
        fmt_float(step.residuals.s),
        fmt_float(step.timings.phase1_ms),
        fmt_float(step.timings.phase3_ms),
        fmt_float(step.timings.project_ms),
    ]
}

pub fn write_history(history: &[Step], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io { path: "history".into(), message: e.to_string() };
    w.write_record(HISTORY_COLUMNS).map_err(io)?;
    for step in history {
        w.write_record(history_row(step)).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: "history".into(), message: e.to_string() })
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub workers: usize,
    pub wall_ms: f64,
    pub phase1_ms: f64,
    pub phase3_ms: f64,
    pub project_ms: f64,
    /// Wall time of the first row divided by this row's.
    pub speedup: f64,
    pub iterations: usize,
    pub x: Vector,
}

pub fn write_bench(rows: &[BenchRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io { path: "bench".into(), message: e.to_string() };
    w.write_record(["workers", "wall_ms", "phase1_ms", "phase3_ms", "project_ms", "speedup", "iterations"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.workers.to_string(),
            fmt_float(r.wall_ms),
            fmt_float(r.phase1_ms),
            fmt_float(r.phase3_ms),
            fmt_float(r.project_ms),
            fmt_float(r.speedup),
            r.iterations.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: "bench".into(), message: e.to_string() })
}

pub fn write_file(path: &Path, write: impl FnOnce(&mut std::fs::File) -> Result<()>) -> Result<()> {
    let io = |e: std::io::Error| Error::Io { path: path.display().to_string(), message: e.to_string() };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    write(&mut f)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_file(path, |f| {
        serde_json::to_writer_pretty(&mut *f, value)
            .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
    })
}
