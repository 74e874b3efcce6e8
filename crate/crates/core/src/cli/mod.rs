//! Batch front end: `run`, `validate` and `bench` over a JSON run config.
//!
//! Exit codes: 0 success, 1 invalid config, 2 solver failure, 3 validation
//! failure. Failures print a one-line JSON diagnostic on stderr.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{verify_family, AuditEntry, FamilyReport};
use crate::solver::{ConditionCheck, Report, Solver, StopRule, SCHEDULE_AUDIT_PREFIX};

pub use config::{RunConfig, Setup};
pub use output::{BenchRow, Summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID_CONFIG: i32 = 1;
pub const EXIT_SOLVER_FAILURE: i32 = 2;
pub const EXIT_VALIDATION_FAILURE: i32 = 3;

/// Default worker count when neither flag nor config sets one.
pub const WORKERS_ENV: &str = "HYBRIDPROJ_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "hybridproj", version, about = "Parallel hybrid projection solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the configured problem and write the summary (and history).
    Run {
        config: PathBuf,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record and write the per-iteration CSV.
        #[arg(long, value_enum)]
        history: Option<OnOff>,
    },
    /// Audit the configured family and schedule.
    Validate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the run for each worker count and compare.
    Bench {
        config: PathBuf,
        /// Comma-separated worker counts, e.g. 1,2,8.
        #[arg(long, value_delimiter = ',', required = true)]
        workers: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

/// A failure tagged with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl Failure {
    fn config(error: Error) -> Self {
        Failure { code: EXIT_INVALID_CONFIG, error }
    }

    fn solver(error: Error) -> Self {
        Failure { code: EXIT_SOLVER_FAILURE, error }
    }

    pub fn diagnostic(&self) -> String {
        serde_json::json!({
            "error": self.error.kind(),
            "message": self.error.to_string(),
            "exit_code": self.code,
        })
        .to_string()
    }
}

/// Outcome of a `run`.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub report: Report,
}

/// Builds, solves and writes artifacts to `out` (if any).
pub fn run(config: &RunConfig, workers: Option<usize>, out: Option<&Path>) -> std::result::Result<RunOutcome, Failure> {
    let setup = config.build(workers).map_err(Failure::config)?;
    let solver = Solver::new(&setup.family, &setup.schedule, &setup.solver).map_err(Failure::config)?;
    let report = solver.solve(&setup.x0).map_err(Failure::solver)?;
    let reference = match &setup.solver.stop {
        StopRule::ToReference { reference, .. } => Some(reference),
        _ => None,
    };
    let summary = Summary::new(config.problem.name(), setup.solver.mode, &setup.x0, reference, &report);
    if let Some(dir) = out.or(config.output.dir.as_deref()) {
        output::write_json(&dir.join(&config.output.summary), &summary).map_err(Failure::solver)?;
        if setup.solver.record_history {
            output::write_file(&dir.join(&config.output.history), |f| output::write_history(&report.history, f))
                .map_err(Failure::solver)?;
        }
    }
    Ok(RunOutcome { summary, report })
}

#[derive(Clone, Debug, Serialize)]
pub struct Validation {
    pub passed: bool,
    pub schedule: Vec<ConditionCheck>,
    pub family: FamilyReport,
}

/// What `validate` prints: passing member audits are only counted.
#[derive(Debug, Serialize)]
pub struct ValidationDigest<'a> {
    pub passed: bool,
    pub schedule: &'a [ConditionCheck],
    pub audits_run: usize,
    pub audits_failed: usize,
    pub failures: Vec<&'a AuditEntry>,
}

impl Validation {
    pub fn digest(&self) -> ValidationDigest<'_> {
        let failures: Vec<&AuditEntry> = self.family.failures().collect();
        ValidationDigest {
            passed: self.passed,
            schedule: &self.schedule,
            audits_run: self.family.entries.len(),
            audits_failed: failures.len(),
            failures,
        }
    }
}

/// Schedule conditions (a)-(c) and the sampled member audits.
pub fn validate(config: &RunConfig) -> Result<Validation> {
    let setup = config.build(None)?;
    let prefix = config.max_iter.clamp(1, SCHEDULE_AUDIT_PREFIX);
    let schedule = setup.schedule.check(&setup.family, prefix);
    let family = verify_family(&setup.family, config.verify_samples, config.seed);
    let passed = schedule.iter().all(|c| c.passed) && family.passed();
    Ok(Validation { passed, schedule, family })
}

/// Runs once per worker count; fails if any final iterate or history differs
/// from the first row's.
pub fn bench(config: &RunConfig, workers: &[usize]) -> Result<Vec<BenchRow>> {
    if workers.is_empty() {
        return Err(Error::InvalidArgument("bench needs at least one worker count".into()));
    }
    let mut rows: Vec<BenchRow> = Vec::with_capacity(workers.len());
    let mut first: Option<Report> = None;
    for &w in workers {
        let setup = config.build(Some(w))?;
        let report = Solver::new(&setup.family, &setup.schedule, &setup.solver)?.solve(&setup.x0)?;
        let wall_ms = report.wall_time.as_secs_f64() * 1e3;
        if let Some(base) = &first {
            if !report.same_values(base) {
                return Err(Error::Determinism(format!(
                    "workers = {w} gave x = {:?}, workers = {} gave x = {:?}",
                    report.x.as_slice(),
                    workers[0],
                    base.x.as_slice()
                )));
            }
        }
        let base_ms = rows.first().map_or(wall_ms, |r| r.wall_ms);
        rows.push(BenchRow {
            workers: w,
            wall_ms,
            phase1_ms: report.phase_totals.phase1_ms,
            phase3_ms: report.phase_totals.phase3_ms,
            project_ms: report.phase_totals.project_ms,
            speedup: if rows.is_empty() { 1.0 } else { base_ms / wall_ms },
            iterations: report.iterations,
            x: report.x.clone(),
        });
        first.get_or_insert(report);
    }
    Ok(rows)
}

fn load(path: &Path) -> std::result::Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(Failure::config)
}

fn print_json(value: &impl Serialize) {
    use std::io::Write;
    // a closed pipe (e.g. `| head`) is not an error for us
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn dispatch(cli: Cli) -> std::result::Result<i32, Failure> {
    match cli.command {
        Command::Run { config, workers, out, history } => {
            let mut cfg = load(&config)?;
            if let Some(h) = history {
                cfg.record_history = matches!(h, OnOff::On);
            }
            let outcome = run(&cfg, workers, out.as_deref())?;
            print_json(&outcome.summary);
            Ok(EXIT_OK)
        }
        Command::Validate { config, out } => {
            let cfg = load(&config)?;
            let v = validate(&cfg).map_err(Failure::config)?;
            if let Some(dir) = out.or(cfg.output.dir.clone()) {
                output::write_json(&dir.join("validation.json"), &v.digest()).map_err(Failure::solver)?;
            }
            print_json(&v.digest());
            Ok(if v.passed { EXIT_OK } else { EXIT_VALIDATION_FAILURE })
        }
        Command::Bench { config, workers, out } => {
            let cfg = load(&config)?;
            // config errors surface before any timing run
            cfg.build(None).map_err(Failure::config)?;
            let rows = bench(&cfg, &workers).map_err(|e| match e {
                Error::InvalidArgument(_) | Error::InvalidConfig(_) => Failure::config(e),
                e => Failure::solver(e),
            })?;
            if let Some(dir) = out.or(cfg.output.dir.clone()) {
                output::write_file(&dir.join("bench.csv"), |f| output::write_bench(&rows, f))
                    .map_err(Failure::solver)?;
            }
            print_json(&rows);
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", f.diagnostic());
            f.code
        }
    }
}
