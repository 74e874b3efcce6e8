//! The outer hybrid-projection loop.
//!
//! Each iteration runs two data-parallel phases (resolvents over the
//! equilibrium problems, relaxed map steps over the self-maps), each reduced
//! to its furthest point from `x_n` in index order, then appends one cut to
//! `C_n` and projects the anchor `x_0` onto the result. The reductions pick
//! the largest distance with ties going to the smallest index, so results do
//! not depend on the number of workers.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    halfspace_from_iterate, project_nested, Halfspace, NestedSet, ProjectionOptions, Vector,
    DEFAULT_CONTAINS_TOL,
};
use crate::operators::{apply_power, resolvent, ProblemFamily, SeqClosure, DEFAULT_RESOLVENT_TOL};

/// Number of schedule terms checked against conditions (a)-(c).
pub const SCHEDULE_AUDIT_PREFIX: usize = 100_000;

/// A real sequence indexed by the iteration counter.
#[derive(Clone)]
pub enum Sequence {
    Constant(f64),
    /// `1 / (n + shift)`.
    Reciprocal { shift: f64 },
    Custom(SeqClosure),
}

impl Sequence {
    pub fn custom(f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        Sequence::Custom(SeqClosure(Arc::new(f)))
    }

    pub fn value(&self, n: usize) -> f64 {
        match self {
            Sequence::Constant(c) => *c,
            Sequence::Reciprocal { shift } => 1.0 / (n as f64 + shift),
            Sequence::Custom(f) => (f.0)(n),
        }
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sequence::Constant(c) => write!(f, "Constant({c})"),
            Sequence::Reciprocal { shift } => write!(f, "Reciprocal {{ shift: {shift} }}"),
            Sequence::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Control sequences `alpha_n`, `beta_n`, `r_n` with the bounds `b`, `d`, `e`
/// and the radius `omega` of a ball containing the solution set.
#[derive(Clone, Debug)]
pub struct ParamSchedule {
    pub alpha: Sequence,
    pub beta: Sequence,
    pub r: Sequence,
    pub omega: f64,
    pub b: f64,
    pub d: f64,
    pub e: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `0 < alpha_n < 1`, `lim sup alpha_n < 1`.
    A,
    /// `kappa <= beta_n <= b < 1`, `b > kappa`.
    B,
    /// `0 < d <= r_n <= e < 2 alpha`.
    C,
    /// `k_n >= 1`, `omega >= 0`.
    K,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub passed: bool,
    pub detail: String,
}

impl ParamSchedule {
    /// Checks the admissibility conditions on the first `prefix` terms.
    pub fn check(&self, problem: &ProblemFamily, prefix: usize) -> Vec<ConditionCheck> {
        let prefix = prefix.max(1);
        let mut out = Vec::with_capacity(4);

        let mut a_fail = None;
        let mut tail_sup: f64 = 0.0;
        for n in 0..prefix {
            let a = self.alpha.value(n);
            if !(a > 0.0 && a < 1.0) {
                a_fail = Some(format!("alpha_{n} = {a} outside (0, 1)"));
                break;
            }
            if n >= prefix / 2 {
                tail_sup = tail_sup.max(a);
            }
        }
        if a_fail.is_none() && tail_sup > 1.0 - 1e-6 {
            a_fail = Some(format!("tail supremum of alpha_n is {tail_sup}, not bounded away from 1"));
        }
        out.push(verdict(Condition::A, a_fail));

        let kappa = problem.kappa;
        let mut b_fail = None;
        if !(self.b > kappa && self.b < 1.0) {
            b_fail = Some(format!("b = {} must lie in (kappa, 1) with kappa = {kappa}", self.b));
        } else {
            for n in 0..prefix {
                let beta = self.beta.value(n);
                if !(kappa <= beta && beta <= self.b) {
                    b_fail = Some(format!(
                        "beta_{n} = {beta} outside [kappa, b] = [{kappa}, {}]",
                        self.b
                    ));
                    break;
                }
            }
        }
        out.push(verdict(Condition::B, b_fail));

        let two_alpha = 2.0 * problem.alpha;
        let mut c_fail = None;
        if !(0.0 < self.d && self.d <= self.e && self.e < two_alpha) {
            c_fail = Some(format!(
                "need 0 < d <= e < 2 alpha, got d = {}, e = {}, 2 alpha = {two_alpha}",
                self.d, self.e
            ));
        } else {
            for n in 0..prefix {
                let r = self.r.value(n);
                if !(self.d <= r && r <= self.e) {
                    c_fail = Some(format!("r_{n} = {r} outside [d, e] = [{}, {}]", self.d, self.e));
                    break;
                }
            }
        }
        out.push(verdict(Condition::C, c_fail));

        let mut k_fail = None;
        if !(self.omega >= 0.0) {
            k_fail = Some(format!("omega = {} must be >= 0", self.omega));
        } else if problem.has_asymptotic_maps() {
            for n in 0..prefix {
                let k = problem.k_n(n);
                if !(k >= 1.0) {
                    k_fail = Some(format!("k_{n} = {k} < 1"));
                    break;
                }
            }
        }
        out.push(verdict(Condition::K, k_fail));
        out
    }
}

fn verdict(condition: Condition, failure: Option<String>) -> ConditionCheck {
    match failure {
        None => ConditionCheck { condition, passed: true, detail: "ok".into() },
        Some(detail) => ConditionCheck { condition, passed: false, detail },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Asymptotic maps, powers `S^n`, relaxed cuts.
    Algorithm1,
    /// Plain maps, `S` only, exact cuts.
    Algorithm2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonVariant {
    /// `(k_n - 1)(||x_n|| + omega)^2`
    Standard,
    /// `(k_n^2 - 1)(||x_n|| + omega)^2`
    Squared,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StopRule {
    /// Stop once `||x_{n+1} - reference|| <= tol`.
    ToReference { reference: Vector, tol: f64 },
    /// Stop once all three residual maxima are `<= tol`.
    Residual { tol: f64 },
    /// Run until the iteration budget.
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub mode: Mode,
    pub epsilon_variant: EpsilonVariant,
    pub stop: StopRule,
    pub max_iter: usize,
    pub time_budget: Option<Duration>,
    pub projection: ProjectionOptions,
    pub resolvent_tol: f64,
    pub workers: usize,
    pub record_history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: Mode::Algorithm1,
            epsilon_variant: EpsilonVariant::Standard,
            stop: StopRule::MaxIter,
            max_iter: 1000,
            time_budget: None,
            projection: ProjectionOptions::default(),
            resolvent_tol: DEFAULT_RESOLVENT_TOL,
            workers: 1,
            record_history: true,
        }
    }
}

/// The three residual maxima at `x_n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Residuals {
    /// `max_i ||x_n - y_n^i||`
    pub y: f64,
    /// `max_j ||x_n - z_n^j||`
    pub z: f64,
    /// `max_j ||x_n - S_j x_n||`
    pub s: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.y.max(self.z).max(self.s)
    }
}

/// Wall-clock time of each phase in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub phase1_ms: f64,
    pub phase3_ms: f64,
    pub project_ms: f64,
}

impl std::ops::AddAssign for PhaseTimings {
    fn add_assign(&mut self, rhs: Self) {
        self.phase1_ms += rhs.phase1_ms;
        self.phase3_ms += rhs.phase3_ms;
        self.project_ms += rhs.project_ms;
    }
}

/// What one iteration produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Step {
    pub n: usize,
    /// `x_n`
    pub x: Vector,
    pub ybar: Vector,
    pub zbar: Vector,
    pub i_n: Option<usize>,
    pub j_n: Option<usize>,
    pub eps: f64,
    pub residuals: Residuals,
    /// `x_{n+1}`
    pub x_next: Vector,
    pub timings: PhaseTimings,
}

impl Step {
    /// Equality ignoring timings.
    pub fn same_values(&self, other: &Step) -> bool {
        self.n == other.n
            && self.x == other.x
            && self.ybar == other.ybar
            && self.zbar == other.zbar
            && self.i_n == other.i_n
            && self.j_n == other.j_n
            && self.eps.to_bits() == other.eps.to_bits()
            && self.residuals == other.residuals
            && self.x_next == other.x_next
    }
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub n: usize,
    pub x: Vector,
    pub x0: Vector,
    pub nested: NestedSet,
    pub last: Option<Step>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Reference,
    Residual,
    Budget,
    TimeBudget,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Reference => "reference",
            StopReason::Residual => "residual",
            StopReason::Budget => "budget",
            StopReason::TimeBudget => "time_budget",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub x: Vector,
    pub iterations: usize,
    pub stop: StopReason,
    pub history: Vec<Step>,
    pub last_residuals: Option<Residuals>,
    pub cuts: Vec<Halfspace>,
    pub workers: usize,
    pub wall_time: Duration,
    pub phase_totals: PhaseTimings,
}

impl Report {
    /// Equality of everything except timings.
    pub fn same_values(&self, other: &Report) -> bool {
        self.x == other.x
            && self.iterations == other.iterations
            && self.stop == other.stop
            && self.last_residuals == other.last_residuals
            && self.cuts == other.cuts
            && self.history.len() == other.history.len()
            && self.history.iter().zip(&other.history).all(|(a, b)| a.same_values(b))
    }
}

/// `epsilon_n` for the relaxed cut.
pub fn epsilon_n(k_n: f64, x_n: &Vector, omega: f64, variant: EpsilonVariant) -> Result<f64> {
    if !(k_n >= 1.0) {
        return Err(Error::InvalidArgument(format!("k_n must be >= 1, got {k_n}")));
    }
    if !(omega >= 0.0) {
        return Err(Error::InvalidArgument(format!("omega must be >= 0, got {omega}")));
    }
    let radius = x_n.norm() + omega;
    let factor = match variant {
        EpsilonVariant::Standard => k_n - 1.0,
        EpsilonVariant::Squared => k_n * k_n - 1.0,
    };
    Ok(factor * radius * radius)
}

/// Index and value of the candidate furthest from `x`; ties go to the first.
pub fn select_furthest(x: &Vector, candidates: &[Vector]) -> Result<(usize, Vector)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        c.ensure_dim(x.dim(), "candidate")?;
        let d = c.dist_sq(x);
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    let (i, _) = best.ok_or_else(|| Error::InvalidArgument("no candidates".into()))?;
    Ok((i, candidates[i].clone()))
}

/// Residual record of the last completed iteration.
pub fn residuals(state: &SolverState) -> Option<Residuals> {
    state.last.as_ref().map(|s| s.residuals)
}

struct Candidate {
    index: usize,
    dist_sq: f64,
    point: Vector,
    /// `max ||x - S_j x||` over the reduced range (phase 3 only).
    map_residual: f64,
}

type Reduced = std::result::Result<Candidate, (usize, Error)>;

fn further(a: Reduced, b: Reduced) -> Reduced {
    match (a, b) {
        (Ok(a), Ok(b)) => {
            let map_residual = a.map_residual.max(b.map_residual);
            let mut best = if b.dist_sq > a.dist_sq || (b.dist_sq == a.dist_sq && b.index < a.index) {
                b
            } else {
                a
            };
            best.map_residual = map_residual;
            Ok(best)
        }
        (Err(a), Err(b)) => Err(if a.0 <= b.0 { a } else { b }),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

fn candidate(index: usize, x: &Vector, point: Vector, map_residual: f64) -> Reduced {
    if !point.is_finite() {
        return Err((index, Error::InvalidModel(format!("member {index} produced a non-finite point"))));
    }
    Ok(Candidate { index, dist_sq: point.dist_sq(x), point, map_residual })
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// A configured run: problem, schedule, options and a worker pool.
pub struct Solver<'a> {
    problem: &'a ProblemFamily,
    schedule: &'a ParamSchedule,
    config: &'a SolverConfig,
    pool: rayon::ThreadPool,
}

impl<'a> Solver<'a> {
    /// Validates the configuration (conditions on a schedule prefix, mode
    /// requirements) and builds the worker pool.
    pub fn new(problem: &'a ProblemFamily, schedule: &'a ParamSchedule, config: &'a SolverConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        if config.mode == Mode::Algorithm2 && problem.has_asymptotic_maps() {
            return Err(Error::InvalidConfig("algorithm2 requires non-asymptotic maps".into()));
        }
        match &config.stop {
            StopRule::ToReference { reference, tol } => {
                reference.ensure_dim(problem.dim(), "stop reference")?;
                if !(*tol > 0.0) {
                    return Err(Error::InvalidConfig(format!("stop tolerance must be > 0, got {tol}")));
                }
            }
            StopRule::Residual { tol } if !(*tol > 0.0) => {
                return Err(Error::InvalidConfig(format!("stop tolerance must be > 0, got {tol}")));
            }
            _ => {}
        }
        let prefix = config.max_iter.clamp(1, SCHEDULE_AUDIT_PREFIX);
        if let Some(bad) = schedule.check(problem, prefix).into_iter().find(|c| !c.passed) {
            return Err(Error::InvalidConfig(format!("condition ({:?}) violated: {}", bad.condition, bad.detail)));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
        Ok(Solver { problem, schedule, config, pool })
    }

    pub fn init_state(&self, x0: &Vector) -> Result<SolverState> {
        x0.ensure_dim(self.problem.dim(), "x0")?;
        if !x0.is_finite() || !self.problem.base.contains(x0, DEFAULT_CONTAINS_TOL) {
            return Err(Error::InvalidArgument(format!("x0 = {x0:?} is not in the base set")));
        }
        Ok(SolverState {
            n: 0,
            x: x0.clone(),
            x0: x0.clone(),
            nested: NestedSet::new(self.problem.base.clone()),
            last: None,
        })
    }

    /// One outer iteration: `x_n -> x_{n+1}`.
    pub fn iterate(&self, mut state: SolverState) -> Result<SolverState> {
        let n = state.n;
        let problem = self.problem;
        let x = &state.x;
        let r = self.schedule.r.value(n);
        let alpha_n = self.schedule.alpha.value(n);
        let beta_n = self.schedule.beta.value(n);
        let tol = self.config.resolvent_tol;

        let t = Instant::now();
        let (i_n, ybar, res_y) = if problem.geps.is_empty() {
            (None, x.clone(), 0.0)
        } else {
            let best = self
                .pool
                .install(|| {
                    problem
                        .geps
                        .par_iter()
                        .enumerate()
                        .map(|(i, g)| match resolvent(&g.f, &g.a, r, x, &problem.base, tol) {
                            Ok(y) => candidate(i, x, y, 0.0),
                            Err(e) => Err((i, e)),
                        })
                        .reduce_with(further)
                })
                .expect("nonempty")
                .map_err(|(_, e)| e.at_iteration(n))?;
            (Some(best.index), best.point, best.dist_sq.sqrt())
        };
        let phase1 = t.elapsed();

        let t = Instant::now();
        let power = match self.config.mode {
            Mode::Algorithm1 => n,
            Mode::Algorithm2 => 1,
        };
        let relaxed = |s_y: &Vector| x.combine(alpha_n, &ybar.combine(beta_n, s_y, 1.0 - beta_n), 1.0 - alpha_n);
        let (j_n, zbar, res_z, res_s) = if problem.maps.is_empty() {
            let z = relaxed(&ybar);
            let d = z.dist(x);
            (None, z, d, 0.0)
        } else {
            let best = self
                .pool
                .install(|| {
                    problem
                        .maps
                        .par_iter()
                        .enumerate()
                        .map(|(j, s)| {
                            let z = relaxed(&apply_power(s, power, &ybar));
                            let res = s.map.apply(x).dist(x);
                            candidate(j, x, z, res)
                        })
                        .reduce_with(further)
                })
                .expect("nonempty")
                .map_err(|(_, e)| e.at_iteration(n))?;
            (Some(best.index), best.point, best.dist_sq.sqrt(), best.map_residual)
        };
        let phase3 = t.elapsed();

        let t = Instant::now();
        let eps = match self.config.mode {
            Mode::Algorithm2 => 0.0,
            Mode::Algorithm1 => epsilon_n(problem.k_n(n), x, self.schedule.omega, self.config.epsilon_variant)
                .map_err(|e| e.at_iteration(n))?,
        };
        let cut = halfspace_from_iterate(x, &zbar, eps).map_err(|e| e.at_iteration(n))?;
        state.nested.push(cut)?;
        let opts = self.config.projection;
        let x_next = project_nested(&state.nested, &state.x0, opts.tol, opts.max_sweeps)
            .map_err(|e| e.at_iteration(n))?;
        let project = t.elapsed();

        let step = Step {
            n,
            x: std::mem::replace(&mut state.x, x_next.clone()),
            ybar,
            zbar,
            i_n,
            j_n,
            eps,
            residuals: Residuals { y: res_y, z: res_z, s: res_s },
            x_next,
            timings: PhaseTimings { phase1_ms: ms(phase1), phase3_ms: ms(phase3), project_ms: ms(project) },
        };
        state.last = Some(step);
        state.n = n + 1;
        Ok(state)
    }

    pub fn solve(&self, x0: &Vector) -> Result<Report> {
        self.solve_observed(x0, |_| {})
    }

    /// Like [`Solver::solve`], calling `observer` after every iteration.
    pub fn solve_observed(&self, x0: &Vector, mut observer: impl FnMut(&SolverState)) -> Result<Report> {
        let started = Instant::now();
        let mut state = self.init_state(x0)?;
        let mut history = Vec::new();
        let mut totals = PhaseTimings::default();

        let stop = loop {
            if state.n >= self.config.max_iter {
                break StopReason::Budget;
            }
            if self.config.time_budget.is_some_and(|b| started.elapsed() >= b) {
                break StopReason::TimeBudget;
            }
            state = self.iterate(state)?;
            observer(&state);
            let step = state.last.as_ref().expect("iteration recorded");
            totals += step.timings;
            if self.config.record_history {
                history.push(step.clone());
            }
            let done = match &self.config.stop {
                StopRule::ToReference { reference, tol } => {
                    (state.x.dist(reference) <= *tol).then_some(StopReason::Reference)
                }
                StopRule::Residual { tol } => (step.residuals.max() <= *tol).then_some(StopReason::Residual),
                StopRule::MaxIter => None,
            };
            if let Some(reason) = done {
                break reason;
            }
        };

        Ok(Report {
            x: state.x,
            iterations: state.n,
            stop,
            history,
            last_residuals: state.last.map(|s| s.residuals),
            cuts: state.nested.into_cuts(),
            workers: self.config.workers,
            wall_time: started.elapsed(),
            phase_totals: totals,
        })
    }
}

/// Runs the configured algorithm from `x0` until the stop rule fires.
pub fn solve(problem: &ProblemFamily, schedule: &ParamSchedule, config: &SolverConfig, x0: &Vector) -> Result<Report> {
    Solver::new(problem, schedule, config)?.solve(x0)
}

/// One iteration without a long-lived [`Solver`]; builds a pool per call.
pub fn iterate(
    state: SolverState,
    problem: &ProblemFamily,
    schedule: &ParamSchedule,
    config: &SolverConfig,
) -> Result<SolverState> {
    Solver::new(problem, schedule, config)?.iterate(state)
}
