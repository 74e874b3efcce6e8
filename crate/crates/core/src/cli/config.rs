//! JSON run configuration and its translation into library objects.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BaseSet, ProjectionOptions, Vector};
use crate::operators::{
    Bifunction, GepPair, IsmOperator, KSequence, ProblemFamily, PseudoContraction, ScalarFn, SelfMap,
    DEFAULT_RESOLVENT_TOL,
};
use crate::problems::{self, build_section4, known_solution_set, Corollary, Parts};
use crate::solver::{EpsilonVariant, Mode, ParamSchedule, Sequence, SolverConfig, StopRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// Starting point; defaults to `1` in every coordinate, clamped into the base set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub schedule: ScheduleOverrides,
    /// Defaults to the preset's mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_variant: Option<EpsilonVariant>,
    #[serde(default)]
    pub stop: StopSpec,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget_secs: Option<f64>,
    #[serde(default)]
    pub projection: ProjectionOptions,
    #[serde(default = "default_resolvent_tol")]
    pub resolvent_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_true")]
    pub record_history: bool,
    /// Seed for the sampled audits of `validate`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_verify_samples")]
    pub verify_samples: usize,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_max_iter() -> usize {
    1000
}
fn default_resolvent_tol() -> f64 {
    DEFAULT_RESOLVENT_TOL
}
fn default_true() -> bool {
    true
}
fn default_verify_samples() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Section4 { n_ops: usize, n_maps: usize },
    Cor1 { parts: PartsSpec },
    Cor2 { parts: PartsSpec },
    Cor3 { parts: PartsSpec },
    Cor4 { parts: PartsSpec },
    Cor5 { parts: PartsSpec },
    Inline { base: BaseSpec, geps: Vec<GepSpec>, maps: Vec<MapSpec> },
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Section4 { .. } => "section4",
            ProblemSpec::Cor1 { .. } => "cor1",
            ProblemSpec::Cor2 { .. } => "cor2",
            ProblemSpec::Cor3 { .. } => "cor3",
            ProblemSpec::Cor4 { .. } => "cor4",
            ProblemSpec::Cor5 { .. } => "cor5",
            ProblemSpec::Inline { .. } => "inline",
        }
    }
}

/// Members for a corollary preset. `section4` seeds the lists with the
/// benchmark members; the explicit lists are appended.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section4: Option<Section4Size>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseSpec>,
    #[serde(default)]
    pub bifunctions: Vec<BifunctionSpec>,
    #[serde(default)]
    pub operators: Vec<OperatorSpec>,
    #[serde(default)]
    pub maps: Vec<MapSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section4Size {
    pub n_ops: usize,
    pub n_maps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    Interval { lo: f64, hi: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GepSpec {
    pub f: BifunctionSpec,
    pub a: OperatorSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BifunctionSpec {
    Zero,
    ScalarMonotone { b: ScalarFnSpec, lo: f64, hi: f64 },
    /// The benchmark kink at `xi` on `[-1, 1]`.
    Section4 { xi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFnSpec {
    Zero,
    Affine { slope: f64, intercept: f64 },
    TanKink { xi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Zero,
    /// `scale·(x - shift)`.
    Affine { scale: f64, shift: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub map: SelfMapSpec,
    #[serde(default)]
    pub kappa: f64,
    /// Present for asymptotic maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<KSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelfMapSpec {
    Identity,
    Scale { factor: f64 },
    Quadratic { c: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KSpec {
    One,
    /// `1 + amplitude / (n + 1)`.
    Harmonic { amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    Constant { value: f64 },
    /// `1 / (n + shift)`.
    Reciprocal { shift: f64 },
}

impl SequenceSpec {
    fn build(&self) -> Sequence {
        match self {
            SequenceSpec::Constant { value } => Sequence::Constant(*value),
            SequenceSpec::Reciprocal { shift } => Sequence::Reciprocal { shift: *shift },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<SequenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<SequenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<SequenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
}

/// Stopping rule; tolerances are `10^-tol_exponent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum StopSpec {
    /// `reference` defaults to `P_F(x0)` for families with a known solution set.
    TolToReference {
        tol_exponent: i32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<Vec<f64>>,
    },
    Residual { tol_exponent: i32 },
    #[default]
    MaxIter,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for artifacts; nothing is written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_summary")]
    pub summary: String,
    #[serde(default = "default_history")]
    pub history: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, summary: default_summary(), history: default_history() }
    }
}

fn default_summary() -> String {
    "summary.json".into()
}
fn default_history() -> String {
    "history.csv".into()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Resolves the configuration into a runnable setup. `workers` overrides
    /// the configured count.
    pub fn build(&self, workers: Option<usize>) -> Result<Setup> {
        let built = self.problem.build()?;
        let family = built.family;

        let mut schedule = built.schedule.unwrap_or_else(|| default_schedule(&family));
        if let Some(beta) = built.beta {
            schedule.beta = beta;
        }
        self.schedule.apply(&mut schedule);

        let x0 = match &self.x0 {
            Some(v) => Vector::new(v.clone()).map_err(config_err)?,
            None => family.base.project(&Vector::from_raw(vec![1.0; family.dim()])),
        };
        x0.ensure_dim(family.dim(), "x0").map_err(config_err)?;

        let stop = match &self.stop {
            StopSpec::MaxIter => StopRule::MaxIter,
            StopSpec::Residual { tol_exponent } => StopRule::Residual { tol: tol_from(*tol_exponent) },
            StopSpec::TolToReference { tol_exponent, reference } => {
                let reference = match reference {
                    Some(v) => Vector::new(v.clone()).map_err(config_err)?,
                    None => known_solution_set(&family)
                        .map_err(|_| {
                            Error::InvalidConfig(
                                "tol_to_reference needs an explicit reference for this problem".into(),
                            )
                        })?
                        .project(&x0),
                };
                StopRule::ToReference { reference, tol: tol_from(*tol_exponent) }
            }
        };

        let time_budget = match self.time_budget_secs {
            None => None,
            Some(s) if s >= 0.0 && s.is_finite() => Some(Duration::from_secs_f64(s)),
            Some(s) => return Err(Error::InvalidConfig(format!("time_budget_secs must be >= 0, got {s}"))),
        };
        let workers = workers.or(self.workers).unwrap_or(1);
        if workers == 0 {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        let solver = SolverConfig {
            mode: self.mode.unwrap_or(built.mode),
            epsilon_variant: self.epsilon_variant.unwrap_or(built.epsilon_variant),
            stop,
            max_iter: self.max_iter,
            time_budget,
            projection: self.projection,
            resolvent_tol: self.resolvent_tol,
            workers,
            record_history: self.record_history,
        };
        Ok(Setup { family, schedule, solver, x0 })
    }
}

/// Everything a run needs.
#[derive(Clone, Debug)]
pub struct Setup {
    pub family: ProblemFamily,
    pub schedule: ParamSchedule,
    pub solver: SolverConfig,
    pub x0: Vector,
}

fn tol_from(exponent: i32) -> f64 {
    10f64.powi(-exponent)
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) | Error::InvalidModel(m) => Error::InvalidConfig(m),
        other => other,
    }
}

/// `alpha_n = 1/(n+2)`, `beta_n = kappa`, `b = (1+kappa)/2`, `omega = 1`, and
/// `r_n = min(1, alpha)` (so `r_n < 2 alpha`).
fn default_schedule(family: &ProblemFamily) -> ParamSchedule {
    let r = family.alpha.min(1.0);
    ParamSchedule {
        alpha: Sequence::Reciprocal { shift: 2.0 },
        beta: Sequence::Constant(family.kappa),
        r: Sequence::Constant(r),
        omega: 1.0,
        b: 0.5 * (1.0 + family.kappa),
        d: r,
        e: r,
    }
}

impl ScheduleOverrides {
    fn apply(&self, s: &mut ParamSchedule) {
        if let Some(a) = &self.alpha {
            s.alpha = a.build();
        }
        if let Some(b) = &self.beta {
            s.beta = b.build();
        }
        if let Some(r) = &self.r {
            s.r = r.build();
            // bounds follow a constant step unless given
            if let SequenceSpec::Constant { value } = r {
                s.d = *value;
                s.e = *value;
            }
        }
        if let Some(v) = self.omega {
            s.omega = v;
        }
        if let Some(v) = self.b {
            s.b = v;
        }
        if let Some(v) = self.d {
            s.d = v;
        }
        if let Some(v) = self.e {
            s.e = v;
        }
    }
}

struct Built {
    family: ProblemFamily,
    schedule: Option<ParamSchedule>,
    mode: Mode,
    epsilon_variant: EpsilonVariant,
    beta: Option<Sequence>,
}

impl ProblemSpec {
    fn build(&self) -> Result<Built> {
        let corollary = |c: Corollary, parts: &PartsSpec| -> Result<Built> {
            let preset = problems::preset(c, parts.build()?).map_err(config_err)?;
            Ok(Built {
                family: preset.family,
                schedule: None,
                mode: preset.mode,
                epsilon_variant: preset.epsilon_variant,
                beta: preset.beta,
            })
        };
        match self {
            ProblemSpec::Section4 { n_ops, n_maps } => {
                let p = build_section4(*n_ops, *n_maps).map_err(config_err)?;
                Ok(Built {
                    family: p.family,
                    schedule: Some(p.schedule),
                    mode: p.mode,
                    epsilon_variant: EpsilonVariant::Standard,
                    beta: None,
                })
            }
            ProblemSpec::Cor1 { parts } => corollary(Corollary::Cor1, parts),
            ProblemSpec::Cor2 { parts } => corollary(Corollary::Cor2, parts),
            ProblemSpec::Cor3 { parts } => corollary(Corollary::Cor3, parts),
            ProblemSpec::Cor4 { parts } => corollary(Corollary::Cor4, parts),
            ProblemSpec::Cor5 { parts } => corollary(Corollary::Cor5, parts),
            ProblemSpec::Inline { base, geps, maps } => {
                let geps = geps
                    .iter()
                    .map(|g| Ok(GepPair { f: g.f.build()?, a: g.a.build()? }))
                    .collect::<Result<Vec<_>>>()?;
                let maps = maps.iter().map(MapSpec::build).collect::<Result<Vec<_>>>()?;
                let family = ProblemFamily::new(base.build()?, geps, maps).map_err(config_err)?;
                let mode = if family.has_asymptotic_maps() { Mode::Algorithm1 } else { Mode::Algorithm2 };
                Ok(Built { family, schedule: None, mode, epsilon_variant: EpsilonVariant::Standard, beta: None })
            }
        }
    }
}

impl PartsSpec {
    fn build(&self) -> Result<Parts> {
        let mut parts = match (&self.section4, &self.base) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig("parts: give either section4 or base, not both".into()))
            }
            (Some(s), None) => Parts::section4(s.n_ops, s.n_maps).map_err(config_err)?,
            (None, Some(b)) => Parts { base: b.build()?, bifunctions: vec![], operators: vec![], maps: vec![] },
            (None, None) => return Err(Error::InvalidConfig("parts: need section4 or base".into())),
        };
        for f in &self.bifunctions {
            parts.bifunctions.push(f.build()?);
        }
        for a in &self.operators {
            parts.operators.push(a.build()?);
        }
        for m in &self.maps {
            parts.maps.push(m.build()?);
        }
        Ok(parts)
    }
}

impl BaseSpec {
    fn build(&self) -> Result<BaseSet> {
        let vec = |v: &Vec<f64>| Vector::new(v.clone()).map_err(config_err);
        match self {
            BaseSpec::Interval { lo, hi } => BaseSet::interval(*lo, *hi),
            BaseSpec::Box { lo, hi } => BaseSet::boxed(vec(lo)?, vec(hi)?),
            BaseSpec::Ball { center, radius } => BaseSet::ball(vec(center)?, *radius),
        }
        .map_err(config_err)
    }
}

impl BifunctionSpec {
    fn build(&self) -> Result<Bifunction> {
        match self {
            BifunctionSpec::Zero => Ok(Bifunction::Zero),
            BifunctionSpec::ScalarMonotone { b, lo, hi } => {
                let b = match b {
                    ScalarFnSpec::Zero => ScalarFn::Zero,
                    ScalarFnSpec::Affine { slope, intercept } => ScalarFn::Affine { slope: *slope, intercept: *intercept },
                    ScalarFnSpec::TanKink { xi } => ScalarFn::TanKink { xi: *xi },
                };
                Bifunction::scalar_monotone(b, *lo, *hi).map_err(config_err)
            }
            BifunctionSpec::Section4 { xi } => Ok(Bifunction::tan_kink(*xi)),
        }
    }
}

impl OperatorSpec {
    fn build(&self) -> Result<IsmOperator> {
        match self {
            OperatorSpec::Zero => Ok(IsmOperator::zero()),
            OperatorSpec::Affine { scale, shift } => {
                IsmOperator::affine(*scale, Vector::new(shift.clone()).map_err(config_err)?).map_err(config_err)
            }
        }
    }
}

impl MapSpec {
    fn build(&self) -> Result<PseudoContraction> {
        let map = match self.map {
            SelfMapSpec::Identity => SelfMap::Identity,
            SelfMapSpec::Scale { factor } => SelfMap::Scale(factor),
            SelfMapSpec::Quadratic { c } => SelfMap::Quadratic { c },
        };
        match &self.k {
            None => PseudoContraction::new(map, self.kappa),
            Some(KSpec::One) => PseudoContraction::asymptotic(map, self.kappa, KSequence::One),
            Some(KSpec::Harmonic { amplitude }) => {
                PseudoContraction::asymptotic(map, self.kappa, KSequence::Harmonic { amplitude: *amplitude })
            }
        }
        .map_err(config_err)
    }
}
