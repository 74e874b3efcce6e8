//! Bifunction resolvents, inverse-strongly-monotone operators and
//! (asymptotically) strictly pseudocontractive self-maps.
//!
//! Every evaluation here is a pure function of its inputs so the solver can
//! call members concurrently. Custom closures must be reentrant.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{project_base, BaseSet, Vector};

/// Default bracket width for [`resolvent_scalar`].
pub const DEFAULT_RESOLVENT_TOL: f64 = 1e-12;
const MAX_HALVINGS: usize = 200;
/// Violations above this fail an audit.
pub const AUDIT_TOL: f64 = 1e-9;

type RealFn = dyn Fn(f64) -> f64 + Send + Sync;
type MapFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type OracleFn = dyn Fn(f64, &Vector) -> Vector + Send + Sync;
type SeqFn = dyn Fn(usize) -> f64 + Send + Sync;

macro_rules! opaque_debug {
    ($name:ident) => {
        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(concat!(stringify!($name), "(..)"))
            }
        }
    };
}

/// A closure `R -> R`.
#[derive(Clone)]
pub struct RealClosure(pub Arc<RealFn>);
opaque_debug!(RealClosure);

/// A closure `R^d -> R^d`.
#[derive(Clone)]
pub struct VectorMap(pub Arc<MapFn>);
opaque_debug!(VectorMap);

impl VectorMap {
    pub fn new(f: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        VectorMap(Arc::new(f))
    }
}

/// Resolvent oracle `(r, w) -> T_r^f(w)`.
#[derive(Clone)]
pub struct ResolventOracle(pub Arc<OracleFn>);
opaque_debug!(ResolventOracle);

/// Index sequence `n -> value`.
#[derive(Clone)]
pub struct SeqClosure(pub Arc<SeqFn>);
opaque_debug!(SeqClosure);

/// Nondecreasing scalar function `B` defining `f(x, y) = B(x)(y - x)`.
#[derive(Clone, Debug)]
pub enum ScalarFn {
    Zero,
    /// `slope·z + intercept`, `slope >= 0`.
    Affine { slope: f64, intercept: f64 },
    /// `0` left of `xi`, `tan(z - xi) - z + xi` on `[xi, xi + pi/2)` and
    /// `+inf` from the pole on (the maximal monotone branch).
    TanKink { xi: f64 },
    Custom(RealClosure),
}

impl ScalarFn {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn::Custom(RealClosure(Arc::new(f)))
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Affine { slope, intercept } => slope * z + intercept,
            ScalarFn::TanKink { xi } => {
                let t = z - xi;
                if t < 0.0 {
                    0.0
                } else if t < std::f64::consts::FRAC_PI_2 {
                    t.tan() - t
                } else {
                    f64::INFINITY
                }
            }
            ScalarFn::Custom(f) => (f.0)(z),
        }
    }
}

/// `f(x, y) = B(x)(y - x)` on the interval `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct ScalarMonotone {
    pub b: ScalarFn,
    pub lo: f64,
    pub hi: f64,
}

const MONOTONE_SPOT_CHECKS: usize = 257;

impl ScalarMonotone {
    /// Rejects an empty interval or a `B` seen decreasing on an evenly spaced grid.
    pub fn new(b: ScalarFn, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad interval [{lo}, {hi}]")));
        }
        if let ScalarFn::Affine { slope, .. } = b {
            if slope < 0.0 {
                return Err(Error::InvalidModel(format!("affine B with negative slope {slope}")));
            }
        }
        let step = (hi - lo) / (MONOTONE_SPOT_CHECKS - 1) as f64;
        let mut prev = b.eval(lo);
        for k in 1..MONOTONE_SPOT_CHECKS {
            let z = lo + k as f64 * step;
            let cur = b.eval(z);
            if !(cur >= prev) {
                return Err(Error::InvalidModel(format!(
                    "B decreases near z = {z}: {prev} -> {cur}"
                )));
            }
            prev = cur;
        }
        Ok(ScalarMonotone { b, lo, hi })
    }
}

/// An equilibrium bifunction, represented through its resolvent.
/// Conditions (A1)-(A4) hold by construction for the built-in variants.
#[derive(Clone, Debug)]
pub enum Bifunction {
    Zero,
    ScalarMonotone(ScalarMonotone),
    Custom(ResolventOracle),
}

impl Bifunction {
    pub fn scalar_monotone(b: ScalarFn, lo: f64, hi: f64) -> Result<Self> {
        Ok(Bifunction::ScalarMonotone(ScalarMonotone::new(b, lo, hi)?))
    }

    /// The bifunction `B(x)(y - x)` with the kinked tangent `B` on `[-1, 1]`.
    pub fn tan_kink(xi: f64) -> Self {
        Bifunction::ScalarMonotone(ScalarMonotone { b: ScalarFn::TanKink { xi }, lo: -1.0, hi: 1.0 })
    }

    pub fn custom(f: impl Fn(f64, &Vector) -> Vector + Send + Sync + 'static) -> Self {
        Bifunction::Custom(ResolventOracle(Arc::new(f)))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Bifunction::Zero)
    }
}

/// Operator map of an [`IsmOperator`].
#[derive(Clone, Debug)]
pub enum IsmMap {
    Zero,
    /// `scale·(x - shift)`.
    Affine { scale: f64, shift: Vector },
    Custom(VectorMap),
}

/// An `alpha`-inverse-strongly-monotone operator.
#[derive(Clone, Debug)]
pub struct IsmOperator {
    pub map: IsmMap,
    /// `+inf` for the zero operator.
    pub alpha: f64,
}

impl IsmOperator {
    pub fn zero() -> Self {
        IsmOperator { map: IsmMap::Zero, alpha: f64::INFINITY }
    }

    /// `scale·(x - shift)`, which is `1/scale`-ISM.
    pub fn affine(scale: f64, shift: Vector) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("affine scale must be > 0, got {scale}")));
        }
        Ok(IsmOperator { map: IsmMap::Affine { scale, shift }, alpha: 1.0 / scale })
    }

    pub fn custom(alpha: f64, f: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("ISM modulus must be > 0, got {alpha}")));
        }
        Ok(IsmOperator { map: IsmMap::Custom(VectorMap::new(f)), alpha })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.map, IsmMap::Zero)
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        match &self.map {
            IsmMap::Zero => Vector::zeros(x.dim()),
            IsmMap::Affine { scale, shift } => &(x - shift) * *scale,
            IsmMap::Custom(f) => (f.0)(x),
        }
    }

    /// `x - r·A(x)`.
    pub fn forward_step(&self, r: f64, x: &Vector) -> Vector {
        match &self.map {
            IsmMap::Zero => x.clone(),
            _ => x.combine(1.0, &self.apply(x), -r),
        }
    }
}

/// Self-map of the base set.
#[derive(Clone, Debug)]
pub enum SelfMap {
    Identity,
    /// `factor·x`.
    Scale(f64),
    /// Coordinatewise `x` for `x < 0`, `x - c·x^2` for `x >= 0`.
    Quadratic { c: f64 },
    Custom(VectorMap),
}

impl SelfMap {
    pub fn apply(&self, x: &Vector) -> Vector {
        match self {
            SelfMap::Identity => x.clone(),
            SelfMap::Scale(f) => x * *f,
            SelfMap::Quadratic { c } => Vector::from_raw(
                x.as_slice().iter().map(|&v| if v < 0.0 { v } else { v - c * v * v }).collect(),
            ),
            SelfMap::Custom(f) => (f.0)(x),
        }
    }
}

/// The sequence `k_n >= 1`, `k_n -> 1`.
#[derive(Clone, Debug)]
pub enum KSequence {
    One,
    /// `1 + amplitude/(n + 1)`.
    Harmonic { amplitude: f64 },
    Squared(Box<KSequence>),
    Custom(SeqClosure),
}

impl KSequence {
    pub fn value(&self, n: usize) -> f64 {
        match self {
            KSequence::One => 1.0,
            KSequence::Harmonic { amplitude } => 1.0 + amplitude / (n as f64 + 1.0),
            KSequence::Squared(inner) => {
                let k = inner.value(n);
                k * k
            }
            KSequence::Custom(f) => (f.0)(n),
        }
    }

    pub fn is_one(&self) -> bool {
        matches!(self, KSequence::One)
    }
}

/// An (asymptotically) `kappa`-strictly pseudocontractive self-map.
#[derive(Clone, Debug)]
pub struct PseudoContraction {
    pub map: SelfMap,
    pub kappa: f64,
    pub asymptotic: bool,
    pub k: KSequence,
}

impl PseudoContraction {
    pub fn new(map: SelfMap, kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(PseudoContraction { map, kappa, asymptotic: false, k: KSequence::One })
    }

    pub fn asymptotic(map: SelfMap, kappa: f64, k: KSequence) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(PseudoContraction { map, kappa, asymptotic: true, k })
    }

    pub fn identity() -> Self {
        PseudoContraction { map: SelfMap::Identity, kappa: 0.0, asymptotic: false, k: KSequence::One }
    }

    pub fn k_n(&self, n: usize) -> f64 {
        if self.asymptotic {
            self.k.value(n)
        } else {
            1.0
        }
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::InvalidArgument(format!("kappa must lie in [0, 1), got {kappa}")));
    }
    Ok(())
}

/// One generalized equilibrium problem: bifunction plus operator.
#[derive(Clone, Debug)]
pub struct GepPair {
    pub f: Bifunction,
    pub a: IsmOperator,
}

/// Where a family came from; built-in families have known solution sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FamilyOrigin {
    Section4 { n_ops: usize, n_maps: usize },
    Custom,
}

/// The `N` equilibrium problems and `M` self-maps, with their common constants.
#[derive(Clone, Debug)]
pub struct ProblemFamily {
    pub base: BaseSet,
    pub geps: Vec<GepPair>,
    pub maps: Vec<PseudoContraction>,
    /// `min_i alpha_i` (`+inf` when every operator is zero).
    pub alpha: f64,
    /// `max_j kappa_j`.
    pub kappa: f64,
    pub origin: FamilyOrigin,
    has_asymptotic: bool,
}

impl ProblemFamily {
    pub fn new(base: BaseSet, geps: Vec<GepPair>, maps: Vec<PseudoContraction>) -> Result<Self> {
        if geps.is_empty() && maps.is_empty() {
            return Err(Error::InvalidArgument("a family needs at least one problem or map".into()));
        }
        let alpha = geps.iter().map(|g| g.a.alpha).fold(f64::INFINITY, f64::min);
        let kappa = maps.iter().map(|s| s.kappa).fold(0.0, f64::max);
        let has_asymptotic = maps.iter().any(|s| s.asymptotic);
        Ok(ProblemFamily { base, geps, maps, alpha, kappa, origin: FamilyOrigin::Custom, has_asymptotic })
    }

    pub fn with_origin(mut self, origin: FamilyOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Common `k_n = max_j k_n^j`.
    pub fn k_n(&self, n: usize) -> f64 {
        if !self.has_asymptotic {
            return 1.0;
        }
        self.maps.iter().map(|s| s.k_n(n)).fold(1.0, f64::max)
    }

    pub fn has_asymptotic_maps(&self) -> bool {
        self.has_asymptotic
    }

    pub fn has_nonzero_operator(&self) -> bool {
        self.geps.iter().any(|g| !g.a.is_zero())
    }
}

/// `T_r^f(x - r·A(x))`.
pub fn resolvent(
    f: &Bifunction,
    a: &IsmOperator,
    r: f64,
    x: &Vector,
    base: &BaseSet,
    tol: f64,
) -> Result<Vector> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("resolvent parameter r must be > 0, got {r}")));
    }
    let w = a.forward_step(r, x);
    match f {
        Bifunction::Zero => project_base(base, &w),
        Bifunction::ScalarMonotone(s) => {
            if w.dim() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "scalar monotone bifunction used in dimension {}",
                    w.dim()
                )));
            }
            let z = resolvent_scalar(|z| s.b.eval(z), r, w[0], s.lo, s.hi, tol)?;
            Ok(Vector::scalar(z))
        }
        Bifunction::Custom(oracle) => Ok((oracle.0)(r, &w)),
    }
}

/// Solves `r·B(z) + z = x` on `[lo, hi]` by bisection; clamps to an endpoint
/// when the root lies outside the interval.
pub fn resolvent_scalar<B: Fn(f64) -> f64>(
    b: B,
    r: f64,
    x: f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    if !(r > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("need r > 0 and tol > 0, got r={r}, tol={tol}")));
    }
    let g = |z: f64| r * b(z) + z - x;
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo.is_nan() || g_hi.is_nan() {
        return Err(Error::InvalidModel(format!("B is not finite on [{lo}, {hi}]")));
    }
    if g_lo > 0.0 && g_hi < 0.0 {
        return Err(Error::InvalidModel(format!(
            "sign pattern g(lo)={g_lo} > 0 > g(hi)={g_hi}: B is not nondecreasing"
        )));
    }
    if g_lo > 0.0 {
        return Ok(lo);
    }
    if g_hi < 0.0 {
        return Ok(hi);
    }
    let (mut a, mut c) = (lo, hi);
    for _ in 0..MAX_HALVINGS {
        if c - a <= tol {
            return Ok(0.5 * (a + c));
        }
        let mid = 0.5 * (a + c);
        if mid <= a || mid >= c {
            // bracket at machine resolution
            return Ok(mid);
        }
        let gm = g(mid);
        if gm.is_nan() {
            return Err(Error::InvalidModel(format!("B(z) is NaN at z = {mid}")));
        }
        if gm <= 0.0 {
            a = mid;
        } else {
            c = mid;
        }
    }
    Err(Error::ConvergenceFailure {
        what: "resolvent bisection",
        steps: MAX_HALVINGS,
        residual: c - a,
        best: Vector::from_raw(vec![0.5 * (a + c)]),
    })
}

/// `S^n x`, with `S^0 = I`.
pub fn apply_power(s: &PseudoContraction, n: usize, x: &Vector) -> Vector {
    let mut v = x.clone();
    for _ in 0..n {
        let next = s.map.apply(&v);
        if next == v {
            break;
        }
        v = next;
    }
    v
}

/// `sup_k (kappa + sqrt(1 + (1 - kappa)(k - 1))) / (1 + kappa)`, the uniform
/// Lipschitz constant of all powers.
pub fn lipschitz_bound(kappa: f64, k_values: &[f64]) -> f64 {
    k_values
        .iter()
        .map(|&k| (kappa + (1.0 + (1.0 - kappa) * (k - 1.0)).sqrt()) / (1.0 + kappa))
        .fold(1.0, f64::max)
}

/// Which member an audit entry refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Member {
    Operator(usize),
    Map(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditCheck {
    InverseStrongMonotonicity,
    StrictPseudocontraction { power: usize },
    MapsIntoBase,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditEntry {
    pub member: Member,
    pub check: AuditCheck,
    pub passed: bool,
    /// Largest `lhs - rhs` seen; positive means the inequality failed.
    pub worst_violation: f64,
    pub witness: Option<(Vector, Vector)>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FamilyReport {
    pub entries: Vec<AuditEntry>,
}

impl FamilyReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

/// Draws a point of the base set.
pub(crate) fn sample_point(base: &BaseSet, rng: &mut impl Rng) -> Vector {
    match base {
        BaseSet::Box { lo, hi } => Vector::from_raw(
            lo.as_slice()
                .iter()
                .zip(hi.as_slice())
                .map(|(l, h)| if l == h { *l } else { rng.gen_range(*l..=*h) })
                .collect(),
        ),
        BaseSet::Ball { center, radius } => {
            let d = center.dim();
            let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = Vector::from_raw(dir);
            let len = p.norm().max(f64::MIN_POSITIVE);
            let scale = radius * rng.gen::<f64>().powf(1.0 / d as f64) / len;
            center.combine(1.0, &p, scale)
        }
        BaseSet::Custom(o) => {
            let p = Vector::from_raw((0..o.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect());
            o.project(&p)
        }
    }
}

struct Worst {
    violation: f64,
    witness: Option<(Vector, Vector)>,
}

impl Worst {
    fn new() -> Self {
        Worst { violation: f64::NEG_INFINITY, witness: None }
    }

    fn record(&mut self, violation: f64, x: &Vector, y: &Vector) {
        if violation > self.violation || violation.is_nan() {
            self.violation = violation;
            self.witness = Some((x.clone(), y.clone()));
        }
    }

    fn entry(self, member: Member, check: AuditCheck) -> AuditEntry {
        AuditEntry {
            member,
            check,
            passed: self.violation <= AUDIT_TOL,
            worst_violation: self.violation,
            witness: self.witness,
        }
    }
}

fn member_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Audits the declared constants on random pairs from the base set: the ISM
/// inequality for each operator, and for each map the strict-pseudocontraction
/// inequality (powers 1..=3 for asymptotic maps, power 1 otherwise) and
/// `S(C) ⊆ C`.
pub fn verify_family(problem: &ProblemFamily, samples: usize, rng_seed: u64) -> FamilyReport {
    let samples = samples.max(1);
    let base = &problem.base;
    let n_ops = problem.geps.len();

    let mut entries: Vec<AuditEntry> = problem
        .geps
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut worst = Worst::new();
            if g.a.is_zero() {
                worst.violation = 0.0;
            } else {
                let mut rng = member_rng(rng_seed, i as u64);
                for _ in 0..samples {
                    let x = sample_point(base, &mut rng);
                    let y = sample_point(base, &mut rng);
                    let da = &g.a.apply(&x) - &g.a.apply(&y);
                    let lhs = g.a.alpha * da.norm_sq();
                    let rhs = da.dot(&(&x - &y));
                    worst.record(lhs - rhs, &x, &y);
                }
            }
            worst.entry(Member::Operator(i), AuditCheck::InverseStrongMonotonicity)
        })
        .collect();

    let map_entries: Vec<Vec<AuditEntry>> = problem
        .maps
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let mut rng = member_rng(rng_seed, (n_ops + j) as u64);
            let pairs: Vec<(Vector, Vector)> = (0..samples)
                .map(|_| (sample_point(base, &mut rng), sample_point(base, &mut rng)))
                .collect();
            let powers: &[usize] = if s.asymptotic { &[1, 2, 3] } else { &[1] };
            let mut out = Vec::with_capacity(powers.len() + 1);
            for &n in powers {
                let k = s.k_n(n);
                let mut worst = Worst::new();
                for (x, y) in &pairs {
                    let sx = apply_power(s, n, x);
                    let sy = apply_power(s, n, y);
                    let lhs = sx.dist_sq(&sy);
                    let rhs = k * x.dist_sq(y) + s.kappa * (x - &sx).dist_sq(&(y - &sy));
                    worst.record(lhs - rhs, x, y);
                }
                out.push(worst.entry(Member::Map(j), AuditCheck::StrictPseudocontraction { power: n }));
            }
            let mut worst = Worst::new();
            for (x, y) in &pairs {
                let sx = s.map.apply(x);
                worst.record(base.project(&sx).dist(&sx), x, y);
            }
            out.push(worst.entry(Member::Map(j), AuditCheck::MapsIntoBase));
            out
        })
        .collect();

    entries.extend(map_entries.into_iter().flatten());
    FamilyReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn interval() -> BaseSet {
        BaseSet::interval(-1.0, 1.0).unwrap()
    }

    fn s(x: f64) -> Vector {
        Vector::scalar(x)
    }

    #[test]
    fn zero_bifunction_resolvent_is_projection() {
        let y = resolvent(&Bifunction::Zero, &IsmOperator::zero(), 1.0, &s(2.0), &interval(), 1e-12).unwrap();
        assert_eq!(y, s(1.0));
    }

    #[test]
    fn tan_kink_resolvent_right_of_kink() {
        let xi = -1.0 / 3.0;
        let y = resolvent(&Bifunction::tan_kink(xi), &IsmOperator::zero(), 1.0, &s(1.0), &interval(), 1e-12)
            .unwrap();
        // xi + atan(4/3)
        assert_abs_diff_eq!(y[0], 0.593_962_1, epsilon = 1e-6);
        assert_abs_diff_eq!(y[0], xi + (4.0f64 / 3.0).atan(), epsilon = 1e-11);
    }

    #[test]
    fn tan_kink_resolvent_left_of_kink_is_identity() {
        let y = resolvent(&Bifunction::tan_kink(-1.0 / 3.0), &IsmOperator::zero(), 1.0, &s(-0.9), &interval(), 1e-12)
            .unwrap();
        assert_abs_diff_eq!(y[0], -0.9, epsilon = 1e-12);
    }

    #[test]
    fn resolvent_rejects_nonpositive_r() {
        assert!(resolvent(&Bifunction::Zero, &IsmOperator::zero(), 0.0, &s(0.0), &interval(), 1e-12).is_err());
    }

    #[test]
    fn scalar_resolvent_cases() {
        assert_abs_diff_eq!(resolvent_scalar(|_| 0.0, 3.0, 0.3, -1.0, 1.0, 1e-12).unwrap(), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(resolvent_scalar(|z| z, 1.0, 1.0, -1.0, 1.0, 1e-12).unwrap(), 0.5, epsilon = 1e-12);
        // root outside the interval: clamp
        assert_eq!(resolvent_scalar(|_| 0.0, 1.0, 5.0, -1.0, 1.0, 1e-12).unwrap(), 1.0);
        assert_eq!(resolvent_scalar(|_| 0.0, 1.0, -5.0, -1.0, 1.0, 1e-12).unwrap(), -1.0);
    }

    #[test]
    fn scalar_resolvent_detects_decreasing_b() {
        let err = resolvent_scalar(|z| -10.0 * z, 1.0, 0.0, -1.0, 1.0, 1e-12).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
        assert!(ScalarMonotone::new(ScalarFn::custom(|z| -z), -1.0, 1.0).is_err());
        assert!(ScalarMonotone::new(ScalarFn::TanKink { xi: 0.2 }, -1.0, 1.0).is_ok());
    }

    #[test]
    fn power_of_quadratic_map() {
        let map = PseudoContraction::new(SelfMap::Quadratic { c: 1.5 }, 0.25).unwrap();
        assert_eq!(apply_power(&map, 0, &s(0.5)), s(0.5));
        assert_eq!(apply_power(&map, 1, &s(0.5)), s(0.125));
        assert_eq!(apply_power(&map, 2, &s(0.5)), s(0.1015625));
        for n in 1..5 {
            assert_eq!(apply_power(&map, n, &s(-0.5)), s(-0.5));
        }
    }

    #[test]
    fn lipschitz_bound_values() {
        assert_eq!(lipschitz_bound(0.3, &[1.0, 1.0]), 1.0);
        assert_abs_diff_eq!(lipschitz_bound(0.0, &[2.0]), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(lipschitz_bound(0.5, &[1.0, 1.0, 1.0]), 1.0);
    }

    fn family_of(map: PseudoContraction, base: BaseSet) -> ProblemFamily {
        ProblemFamily::new(base, vec![], vec![map]).unwrap()
    }

    #[test]
    fn audit_identity_passes() {
        let report = verify_family(&family_of(PseudoContraction::identity(), interval()), 200, 1);
        assert!(report.passed());
    }

    #[test]
    fn audit_doubling_fails_with_positive_violation() {
        let base = BaseSet::interval(0.0, 1.0).unwrap();
        let map = PseudoContraction::new(SelfMap::Scale(2.0), 0.0).unwrap();
        let report = verify_family(&family_of(map, base), 200, 1);
        let fail = report
            .failures()
            .find(|e| e.check == AuditCheck::StrictPseudocontraction { power: 1 })
            .expect("pseudocontraction failure");
        assert!(fail.worst_violation > 0.0);
    }

    #[test]
    fn quadratic_map_constant_is_one_minus_inverse_c() {
        // The smallest valid kappa for x - c x^2 on [-1, 1] is 1 - 1/c (pair near x = y = 1).
        // 1 - c/2 is smaller than that whenever c > sqrt(2).
        let c = 1.5;
        let declared = PseudoContraction::new(SelfMap::Quadratic { c }, 1.0 - c / 2.0).unwrap();
        let report = verify_family(&family_of(declared.clone(), interval()), 1000, 3);
        assert!(!report.passed());

        let sharp = PseudoContraction::new(SelfMap::Quadratic { c }, 1.0 - 1.0 / c).unwrap();
        assert!(verify_family(&family_of(sharp, interval()), 1000, 3).passed());

        // witness pair: (1, 0.95)
        let (x, y) = (s(1.0), s(0.95));
        let sx = declared.map.apply(&x);
        let sy = declared.map.apply(&y);
        let lhs = sx.dist_sq(&sy);
        let rhs = x.dist_sq(&y) + declared.kappa * (&x - &sx).dist_sq(&(&y - &sy));
        assert!(lhs > rhs);
    }

    #[test]
    fn small_c_quadratic_passes_declared_constant() {
        let c = 1.25;
        let map = PseudoContraction::new(SelfMap::Quadratic { c }, 1.0 - c / 2.0).unwrap();
        assert!(verify_family(&family_of(map, interval()), 1000, 5).passed());
    }

    #[test]
    fn audit_ism_affine() {
        let fam = ProblemFamily::new(
            interval(),
            vec![GepPair { f: Bifunction::Zero, a: IsmOperator::affine(2.0, s(0.5)).unwrap() }],
            vec![],
        )
        .unwrap();
        assert_eq!(fam.alpha, 0.5);
        assert!(verify_family(&fam, 500, 9).passed());

        let mut overclaimed = fam.clone();
        overclaimed.geps[0].a.alpha = 1.0;
        assert!(!verify_family(&overclaimed, 500, 9).passed());
    }

    #[test]
    fn family_constants_reduce() {
        let fam = ProblemFamily::new(
            interval(),
            vec![
                GepPair { f: Bifunction::Zero, a: IsmOperator::affine(1.0, s(0.0)).unwrap() },
                GepPair { f: Bifunction::Zero, a: IsmOperator::affine(4.0, s(0.0)).unwrap() },
            ],
            vec![
                PseudoContraction::new(SelfMap::Identity, 0.1).unwrap(),
                PseudoContraction::asymptotic(SelfMap::Identity, 0.4, KSequence::Harmonic { amplitude: 1.0 }).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(fam.alpha, 0.25);
        assert_eq!(fam.kappa, 0.4);
        assert_eq!(fam.k_n(1), 1.5);
        assert!(ProblemFamily::new(interval(), vec![], vec![]).is_err());
        assert!(PseudoContraction::new(SelfMap::Identity, 1.0).is_err());
    }

    fn firm_gap(t: impl Fn(f64) -> f64, x: f64, y: f64) -> f64 {
        let (tx, ty) = (t(x), t(y));
        (tx - ty) * (tx - ty) - (tx - ty) * (x - y)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn builtin_resolvents_firmly_nonexpansive(
            x in -1.5f64..1.5, y in -1.5f64..1.5, xi in -0.95f64..0.95, r in 0.1f64..3.0, slope in 0.0f64..4.0,
        ) {
            let base = interval();
            let kink = Bifunction::tan_kink(xi);
            let aff = Bifunction::scalar_monotone(ScalarFn::Affine { slope, intercept: -0.2 }, -1.0, 1.0).unwrap();
            for f in [&Bifunction::Zero, &kink, &aff] {
                let t = |v: f64| resolvent(f, &IsmOperator::zero(), r, &s(v), &base, 1e-12).unwrap()[0];
                prop_assert!(firm_gap(t, x, y) <= 1e-8);
            }
        }

        #[test]
        fn bisection_matches_arctan_closed_form(xi in -0.999f64..0.999, u in 0.0f64..1.0) {
            let x = xi + u * (1.0 - xi);
            let z = resolvent_scalar(|z| ScalarFn::TanKink { xi }.eval(z), 1.0, x, -1.0, 1.0, 1e-12).unwrap();
            prop_assert!((z - (xi + (x - xi).atan())).abs() <= 1e-10);
        }

        #[test]
        fn forward_step_nonexpansive(x in -1.0f64..1.0, y in -1.0f64..1.0, scale in 0.1f64..5.0, frac in 0.001f64..0.999) {
            let a = IsmOperator::affine(scale, s(0.3)).unwrap();
            let r = frac * 2.0 * a.alpha;
            let d = a.forward_step(r, &s(x)).dist(&a.forward_step(r, &s(y)));
            prop_assert!((x - y).abs() - d >= -1e-10);
        }

        #[test]
        fn power_composes(x in -1.0f64..1.0, c in 1.0f64..2.0, m in 0usize..6, n in 0usize..6) {
            let map = PseudoContraction::new(SelfMap::Quadratic { c }, 0.0).unwrap();
            let lhs = apply_power(&map, m + n, &s(x));
            let rhs = apply_power(&map, m, &apply_power(&map, n, &s(x)));
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn tan_kink_fixed_points_are_left_of_kink() {
        let xi = 0.25;
        let f = Bifunction::tan_kink(xi);
        for k in 0..=100 {
            let x = -1.0 + 2.0 * k as f64 / 100.0;
            let y = resolvent(&f, &IsmOperator::zero(), 1.0, &s(x), &interval(), 1e-12).unwrap()[0];
            if x <= xi {
                assert!((y - x).abs() <= 1e-12, "x={x} y={y}");
            } else {
                assert!(y < x);
            }
        }
    }
}
