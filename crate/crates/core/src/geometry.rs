//! Points of R^d, closed convex base sets with exact projections, halfspace
//! cuts, and projection onto the nested sets `C ∩ H_0 ∩ … ∩ H_{n}` produced
//! by the outer loop.

use std::fmt;
use std::ops::{Add, Index, Mul, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default membership tolerance for [`NestedSet::contains`].
pub const DEFAULT_CONTAINS_TOL: f64 = 1e-9;

/// A point of R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Builds a vector, rejecting empty or non-finite input.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("vector must have dimension >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite coordinate in {coords:?}")));
        }
        Ok(Vector(coords))
    }

    pub fn scalar(value: f64) -> Self {
        Vector(vec![value])
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Vector(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Vector) -> f64 {
        dist_sq(&self.0, &other.0)
    }

    pub fn dist(&self, other: &Vector) -> f64 {
        self.dist_sq(other).sqrt()
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Vector, b: f64) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(x, y)| a * x + b * y).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn ensure_dim(&self, dim: usize, what: &str) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "{what}: dimension {} does not match {dim}",
                self.dim()
            )));
        }
        Ok(())
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl Add<&Vector> for &Vector {
    type Output = Vector;

    fn add(self, rhs: &Vector) -> Vector {
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub<&Vector> for &Vector {
    type Output = Vector;

    fn sub(self, rhs: &Vector) -> Vector {
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &Vector {
    type Output = Vector;

    fn mul(self, rhs: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * rhs).collect())
    }
}

impl From<f64> for Vector {
    fn from(value: f64) -> Self {
        Vector::scalar(value)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The constraint `{v : <normal, v> <= offset}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    normal: Vector,
    offset: f64,
}

impl Halfspace {
    /// A zero normal is only allowed with a nonnegative offset (the whole space).
    pub fn new(normal: Vector, offset: f64) -> Result<Self> {
        if !normal.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidArgument("halfspace data must be finite".into()));
        }
        if normal.is_zero() && offset < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "zero normal with negative offset {offset} describes the empty set"
            )));
        }
        Ok(Halfspace { normal, offset })
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.dim()
    }

    /// True when the normal vanishes; such a cut constrains nothing.
    pub fn is_degenerate(&self) -> bool {
        self.normal.is_zero()
    }

    /// `<normal, v> - offset`; nonpositive inside.
    pub fn value(&self, v: &Vector) -> f64 {
        dot(self.normal.as_slice(), v.as_slice()) - self.offset
    }

    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        self.value(v) <= tol
    }

    pub fn project(&self, v: &Vector) -> Vector {
        let mut out = v.clone();
        self.project_in_place(out.as_mut_slice());
        out
    }

    /// Closed-form projection; returns the multiplier `t >= 0` so that the
    /// displacement is `-t·normal`.
    fn project_in_place(&self, v: &mut [f64]) -> f64 {
        let a = self.normal.as_slice();
        let excess = dot(a, v) - self.offset;
        if excess <= 0.0 {
            return 0.0;
        }
        let t = excess / dot(a, a);
        for (vk, ak) in v.iter_mut().zip(a) {
            *vk -= t * ak;
        }
        t
    }
}

/// Cut `{v : ||zbar - v||^2 <= ||x - v||^2 + eps}` written as a halfspace:
/// normal `2(x - zbar)`, offset `||x||^2 - ||zbar||^2 + eps`.
pub fn halfspace_from_iterate(x: &Vector, zbar: &Vector, eps: f64) -> Result<Halfspace> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be finite and >= 0, got {eps}")));
    }
    zbar.ensure_dim(x.dim(), "halfspace_from_iterate")?;
    let normal = x.combine(2.0, zbar, -2.0);
    // ||x||^2 - ||zbar||^2 as <x - zbar, x + zbar>, free of cancellation near x = zbar
    let offset = 0.5 * normal.dot(&(x + zbar)) + eps;
    Halfspace::new(normal, offset)
}

type ProjectionFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// User-supplied exact projection onto a closed convex set. Must be reentrant.
#[derive(Clone)]
pub struct ProjectionOracle {
    dim: usize,
    f: Arc<ProjectionFn>,
}

impl ProjectionOracle {
    pub fn new(dim: usize, f: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        ProjectionOracle { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn project(&self, p: &Vector) -> Vector {
        (self.f)(p)
    }
}

impl fmt::Debug for ProjectionOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProjectionOracle").field("dim", &self.dim).finish_non_exhaustive()
    }
}

/// The closed convex set `C`.
#[derive(Clone, Debug)]
pub enum BaseSet {
    Box { lo: Vector, hi: Vector },
    Ball { center: Vector, radius: f64 },
    Custom(ProjectionOracle),
}

impl BaseSet {
    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        hi.ensure_dim(lo.dim(), "box bounds")?;
        if lo.as_slice().iter().zip(hi.as_slice()).any(|(l, h)| l > h) {
            return Err(Error::InvalidArgument(format!("box with lo {lo:?} > hi {hi:?}")));
        }
        Ok(BaseSet::Box { lo, hi })
    }

    /// The 1-D box `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        BaseSet::boxed(Vector::new(vec![lo])?, Vector::new(vec![hi])?)
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("ball radius must be > 0, got {radius}")));
        }
        Ok(BaseSet::Ball { center, radius })
    }

    pub fn custom(oracle: ProjectionOracle) -> Self {
        BaseSet::Custom(oracle)
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseSet::Box { lo, .. } => lo.dim(),
            BaseSet::Ball { center, .. } => center.dim(),
            BaseSet::Custom(o) => o.dim(),
        }
    }

    fn project_in_place(&self, x: &mut [f64]) {
        match self {
            BaseSet::Box { lo, hi } => {
                for ((xk, l), h) in x.iter_mut().zip(lo.as_slice()).zip(hi.as_slice()) {
                    *xk = xk.clamp(*l, *h);
                }
            }
            BaseSet::Ball { center, radius } => {
                let c = center.as_slice();
                let d = dist_sq(x, c).sqrt();
                if d > *radius {
                    let s = radius / d;
                    for (xk, ck) in x.iter_mut().zip(c) {
                        *xk = ck + s * (*xk - ck);
                    }
                }
            }
            BaseSet::Custom(o) => {
                let q = o.project(&Vector::from_raw(x.to_vec()));
                x.copy_from_slice(q.as_slice());
            }
        }
    }

    /// Distance-like violation measure, zero inside.
    fn violation(&self, x: &[f64]) -> f64 {
        match self {
            BaseSet::Box { lo, hi } => x
                .iter()
                .zip(lo.as_slice())
                .zip(hi.as_slice())
                .map(|((xk, l), h)| (l - xk).max(xk - h).max(0.0))
                .fold(0.0, f64::max),
            BaseSet::Ball { center, radius } => {
                (dist_sq(x, center.as_slice()).sqrt() - radius).max(0.0)
            }
            BaseSet::Custom(o) => {
                let p = Vector::from_raw(x.to_vec());
                o.project(&p).dist(&p)
            }
        }
    }

    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        p.dim() == self.dim() && self.violation(p.as_slice()) <= tol
    }

    pub fn project(&self, p: &Vector) -> Vector {
        let mut q = p.clone();
        self.project_in_place(q.as_mut_slice());
        q
    }
}

/// Metric projection onto the base set.
pub fn project_base(set: &BaseSet, p: &Vector) -> Result<Vector> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument(format!("cannot project non-finite point {p:?}")));
    }
    p.ensure_dim(set.dim(), "project_base")?;
    let q = set.project(p);
    if !q.is_finite() {
        return Err(Error::InvalidModel("projection oracle returned a non-finite point".into()));
    }
    Ok(q)
}

/// `C ∩ H_0 ∩ H_1 ∩ …`. Cuts are append-only; cut `k` is the one produced at
/// iteration `k`. Memory grows linearly with the number of cuts.
#[derive(Clone, Debug)]
pub struct NestedSet {
    base: BaseSet,
    cuts: Vec<Halfspace>,
}

impl NestedSet {
    pub fn new(base: BaseSet) -> Self {
        NestedSet { base, cuts: Vec::new() }
    }

    pub fn with_cuts(base: BaseSet, cuts: Vec<Halfspace>) -> Result<Self> {
        let mut set = NestedSet::new(base);
        for cut in cuts {
            set.push(cut)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, cut: Halfspace) -> Result<()> {
        cut.normal().ensure_dim(self.base.dim(), "cut")?;
        self.cuts.push(cut);
        Ok(())
    }

    pub fn base(&self) -> &BaseSet {
        &self.base
    }

    pub fn cuts(&self) -> &[Halfspace] {
        &self.cuts
    }

    pub fn into_cuts(self) -> Vec<Halfspace> {
        self.cuts
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Membership in the base set and every cut, each within `tol`.
    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        self.base.contains(p, tol) && self.cuts.iter().all(|c| c.contains(p, tol))
    }

    /// The same set restricted to its first `n` cuts, i.e. `C_n`.
    pub fn prefix(&self, n: usize) -> NestedSet {
        NestedSet {
            base: self.base.clone(),
            cuts: self.cuts[..n.min(self.cuts.len())].to_vec(),
        }
    }
}

/// Tolerances for [`project_nested`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions { tol: 1e-12, max_sweeps: 10_000 }
    }
}

struct Checkpoint {
    violation: f64,
    inc_change: f64,
    inc_base: Vec<f64>,
    inc_cut: Vec<f64>,
}

impl Checkpoint {
    fn stalled_after(&self, prev: &Checkpoint, base: &BaseSet) -> bool {
        let r = INFEASIBLE_STALL_RATIO;
        let receding = match base {
            BaseSet::Box { .. } => self.inc_base.iter().zip(&prev.inc_base).all(|(c, p)| c.abs() >= p.abs()),
            _ => dot(&self.inc_base, &self.inc_base) >= dot(&prev.inc_base, &prev.inc_base),
        } && self.inc_cut.iter().zip(&prev.inc_cut).all(|(c, p)| c >= p);
        receding && self.violation >= r * prev.violation && self.inc_change >= r * prev.inc_change
    }
}

const POLISH_FIRST: usize = 8;
const POLISH_EVERY: usize = 512;
const POLISH_MAX_ACTIVE: usize = 256;

const INFEASIBLE_FIRST_CHECK: usize = 128;
const INFEASIBLE_STALL_RATIO: f64 = 0.999;

/// Projection of `x0` onto the nested set by Dykstra's alternating projections
/// over the base set and every non-degenerate cut.
///
/// Stops once a full sweep moves the iterate by at most `tol` and the iterate
/// violates no constraint by more than `tol`. At sweeps 8, 16, 32, ... (and
/// every 512 sweeps later) the constraints Dykstra currently marks active are
/// solved as equalities; that point is returned when it satisfies the KKT
/// conditions within `tol`, which shortcuts the slow zig-zag between nearly
/// parallel cuts.
pub fn project_nested(set: &NestedSet, x0: &Vector, tol: f64, max_sweeps: usize) -> Result<Vector> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("projection tol must be > 0, got {tol}")));
    }
    let base = set.base();
    let active: Vec<&Halfspace> = set.cuts().iter().filter(|c| !c.is_degenerate()).collect();
    if active.is_empty() {
        return project_base(base, x0);
    }
    if !x0.is_finite() {
        return Err(Error::InvalidArgument(format!("cannot project non-finite point {x0:?}")));
    }
    x0.ensure_dim(set.dim(), "project_nested")?;

    let d = x0.dim();
    let m = active.len();
    let mut x = x0.as_slice().to_vec();
    let mut prev = vec![0.0; d];
    let mut buf = vec![0.0; d];
    let mut inc_base = vec![0.0; d];
    // Dykstra increments for halfspaces are multiples of the normal; store the multiplier.
    let mut inc_cut = vec![0.0; m];

    let mut checkpoint: Option<Checkpoint> = None;
    let mut next_check = INFEASIBLE_FIRST_CHECK;
    let mut next_polish = POLISH_FIRST;
    let mut residual = f64::INFINITY;

    for sweep in 1..=max_sweeps {
        prev.copy_from_slice(&x);

        for k in 0..d {
            buf[k] = x[k] + inc_base[k];
        }
        x.copy_from_slice(&buf);
        base.project_in_place(&mut x);
        // a sweep can leave x fixed while the increments still move
        let mut inc_change_sq = 0.0;
        for k in 0..d {
            let next = buf[k] - x[k];
            inc_change_sq += (next - inc_base[k]).powi(2);
            inc_base[k] = next;
        }

        for (cut, t_old) in active.iter().zip(inc_cut.iter_mut()) {
            let a = cut.normal().as_slice();
            for k in 0..d {
                x[k] += *t_old * a[k];
            }
            let t = cut.project_in_place(&mut x);
            inc_change_sq += (t - *t_old).powi(2) * dot(a, a);
            *t_old = t;
        }

        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidModel("projection produced a non-finite iterate".into()));
        }

        let change = dist_sq(&x, &prev).sqrt().max(inc_change_sq.sqrt());
        let mut violation = base.violation(&x);
        for cut in &active {
            let a = cut.normal().as_slice();
            let excess = dot(a, &x) - cut.offset();
            if excess > 0.0 {
                violation = violation.max(excess).max(excess / dot(a, a).sqrt());
            }
        }
        residual = change.max(violation);
        if change <= tol && violation <= tol {
            return Ok(Vector::from_raw(x));
        }

        if sweep == next_polish || sweep == max_sweeps {
            if let Some(q) = polish(base, &active, x0.as_slice(), &x, &inc_base, 1e3 * tol, tol) {
                return Ok(Vector::from_raw(q));
            }
            next_polish = if next_polish < POLISH_EVERY { 2 * next_polish } else { next_polish + POLISH_EVERY };
        }

        // On an empty intersection the violation and the per-sweep increment
        // change settle at positive constants while every increment grows
        // away from zero. Feasible instances can stall for many sweeps too,
        // but then some increment drifts back toward zero.
        if sweep == next_check {
            let here = Checkpoint {
                violation,
                inc_change: inc_change_sq.sqrt(),
                inc_base: inc_base.clone(),
                inc_cut: inc_cut.clone(),
            };
            if let Some(prev) = &checkpoint {
                if violation > tol && here.stalled_after(prev, base) {
                    return Err(Error::Infeasible { sweeps: sweep, violation });
                }
            }
            checkpoint = Some(here);
            next_check *= 2;
        }
    }

    Err(Error::ConvergenceFailure {
        what: "dykstra projection",
        steps: max_sweeps,
        residual,
        best: Vector::from_raw(x),
    })
}

/// Small active-set refinement seeded with the constraints that are tight
/// (within `seed_tol`) at the Dykstra iterate `x`. A candidate is accepted only
/// if it is feasible and its multipliers have the right signs, i.e. it is the
/// projection within `tol`.
fn polish(
    base: &BaseSet,
    cuts: &[&Halfspace],
    x0: &[f64],
    x: &[f64],
    inc_base: &[f64],
    seed_tol: f64,
    tol: f64,
) -> Option<Vec<f64>> {
    let d = x0.len();
    let bounds = match base {
        BaseSet::Box { lo, hi } => Some((lo.as_slice(), hi.as_slice())),
        _ if inc_base.iter().any(|v| *v != 0.0) => return None,
        _ => None,
    };
    // face[k]: +1 upper bound held, -1 lower bound held
    let mut face: Vec<i8> = match bounds {
        Some((lo, hi)) => (0..d)
            .map(|k| if x[k] >= hi[k] - seed_tol { 1 } else if x[k] <= lo[k] + seed_tol { -1 } else { 0 })
            .collect(),
        None => vec![0; d],
    };
    let act: Vec<usize> = (0..cuts.len())
        .filter(|&i| {
            let a = cuts[i].normal().as_slice();
            (dot(a, x) - cuts[i].offset()) / dot(a, a).sqrt() >= -seed_tol
        })
        .collect();
    // of same-direction parallel cuts only the tightest can be active
    let same_dir = |i: usize, j: usize| {
        let (a, b) = (cuts[i].normal(), cuts[j].normal());
        a.dot(b) >= (1.0 - 1e-12) * a.norm() * b.norm()
    };
    let level = |i: usize| cuts[i].offset() / cuts[i].normal().norm();
    let mut seeded: Vec<usize> = Vec::with_capacity(act.len());
    for i in act {
        match seeded.iter().position(|&j| same_dir(i, j)) {
            Some(p) if level(i) < level(seeded[p]) => seeded[p] = i,
            Some(_) => {}
            None => seeded.push(i),
        }
    }
    let mut act = seeded;
    if act.len() > POLISH_MAX_ACTIVE {
        return None;
    }

    for _ in 0..2 * (cuts.len() + d) + 4 {
        let (x, lambda) = solve_face(bounds, &face, cuts, &act, x0)?;

        // dual check: drop the most negative multiplier
        let mut worst: Option<(f64, Option<usize>, Option<usize>)> = None;
        for (r, l) in lambda.iter().enumerate() {
            if *l < -tol && worst.is_none_or(|w| *l < w.0) {
                worst = Some((*l, Some(r), None));
            }
        }
        for k in 0..d {
            if face[k] == 0 {
                continue;
            }
            let pull: f64 = act.iter().zip(&lambda).map(|(&i, l)| l * cuts[i].normal()[k]).sum();
            let mu = f64::from(face[k]) * (x0[k] - x[k] - pull);
            if mu < -tol && worst.is_none_or(|w| mu < w.0) {
                worst = Some((mu, None, Some(k)));
            }
        }
        match worst {
            Some((_, Some(r), _)) => {
                act.remove(r);
                continue;
            }
            Some((_, None, Some(k))) => {
                face[k] = 0;
                continue;
            }
            _ => {}
        }

        // primal check: add the most violated constraint
        let mut worst: Option<(f64, Option<usize>, Option<(usize, i8)>)> = None;
        if let Some((lo, hi)) = bounds {
            for k in 0..d {
                let (over, under) = (x[k] - hi[k], lo[k] - x[k]);
                if over > tol && worst.is_none_or(|w| over > w.0) {
                    worst = Some((over, None, Some((k, 1))));
                }
                if under > tol && worst.is_none_or(|w| under > w.0) {
                    worst = Some((under, None, Some((k, -1))));
                }
            }
        } else if base.violation(&x) > tol {
            return None;
        }
        for (i, h) in cuts.iter().enumerate() {
            let a = h.normal().as_slice();
            let raw = dot(a, &x) - h.offset();
            let excess = raw / dot(a, a).sqrt();
            if raw.max(excess) > tol && worst.is_none_or(|w| excess > w.0) {
                worst = Some((excess, Some(i), None));
            }
        }
        match worst {
            Some((_, Some(i), _)) => {
                if act.contains(&i) {
                    return None;
                }
                act.retain(|&j| !same_dir(i, j));
                if act.len() >= POLISH_MAX_ACTIVE {
                    return None;
                }
                act.push(i);
            }
            Some((_, None, Some((k, side)))) => face[k] = side,
            _ => return Some(x),
        }
    }
    None
}

/// Projection of `x0` onto `{x_k = bound for held faces, <a_i, x> = b_i for i in act}`
/// and the cut multipliers.
fn solve_face(
    bounds: Option<(&[f64], &[f64])>,
    face: &[i8],
    cuts: &[&Halfspace],
    act: &[usize],
    x0: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    use nalgebra::{DMatrix, DVector};

    let d = x0.len();
    let mut x = x0.to_vec();
    if let Some((lo, hi)) = bounds {
        for k in 0..d {
            match face[k] {
                1 => x[k] = hi[k],
                -1 => x[k] = lo[k],
                _ => {}
            }
        }
    }
    if act.is_empty() {
        return Some((x, Vec::new()));
    }
    let free: Vec<usize> = (0..d).filter(|&k| face[k] == 0).collect();
    // rows scaled to unit normals; late cuts can have tiny normals
    let norms: Vec<f64> = act.iter().map(|&i| cuts[i].normal().norm()).collect();
    let g = DMatrix::from_fn(act.len(), free.len(), |r, c| cuts[act[r]].normal()[free[c]] / norms[r]);
    let c = DVector::from_fn(act.len(), |r, _| {
        let h = cuts[act[r]];
        let held: f64 = (0..d).filter(|&k| face[k] != 0).map(|k| h.normal()[k] * x[k]).sum();
        (h.offset() - held) / norms[r]
    });
    let x0f = DVector::from_fn(free.len(), |c, _| x0[free[c]]);
    let gram = &g * g.transpose();
    let rhs = &g * &x0f - &c;
    let eps = 1e-14 * (1.0 + gram.amax());
    let svd = gram.svd(true, true);
    let mut lambda = svd.solve(&rhs, eps).ok()?;
    let mut xf = &x0f - g.transpose() * &lambda;
    // iterative refinement: nearly parallel cuts make the Gram matrix ill-conditioned
    for _ in 0..2 {
        let r = &g * &xf - &c;
        let dl = svd.solve(&r, eps).ok()?;
        xf -= g.transpose() * &dl;
        lambda += dl;
    }
    for (c, &k) in free.iter().enumerate() {
        x[k] = xf[c];
    }
    let lambda: Vec<f64> = lambda.iter().zip(&norms).map(|(l, n)| l / n).collect();
    (x.iter().chain(&lambda).all(|v| v.is_finite())).then_some((x, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    fn unit_interval() -> BaseSet {
        BaseSet::interval(-1.0, 1.0).unwrap()
    }

    #[test]
    fn box_clamps_to_boundary() {
        assert_eq!(project_base(&unit_interval(), &v(&[2.0])).unwrap(), v(&[1.0]));
        assert_eq!(project_base(&unit_interval(), &v(&[0.3])).unwrap(), v(&[0.3]));
    }

    #[test]
    fn ball_scales_radially() {
        let ball = BaseSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let q = project_base(&ball, &v(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(q[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = Vector::from_raw(vec![f64::NAN]);
        assert!(matches!(project_base(&unit_interval(), &p), Err(Error::InvalidArgument(_))));
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(Vector::new(vec![]).is_err());
    }

    #[test]
    fn bad_base_sets_rejected() {
        assert!(BaseSet::interval(1.0, -1.0).is_err());
        assert!(BaseSet::ball(v(&[0.0]), 0.0).is_err());
        assert!(Halfspace::new(v(&[0.0]), -1.0).is_err());
        assert!(Halfspace::new(v(&[0.0]), 0.0).is_ok());
    }

    #[test]
    fn cut_from_equal_points_is_whole_space() {
        let h = halfspace_from_iterate(&v(&[0.7]), &v(&[0.7]), 0.0).unwrap();
        assert!(h.is_degenerate());
        assert_eq!(h.offset(), 0.0);
    }

    #[test]
    fn cut_thresholds_in_one_dimension() {
        // ||0 - v||^2 <= ||1 - v||^2 + eps  <=>  2v <= 1 + eps
        let h = halfspace_from_iterate(&v(&[1.0]), &v(&[0.0]), 0.0).unwrap();
        assert_eq!(h.normal(), &v(&[2.0]));
        assert_eq!(h.offset(), 1.0);
        let h = halfspace_from_iterate(&v(&[1.0]), &v(&[0.0]), 0.5).unwrap();
        assert_eq!(h.offset() / h.normal()[0], 0.75);
        assert!(halfspace_from_iterate(&v(&[1.0]), &v(&[0.0]), -0.1).is_err());
    }

    #[test]
    fn nested_without_cuts_is_base_projection() {
        let set = NestedSet::new(unit_interval());
        assert_eq!(project_nested(&set, &v(&[3.0]), 1e-12, 100).unwrap(), v(&[1.0]));
    }

    #[test]
    fn nested_one_dimensional_cut() {
        let mut set = NestedSet::new(unit_interval());
        set.push(halfspace_from_iterate(&v(&[1.0]), &v(&[0.0]), 0.0).unwrap()).unwrap();
        let q = project_nested(&set, &v(&[1.0]), 1e-12, 100).unwrap();
        assert_abs_diff_eq!(q[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_cuts_are_skipped() {
        let mut set = NestedSet::new(unit_interval());
        set.push(Halfspace::new(v(&[0.0]), 0.0).unwrap()).unwrap();
        assert_eq!(project_nested(&set, &v(&[0.2]), 1e-12, 10).unwrap(), v(&[0.2]));
    }

    #[test]
    fn two_dimensional_wedge_matches_grid_oracle() {
        let base = BaseSet::boxed(v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
        let cuts = vec![
            Halfspace::new(v(&[1.0, 1.0]), 0.0).unwrap(),
            Halfspace::new(v(&[1.0, -1.0]), 0.0).unwrap(),
        ];
        let set = NestedSet::with_cuts(base, cuts).unwrap();
        let x0 = v(&[1.0, 0.2]);
        let q = project_nested(&set, &x0, 1e-12, 10_000).unwrap();
        let oracle = grid_oracle(&set, &x0);
        assert!(q.dist(&oracle) <= 1e-4, "{q:?} vs {oracle:?}");
    }

    /// Nearest feasible point on a dense grid over [-1,1]^2, refined by zooming.
    fn grid_oracle(set: &NestedSet, x0: &Vector) -> Vector {
        let (mut cx, mut cy, mut half) = (0.0, 0.0, 1.0);
        let mut best = None;
        for level in 0..8 {
            let steps = if level == 0 { 400 } else { 40 };
            let h = 2.0 * half / steps as f64;
            let mut level_best: Option<(f64, Vector)> = None;
            for i in 0..=steps {
                for j in 0..=steps {
                    let p = v(&[cx - half + i as f64 * h, cy - half + j as f64 * h]);
                    if !set.contains(&p, 0.0) {
                        continue;
                    }
                    let d = p.dist_sq(x0);
                    if level_best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        level_best = Some((d, p));
                    }
                }
            }
            if let Some((_, p)) = level_best {
                cx = p[0];
                cy = p[1];
                best = Some(p);
            }
            half = 4.0 * h;
        }
        best.expect("feasible grid point")
    }

    #[test]
    fn contains_checks_base_and_cuts() {
        let mut set = NestedSet::new(unit_interval());
        assert!(set.contains(&v(&[0.0]), 1e-9));
        set.push(Halfspace::new(v(&[1.0]), 0.5).unwrap()).unwrap();
        assert!(!set.contains(&v(&[0.6]), 1e-9));
        assert!(set.contains(&v(&[0.5]), 1e-9));
        assert!(!set.contains(&v(&[-1.5]), 1e-9));
    }

    #[test]
    fn empty_intersection_is_reported() {
        let mut set = NestedSet::new(unit_interval());
        set.push(Halfspace::new(v(&[1.0]), -2.0).unwrap()).unwrap();
        let err = project_nested(&set, &v(&[0.0]), 1e-12, 10_000).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }), "{err:?}");
    }

    #[test]
    fn sweep_budget_exhaustion_carries_best_iterate() {
        // ball against a nearly tangent chord: slow zig-zag, and the curved
        // active constraint rules out the exact face solve
        let base = BaseSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let set = NestedSet::with_cuts(base, vec![Halfspace::new(v(&[0.05, 1.0]), -0.95).unwrap()]).unwrap();
        let x0 = v(&[2.0, 0.5]);
        let q = project_nested(&set, &x0, 1e-12, 10_000).unwrap();
        assert!(set.contains(&q, 1e-9));
        match project_nested(&set, &x0, 1e-12, 3) {
            Err(Error::ConvergenceFailure { steps, residual, best, .. }) => {
                assert_eq!(steps, 3);
                assert!(residual > 1e-12);
                assert_eq!(best.dim(), 2);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn custom_base_uses_oracle() {
        // Nonnegative half-line as a custom set.
        let base = BaseSet::custom(ProjectionOracle::new(1, |p| Vector::scalar(p[0].max(0.0))));
        let mut set = NestedSet::new(base);
        set.push(Halfspace::new(v(&[1.0]), 2.0).unwrap()).unwrap();
        assert_eq!(project_nested(&set, &v(&[5.0]), 1e-12, 100).unwrap(), v(&[2.0]));
        assert_eq!(project_nested(&set, &v(&[-5.0]), 1e-12, 100).unwrap(), v(&[0.0]));
    }

    fn pt(d: usize) -> impl Strategy<Value = Vector> {
        prop::collection::vec(-3.0f64..3.0, d).prop_map(Vector::from_raw)
    }

    fn base_sets() -> impl Strategy<Value = BaseSet> {
        prop_oneof![
            (pt(3), prop::collection::vec(0.0f64..2.0, 3)).prop_map(|(lo, w)| {
                let hi = Vector::from_raw(lo.as_slice().iter().zip(&w).map(|(l, w)| l + w).collect());
                BaseSet::boxed(lo, hi).unwrap()
            }),
            (pt(3), 0.1f64..2.0).prop_map(|(c, r)| BaseSet::ball(c, r).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn projection_is_firmly_nonexpansive(set in base_sets(), x in pt(3), y in pt(3)) {
            let px = project_base(&set, &x).unwrap();
            let py = project_base(&set, &y).unwrap();
            let d = &px - &py;
            prop_assert!(d.dot(&(&x - &y)) >= d.norm_sq() - 1e-10);
        }

        #[test]
        fn projection_pythagoras_bound(set in base_sets(), y in pt(3), z in pt(3)) {
            // any x in the set: use the projection of an arbitrary point
            let x = project_base(&set, &z).unwrap();
            let py = project_base(&set, &y).unwrap();
            prop_assert!(x.dist_sq(&py) + py.dist_sq(&y) <= x.dist_sq(&y) + 1e-10);
        }

        #[test]
        fn cut_membership_matches_distance_form(
            x in pt(2), z in pt(2), p in pt(2), eps in 0.0f64..2.0,
        ) {
            let h = halfspace_from_iterate(&x, &z, eps).unwrap();
            let lhs = h.value(&p);
            let rhs = z.dist_sq(&p) - x.dist_sq(&p) - eps;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + x.norm_sq() + z.norm_sq() + p.norm_sq()));
        }

        #[test]
        fn nested_projection_is_feasible_and_optimal(
            cuts in prop::collection::vec((pt(2), -0.5f64..0.5), 1..5),
            x0 in pt(2),
            probes in prop::collection::vec(pt(2), 100),
        ) {
            // each cut contains the origin neighbourhood, so the set is nonempty
            let base = BaseSet::boxed(Vector::from_raw(vec![-1.0, -1.0]), Vector::from_raw(vec![1.0, 1.0])).unwrap();
            let mut set = NestedSet::new(base.clone());
            for (a, shift) in cuts {
                if a.norm() < 1e-3 { continue; }
                set.push(Halfspace::new(a.clone(), a.norm() * (0.2 + shift.abs())).unwrap()).unwrap();
            }
            let tol = 1e-12;
            let q = project_nested(&set, &x0, tol, 10_000).unwrap();
            prop_assert!(set.contains(&q, 1e-9));
            let r = &x0 - &q;
            for y in probes.iter().map(|p| project_nested(&set, &(p * 0.3), tol, 10_000).unwrap()) {
                prop_assert!(r.dot(&(&q - &y)) >= -10.0 * tol);
            }
        }
    }
}
