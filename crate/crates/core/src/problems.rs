//! Built-in problem families: the one-dimensional benchmark with `N` kinked
//! tangent bifunctions and `M` quadratic maps, and the corollary presets that
//! specialise the general scheme.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BaseSet, Vector};
use crate::operators::{
    Bifunction, FamilyOrigin, GepPair, IsmMap, IsmOperator, KSequence, ProblemFamily, PseudoContraction, SelfMap,
};
use crate::solver::{EpsilonVariant, Mode, ParamSchedule, Sequence};

/// Sizes of the benchmark family and the constants derived from them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Section4Spec {
    pub n_ops: usize,
    pub n_maps: usize,
}

impl Section4Spec {
    pub fn new(n_ops: usize, n_maps: usize) -> Result<Self> {
        if n_ops == 0 || n_maps == 0 {
            return Err(Error::InvalidArgument(format!("need N, M >= 1, got N={n_ops}, M={n_maps}")));
        }
        Ok(Section4Spec { n_ops, n_maps })
    }

    /// `xi_i = -1 + 2i/(N+1)`, `i = 1..=N`.
    pub fn xi(&self, i: usize) -> f64 {
        -1.0 + 2.0 * i as f64 / (self.n_ops as f64 + 1.0)
    }

    /// `c_j = 2 - j/(M+1)`, `j = 1..=M`.
    pub fn c(&self, j: usize) -> f64 {
        2.0 - j as f64 / (self.n_maps as f64 + 1.0)
    }

    /// Declared constant `1 - c_j/2`.
    pub fn kappa_j(&self, j: usize) -> f64 {
        1.0 - self.c(j) / 2.0
    }

    /// `M / (2(M+1))`.
    pub fn kappa(&self) -> f64 {
        self.n_maps as f64 / (2.0 * (self.n_maps as f64 + 1.0))
    }

    /// The limit `P_F(1) = xi_1`.
    pub fn reference(&self) -> f64 {
        self.xi(1)
    }
}

/// Benchmark family with its schedule and default mode.
#[derive(Clone, Debug)]
pub struct Section4Problem {
    pub spec: Section4Spec,
    pub family: ProblemFamily,
    pub schedule: ParamSchedule,
    pub reference: Vector,
    pub mode: Mode,
}

/// Base `[-1, 1]`; `f_i(x, y) = B_i(x)(y - x)` with `B_i` zero left of `xi_i`
/// and `tan(x - xi_i) - x + xi_i` right of it; `A_i = 0`;
/// `S_j(x) = x - c_j x^2` for `x >= 0` and the identity for `x < 0`.
/// Schedule: `r_n = 1`, `alpha_n = 1/(n+2)`, `beta_n = kappa`, `omega = 1`.
pub fn build_section4(n_ops: usize, n_maps: usize) -> Result<Section4Problem> {
    let spec = Section4Spec::new(n_ops, n_maps)?;
    let geps = (1..=n_ops)
        .map(|i| GepPair { f: Bifunction::tan_kink(spec.xi(i)), a: IsmOperator::zero() })
        .collect();
    let maps = (1..=n_maps)
        .map(|j| PseudoContraction::new(SelfMap::Quadratic { c: spec.c(j) }, spec.kappa_j(j)))
        .collect::<Result<Vec<_>>>()?;
    let family = ProblemFamily::new(BaseSet::interval(-1.0, 1.0)?, geps, maps)?
        .with_origin(FamilyOrigin::Section4 { n_ops, n_maps });
    // the reduced kappa equals M/(2(M+1)); reuse it so kappa <= beta holds bitwise
    let kappa = family.kappa;
    let schedule = ParamSchedule {
        alpha: Sequence::Reciprocal { shift: 2.0 },
        beta: Sequence::Constant(kappa),
        r: Sequence::Constant(1.0),
        omega: 1.0,
        b: 0.5 * (1.0 + kappa),
        d: 1.0,
        e: 1.0,
    };
    Ok(Section4Problem {
        spec,
        family,
        schedule,
        reference: Vector::scalar(spec.reference()),
        mode: Mode::Algorithm2,
    })
}

/// Which specialisation of the general scheme to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Corollary {
    /// `N` equilibrium problems, `K` variational inequalities, `M` maps.
    Cor1,
    /// Variational inequalities only (all bifunctions zero).
    Cor2,
    /// One bifunction, one operator, one map.
    Cor3,
    /// Asymptotically nonexpansive maps.
    Cor4,
    /// Plain pseudocontractions, no operators.
    Cor5,
}

/// Member parts a preset is assembled from.
#[derive(Clone, Debug)]
pub struct Parts {
    pub base: BaseSet,
    pub bifunctions: Vec<Bifunction>,
    pub operators: Vec<IsmOperator>,
    pub maps: Vec<PseudoContraction>,
}

impl Parts {
    /// The benchmark members without the schedule.
    pub fn section4(n_ops: usize, n_maps: usize) -> Result<Self> {
        let p = build_section4(n_ops, n_maps)?;
        Ok(Parts {
            base: p.family.base,
            bifunctions: p.family.geps.into_iter().map(|g| g.f).collect(),
            operators: Vec::new(),
            maps: p.family.maps,
        })
    }
}

/// A family plus the solver settings the corollary implies.
#[derive(Clone, Debug)]
pub struct Preset {
    pub corollary: Corollary,
    pub family: ProblemFamily,
    pub mode: Mode,
    pub epsilon_variant: EpsilonVariant,
    /// Replaces the schedule's `beta_n` when set.
    pub beta: Option<Sequence>,
}

impl Preset {
    pub fn apply_to(&self, schedule: &mut ParamSchedule) {
        if let Some(beta) = &self.beta {
            schedule.beta = beta.clone();
        }
    }
}

pub fn preset(corollary: Corollary, parts: Parts) -> Result<Preset> {
    let Parts { base, bifunctions, operators, maps } = parts;
    let zero_ops = |fs: Vec<Bifunction>| -> Vec<GepPair> {
        fs.into_iter().map(|f| GepPair { f, a: IsmOperator::zero() }).collect()
    };
    let vi_only = |ops: Vec<IsmOperator>| -> Vec<GepPair> {
        ops.into_iter().map(|a| GepPair { f: Bifunction::Zero, a }).collect()
    };
    let paired = |fs: Vec<Bifunction>, ops: Vec<IsmOperator>| -> Result<Vec<GepPair>> {
        if fs.len() != ops.len() {
            return Err(Error::InvalidArgument(format!(
                "need one operator per bifunction, got {} and {}",
                fs.len(),
                ops.len()
            )));
        }
        Ok(fs.into_iter().zip(ops).map(|(f, a)| GepPair { f, a }).collect())
    };

    let mut mode = Mode::Algorithm1;
    let mut epsilon_variant = EpsilonVariant::Standard;
    let mut beta = None;

    let (geps, maps) = match corollary {
        Corollary::Cor1 => {
            let mut geps = zero_ops(bifunctions);
            geps.extend(vi_only(operators));
            (geps, maps)
        }
        Corollary::Cor2 => {
            if bifunctions.iter().any(|f| !f.is_zero()) {
                return Err(Error::InvalidArgument("cor2 takes no bifunctions".into()));
            }
            (vi_only(operators), maps)
        }
        Corollary::Cor3 => {
            if bifunctions.len() != 1 || operators.len() != 1 || maps.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "cor3 needs exactly one bifunction, operator and map, got {}, {}, {}",
                    bifunctions.len(),
                    operators.len(),
                    maps.len()
                )));
            }
            (paired(bifunctions, operators)?, maps)
        }
        Corollary::Cor4 => {
            let wrapped = maps
                .into_iter()
                .map(|s| {
                    if s.kappa != 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "cor4 expects asymptotically nonexpansive maps (kappa = 0), got kappa = {}",
                            s.kappa
                        )));
                    }
                    // ||S^n x - S^n y||^2 <= k_n^2 ||x - y||^2
                    PseudoContraction::asymptotic(s.map, 0.0, KSequence::Squared(Box::new(s.k)))
                })
                .collect::<Result<Vec<_>>>()?;
            let geps = if operators.is_empty() { zero_ops(bifunctions) } else { paired(bifunctions, operators)? };
            beta = Some(Sequence::Constant(0.0));
            epsilon_variant = EpsilonVariant::Standard;
            (geps, wrapped)
        }
        Corollary::Cor5 => {
            if operators.iter().any(|a| !a.is_zero()) {
                return Err(Error::InvalidArgument("cor5 takes no operators".into()));
            }
            if maps.iter().any(|s| s.asymptotic) {
                return Err(Error::InvalidArgument("cor5 needs non-asymptotic maps".into()));
            }
            mode = Mode::Algorithm2;
            (zero_ops(bifunctions), maps)
        }
    };

    let mut family = ProblemFamily::new(base, geps, maps)?;
    if let (Corollary::Cor5, FamilyOrigin::Custom) = (corollary, family.origin) {
        family = tag_section4(family);
    }
    Ok(Preset { corollary, family, mode, epsilon_variant, beta })
}

/// Recognises a family assembled from the benchmark members so its solution
/// set stays known.
fn tag_section4(family: ProblemFamily) -> ProblemFamily {
    use crate::operators::ScalarFn;
    let (n, m) = (family.geps.len(), family.maps.len());
    let Ok(spec) = Section4Spec::new(n, m) else { return family };
    let ops_match = family.geps.iter().enumerate().all(|(k, g)| {
        g.a.is_zero()
            && matches!(&g.f, Bifunction::ScalarMonotone(s)
                if matches!(s.b, ScalarFn::TanKink { xi } if xi == spec.xi(k + 1)) && s.lo == -1.0 && s.hi == 1.0)
    });
    let maps_match = family
        .maps
        .iter()
        .enumerate()
        .all(|(k, s)| matches!(s.map, SelfMap::Quadratic { c } if c == spec.c(k + 1)));
    let base_match = matches!(&family.base, BaseSet::Box { lo, hi } if lo.as_slice() == [-1.0] && hi.as_slice() == [1.0]);
    if ops_match && maps_match && base_match {
        family.with_origin(FamilyOrigin::Section4 { n_ops: n, n_maps: m })
    } else {
        family
    }
}

/// Analytically known solution set of a built-in family.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionSet {
    /// `[lo, hi]` in one dimension.
    Interval { lo: f64, hi: f64 },
    Point(Vector),
}

impl SolutionSet {
    pub fn contains(&self, u: &Vector, tol: f64) -> bool {
        match self {
            SolutionSet::Interval { lo, hi } => u.dim() == 1 && u[0] >= lo - tol && u[0] <= hi + tol,
            SolutionSet::Point(p) => u.dim() == p.dim() && u.dist(p) <= tol,
        }
    }

    /// `P_F(x0)`.
    pub fn project(&self, x0: &Vector) -> Vector {
        match self {
            SolutionSet::Interval { lo, hi } => Vector::scalar(x0[0].clamp(*lo, *hi)),
            SolutionSet::Point(p) => p.clone(),
        }
    }

    /// `count` points of the set, evenly spread (endpoints included).
    pub fn samples(&self, count: usize) -> Vec<Vector> {
        match self {
            SolutionSet::Interval { lo, hi } => {
                let count = count.max(2);
                (0..count)
                    .map(|k| Vector::scalar(lo + (hi - lo) * k as f64 / (count - 1) as f64))
                    .collect()
            }
            SolutionSet::Point(p) => vec![p.clone()],
        }
    }
}

/// `F` for the benchmark family (`[-1, xi_1]`) and for variational
/// inequalities of a single affine zero `scale·(x - s)` with identity maps
/// (`{P_C(s)}`).
pub fn known_solution_set(problem: &ProblemFamily) -> Result<SolutionSet> {
    if let FamilyOrigin::Section4 { n_ops, n_maps } = problem.origin {
        let spec = Section4Spec::new(n_ops, n_maps)?;
        return Ok(SolutionSet::Interval { lo: -1.0, hi: spec.xi(1) });
    }
    let maps_identity = problem.maps.iter().all(|s| matches!(s.map, SelfMap::Identity));
    let mut shift: Option<&Vector> = None;
    let mut all_affine_vi = !problem.geps.is_empty();
    for g in &problem.geps {
        match (&g.f, &g.a.map) {
            (Bifunction::Zero, IsmMap::Affine { shift: s, .. }) => match shift {
                None => shift = Some(s),
                Some(prev) if prev == s => {}
                Some(_) => all_affine_vi = false,
            },
            _ => all_affine_vi = false,
        }
    }
    let simple_base = matches!(problem.base, BaseSet::Box { .. } | BaseSet::Ball { .. });
    match shift {
        Some(s) if all_affine_vi && maps_identity && simple_base => Ok(SolutionSet::Point(problem.base.project(s))),
        _ => Err(Error::Unsupported("no analytic solution set for this family".into())),
    }
}
