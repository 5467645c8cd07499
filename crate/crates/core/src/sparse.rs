//! The stopping-time construction and the sparse domination it yields.
//!
//! For a cube `Q0` and a function `f`, write `f_m = |f − m(f, Q0)|` and
//! `ω = ω_λ(f_m, Q0)` with `λ = ε/4` tied to the system's child-mass ratio.
//! `M` collects the inclusion-maximal strict descendants `Q` of `Q0` with
//! `m(f_m, Q) > ω`; `M̂` the inclusion-maximal parents of `M`. The masses of
//! `M̂` sum to at most half of `Q0`, which drives the recursion: applying the
//! step inside every `M̂` cube builds the sparse family `S(Q0)` generation by
//! generation, and the pointwise bound
//!
//! `|f(x) − m(f,Q0)| ≤ M#_{λ,Q0}(f)(x) + Σ_{Q ∈ S(Q0), x ∈ Q} ω_λ(|f − m(f,Q)|, Q)`
//!
//! holds at every positive-mass point — exactly, because on finite spaces
//! every chain of cubes ends in a singleton where medians evaluate the
//! function itself.
//!
//! Cubes with identical member sets (single-child chains, which finite
//! systems produce freely) are treated as one set: maximality always keeps
//! the coarsest representative, preserving the disjointness that the mass
//! bounds rely on.

use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeId, DyadicSystem};
use crate::error::{CoreError, Result};
use crate::median::{median, omega_lambda, oscillation, sharp_maximal, LocalMeasure, SampledFunction};
use crate::space::QuasiMetricSpace;
use crate::util::CompensatedSum;

/// Outcome of one stopping step.
#[derive(Debug, Clone)]
pub struct StoppingReport {
    /// Inclusion-maximal strict descendants with a large local median.
    pub m_cubes: Vec<CubeId>,
    /// Inclusion-maximal parents of `m_cubes`; pairwise disjoint.
    pub mhat_cubes: Vec<CubeId>,
    /// The driving threshold `ω_λ(|f − m(f,Q0)|, Q0)`.
    pub omega_threshold: f64,
    pub lambda: f64,
}

/// The recursive sparse family `S(Q0) = C_0 ∪ C_1 ∪ …`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseFamily {
    pub q0: CubeId,
    /// `generations[0] = [q0]`; each later cube sits inside one of the
    /// previous generation with the half-measure bound.
    pub generations: Vec<Vec<CubeId>>,
    pub lambda: f64,
    /// Set when `max_depth` stopped a nonempty frontier.
    pub truncated: bool,
}

impl SparseFamily {
    pub fn cubes(&self) -> impl Iterator<Item = CubeId> + '_ {
        self.generations.iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.generations.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.generations.is_empty()
    }
}

/// Pointwise comparison of the two sides of the domination inequality.
#[derive(Debug, Clone)]
pub struct DominationReport {
    /// Max over positive-mass `x ∈ Q0` of `lhs(x) − rhs(x)`.
    pub max_violation: f64,
    /// `max |f − m(f,Q0)|` over `Q0`: the scale the tolerance refers to.
    pub scale: f64,
    pub checked_points: usize,
}

impl DominationReport {
    /// Exact mathematics, floating arithmetic: a relative 1e-9 allowance.
    pub fn pass(&self) -> bool {
        self.max_violation <= 1e-9 * self.scale.max(1e-300)
    }
}

fn default_lambda(system: &DyadicSystem) -> f64 {
    system.eps_observed / 4.0
}

/// One stopping step at `q0`. `lambda` defaults to `ε/4`, the value the mass
/// bounds are proved for; other values are for sensitivity probes and may
/// legitimately fail the `Q0 ∉ M̂` assertion.
pub fn stopping_step(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    f: &SampledFunction,
    q0: CubeId,
    lambda: Option<f64>,
) -> Result<StoppingReport> {
    let lambda = lambda.unwrap_or_else(|| default_lambda(system));
    if f.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "function has {} values for a space of {} points",
            f.len(),
            space.n()
        )));
    }
    if q0 as usize >= system.cubes.len() {
        return Err(CoreError::IndexOutOfRange { index: q0 as usize, n: system.cubes.len() });
    }
    let q0_measure = LocalMeasure::from_points(space, system.members(q0))?;
    let m0 = median(f, &q0_measure);
    let f_m: Vec<f64> = f.iter().map(|&v| (v - m0).abs()).collect();
    let omega = omega_lambda(&f_m, &q0_measure, lambda)?;

    // Top-down: descend only where the defining inequality fails, so the
    // recorded cubes are exactly the inclusion-maximal ones (coarsest
    // representative in single-child chains).
    let mut m_cubes: Vec<CubeId> = Vec::new();
    let mut stack: Vec<CubeId> = system.cube(q0).children.clone().rev().collect();
    while let Some(id) = stack.pop() {
        let measure = LocalMeasure::from_points(space, system.members(id))?;
        if median(&f_m, &measure) > omega {
            m_cubes.push(id);
        } else {
            stack.extend(system.cube(id).children.clone().rev());
        }
    }
    m_cubes.sort_unstable();

    // Parents, deduplicated, then reduced to inclusion-maximal elements:
    // a parent is shadowed iff one of its strict tree ancestors (below q0)
    // is also a parent.
    let mut parents: Vec<CubeId> = m_cubes
        .iter()
        .map(|&id| system.cube(id).parent.expect("strict descendants have parents"))
        .collect();
    parents.sort_unstable();
    parents.dedup();
    if parents.contains(&q0) {
        return Err(CoreError::Verification(format!(
            "stopping step at cube {q0} produced Q0 itself as a parent of M \
             (lambda = {lambda} too large for the child-mass ratio?)"
        )));
    }
    let in_parents = |id: CubeId| parents.binary_search(&id).is_ok();
    let mhat_cubes: Vec<CubeId> = parents
        .iter()
        .copied()
        .filter(|&p| {
            let mut anc = system.cube(p).parent;
            while let Some(a) = anc {
                if a == q0 {
                    break;
                }
                if in_parents(a) {
                    return false;
                }
                anc = system.cube(a).parent;
            }
            true
        })
        .collect();

    Ok(StoppingReport { m_cubes, mhat_cubes, omega_threshold: omega, lambda })
}

/// Builds the recursive sparse family by applying [`stopping_step`] inside
/// every frontier cube until the frontier empties (or `max_depth` cuts it
/// off, which sets the `truncated` flag rather than failing silently).
pub fn build_sparse_family(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    f: &SampledFunction,
    q0: CubeId,
    lambda: Option<f64>,
    max_depth: usize,
) -> Result<SparseFamily> {
    let lambda = lambda.unwrap_or_else(|| default_lambda(system));
    let mut generations = vec![vec![q0]];
    let mut truncated = false;
    loop {
        let frontier = generations.last().unwrap();
        if frontier.is_empty() {
            generations.pop();
            break;
        }
        if generations.len() > max_depth {
            truncated = true;
            break;
        }
        let mut next: Vec<CubeId> = Vec::new();
        for &q in frontier {
            next.extend(stopping_step(space, system, f, q, Some(lambda))?.mhat_cubes);
        }
        next.sort_unstable();
        if next.is_empty() {
            break;
        }
        generations.push(next);
    }
    Ok(SparseFamily { q0, generations, lambda, truncated })
}

/// Evaluates both sides of the domination inequality at every point of `Q0`.
pub fn verify_domination(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    f: &SampledFunction,
    family: &SparseFamily,
) -> Result<DominationReport> {
    let q0 = family.q0;
    let q0_measure = LocalMeasure::from_points(space, system.members(q0))?;
    let m0 = median(f, &q0_measure);
    let sharp = sharp_maximal(space, system, f, q0, family.lambda)?;

    let mut rhs = vec![0.0f64; space.n()];
    for id in family.cubes() {
        let measure = LocalMeasure::from_points(space, system.members(id))?;
        let osc = oscillation(f, &measure, family.lambda)?;
        for &p in system.members(id) {
            rhs[p as usize] += osc;
        }
    }

    let mut max_violation = f64::NEG_INFINITY;
    let mut scale = 0.0f64;
    let members = system.members(q0);
    for &p in members {
        let x = p as usize;
        let lhs = (f[x] - m0).abs();
        scale = scale.max(lhs);
        max_violation = max_violation.max(lhs - (sharp[x] + rhs[x]));
    }
    Ok(DominationReport { max_violation, scale, checked_points: members.len() })
}

/// The exclusive sets `E(Q) = Q ∖ ⋃ (next-generation cubes inside Q)`,
/// in family order. They are pairwise disjoint, cover `Q0`, and each keeps
/// at least half of its cube's mass.
pub fn exclusive_sets(
    system: &DyadicSystem,
    family: &SparseFamily,
) -> Vec<(CubeId, Vec<u32>)> {
    let mut out = Vec::with_capacity(family.len());
    for (gen, cubes) in family.generations.iter().enumerate() {
        let next: &[CubeId] = family.generations.get(gen + 1).map_or(&[], Vec::as_slice);
        for &q in cubes {
            let (lo, hi) = system.cube(q).span;
            let mut removed = vec![false; (hi - lo) as usize];
            for &child in next {
                if system.is_subset(child, q) {
                    let (clo, chi) = system.cube(child).span;
                    for pos in clo..chi {
                        removed[(pos - lo) as usize] = true;
                    }
                }
            }
            let kept: Vec<u32> = (lo..hi)
                .filter(|&pos| !removed[(pos - lo) as usize])
                .map(|pos| system.leaf_order[pos as usize])
                .collect();
            out.push((q, kept));
        }
    }
    out
}

/// Total mass of a point list (exclusive sets may be empty; measure 0 then).
pub fn set_mass(space: &QuasiMetricSpace, points: &[u32]) -> f64 {
    let mut sum = CompensatedSum::new();
    for &p in points {
        sum.add(space.mass_of(p as usize));
    }
    sum.value()
}
