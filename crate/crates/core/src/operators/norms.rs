//! Operator norms on (weighted) L² by power iteration, weak (1,1) ratios,
//! and the scalar oscillation/median measurements attached to an operator.

use crate::dyadic::{CubeId, DyadicSystem};
use crate::error::{CoreError, Result};
use crate::median::{median, oscillation, LocalMeasure, SampledFunction};
use crate::operators::discrete::DiscreteOperator;
use crate::operators::kernel::{apply_cz, Kernel};
use crate::operators::weight::Weight;
use crate::space::QuasiMetricSpace;
use crate::util::{compensated_sum, mix64, CompensatedSum};

const MAX_ITERATIONS: usize = 10_000;
const RELATIVE_TOL: f64 = 1e-10;
const STABLE_STEPS: usize = 3;

/// Result of a norm measurement by power iteration on the normal operator.
#[derive(Debug, Clone)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Square-rooted Rayleigh quotient after each iteration of the winning run.
    pub trace: Vec<f64>,
    /// Final ν-normalized iterate — the estimated top right-singular vector,
    /// i.e. a function that (nearly) attains the norm.
    pub vector: Vec<f64>,
}

struct WeightedGeometry<'a> {
    space: &'a QuasiMetricSpace,
    weight: Option<&'a Weight>,
}

impl WeightedGeometry<'_> {
    fn nu(&self, x: usize) -> f64 {
        self.weight.map_or(1.0, |w| w.value(x)) * self.space.mass_of(x)
    }

    fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        compensated_sum((0..u.len()).map(|x| u[x] * v[x] * self.nu(x)))
    }

    fn norm(&self, u: &[f64]) -> f64 {
        self.dot(u, u).max(0.0).sqrt()
    }
}

/// One power-iteration run for `‖L‖` on `L²(ν)`, `ν = w·dm`: iterates the
/// normal operator `L^♯ L`, where `L^♯ g = (1/w)·Lᵀ(w g)` is the ν-adjoint.
fn power_run(
    apply: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    apply_t: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    geo: &WeightedGeometry<'_>,
    start: Vec<f64>,
) -> Result<NormEstimate> {
    let norm0 = geo.norm(&start);
    if norm0 == 0.0 {
        return Err(CoreError::InvalidValue("power iteration started at zero".into()));
    }
    let mut f: Vec<f64> = start.iter().map(|v| v / norm0).collect();
    let mut trace = Vec::new();
    let mut prev = f64::NAN;
    let mut stable = 0usize;
    for it in 1..=MAX_ITERATIONS {
        let u = apply(&f)?;
        let wu: Vec<f64> = match geo.weight {
            Some(w) => (0..u.len()).map(|x| u[x] * w.value(x)).collect(),
            None => u.clone(),
        };
        let tu = apply_t(&wu)?;
        let h: Vec<f64> = match geo.weight {
            Some(w) => (0..tu.len()).map(|x| tu[x] / w.value(x)).collect(),
            None => tu,
        };
        // f is ν-normalized, so ⟨h, f⟩_ν = ‖Lf‖²_ν is the Rayleigh quotient.
        let lambda = geo.dot(&h, &f).max(0.0);
        trace.push(lambda.sqrt());
        let hn = geo.norm(&h);
        if hn == 0.0 {
            return Ok(NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
                trace,
                vector: f,
            });
        }
        if (lambda - prev).abs() <= RELATIVE_TOL * lambda.max(f64::MIN_POSITIVE) {
            stable += 1;
            if stable >= STABLE_STEPS {
                return Ok(NormEstimate {
                    value: lambda.sqrt(),
                    iterations: it,
                    converged: true,
                    trace,
                    vector: f,
                });
            }
        } else {
            stable = 0;
        }
        prev = lambda;
        f = h.iter().map(|v| v / hn).collect();
    }
    Ok(NormEstimate {
        value: prev.max(0.0).sqrt(),
        iterations: MAX_ITERATIONS,
        converged: false,
        trace,
        vector: f,
    })
}

/// Measures the norm of an arbitrary linear map on `L²(w·dm)` given its
/// forward and (measure-)transpose applications, by power iteration on the
/// normal operator from a seeded random start and a constant start; the
/// larger estimate wins. `apply_t` must satisfy `⟨Lf, g⟩_m = ⟨f, Lᵀg⟩_m`.
pub fn linear_l2_norm(
    space: &QuasiMetricSpace,
    weight: Option<&Weight>,
    seed: u64,
    apply: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    apply_t: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<NormEstimate> {
    if let Some(w) = weight {
        if w.len() != space.n() {
            return Err(CoreError::InvalidValue(format!(
                "weight has {} values for a space of {} points",
                w.len(),
                space.n()
            )));
        }
    }
    let geo = WeightedGeometry { space, weight };
    let mut state = mix64(seed ^ 0x9e3779b97f4a7c15);
    let random: Vec<f64> = (0..space.n())
        .map(|_| {
            state = mix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    let constant = vec![1.0; space.n()];
    let a = power_run(apply, apply_t, &geo, random)?;
    let b = power_run(apply, apply_t, &geo, constant)?;
    let (winner, other) = if a.value >= b.value { (a, b.converged) } else { (b, a.converged) };
    Ok(NormEstimate { converged: winner.converged && other, ..winner })
}

/// Measures `‖op‖_{L²(w·dm) → L²(w·dm)}` of the linear form of a discrete
/// operator. `w = None` is the unweighted norm. Deterministic for a fixed
/// seed.
pub fn operator_l2_norm(
    op: &DiscreteOperator,
    space: &QuasiMetricSpace,
    weight: Option<&Weight>,
    seed: u64,
) -> Result<NormEstimate> {
    if op.terms.is_empty() {
        return Ok(NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
            trace: vec![],
            vector: vec![0.0; space.n()],
        });
    }
    let op_t = op.adjoint();
    linear_l2_norm(
        space,
        weight,
        seed,
        &|f| op.apply_linear(space, f),
        &|f| op_t.apply_linear(space, f),
    )
}

/// Weighted operator norm of a singular kernel operator `T`.
pub fn cz_l2_norm(
    kernel: &Kernel,
    space: &QuasiMetricSpace,
    weight: Option<&Weight>,
    seed: u64,
) -> Result<NormEstimate> {
    use crate::operators::kernel::apply_cz_adjoint;
    let fwd = |f: &[f64]| -> Result<Vec<f64>> {
        Ok(apply_cz(kernel, space, &SampledFunction::new(f.to_vec())?)?.into_values())
    };
    let bwd = |f: &[f64]| -> Result<Vec<f64>> {
        Ok(apply_cz_adjoint(kernel, space, &SampledFunction::new(f.to_vec())?)?.into_values())
    };
    linear_l2_norm(space, weight, seed, &fwd, &bwd)
}

/// `sup_{a>0} a·μ{|g| > a} / ‖f‖₁`: the weak-(1,1) quotient of an output `g`
/// against an input `f`. The supremum over all thresholds is attained at a
/// distinct value `v` of `|g|` as `v·μ{|g| ≥ v}`.
pub fn weak_11_ratio(
    space: &QuasiMetricSpace,
    g: &SampledFunction,
    f: &SampledFunction,
) -> Result<f64> {
    if g.len() != space.n() || f.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "sampled lengths {} and {} for a space of {} points",
            g.len(),
            f.len(),
            space.n()
        )));
    }
    let f_l1 = compensated_sum((0..space.n()).map(|x| f[x].abs() * space.mass_of(x)));
    if f_l1 == 0.0 {
        return Err(CoreError::InvalidValue(
            "weak-norm quotient needs a nonzero reference function".into(),
        ));
    }
    let mut pairs: Vec<(f64, f64)> =
        (0..space.n()).map(|x| (g[x].abs(), space.mass_of(x))).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("sampled values are finite"));
    let mut mass_above = CompensatedSum::new();
    let mut best: f64 = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        if v == 0.0 {
            break;
        }
        while i < pairs.len() && pairs[i].0 == v {
            mass_above.add(pairs[i].1);
            i += 1;
        }
        best = best.max(v * mass_above.value());
    }
    Ok(best / f_l1)
}

/// The two sides of the local oscillation bound for a singular operator:
/// `lhs = ω_λ(|Tf − m(Tf,Q)| , Q)` against the dilation series
/// `rhs = Σ_{l≥1} 2^{-lη} avg_{2^l Q}|f|`, truncated at the first dilate
/// that already contains the whole space (later summands only repeat the
/// global average with geometrically vanishing weights).
#[derive(Debug, Clone)]
pub struct OscillationBound {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs/rhs`, with the convention 0/0 = 0.
    pub ratio: f64,
    /// Number of dilation summands used.
    pub terms: usize,
}

pub fn oscillation_bound_ratio(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    kernel: &Kernel,
    f: &SampledFunction,
    q: CubeId,
    lambda: f64,
) -> Result<OscillationBound> {
    let tf = apply_cz(kernel, space, f)?;
    let measure = LocalMeasure::from_points(space, system.members(q))?;
    let lhs = oscillation(&tf, &measure, lambda)?;
    let mut rhs = CompensatedSum::new();
    let mut terms = 0usize;
    for l in 1..=64i32 {
        let ball = system.dilate(q, 2f64.powi(l))?;
        let members = space.ball_members(ball)?;
        let avg = compensated_sum(
            members.iter().map(|&p| f[p as usize].abs() * space.mass_of(p as usize)),
        ) / space.ball_measure(ball)?;
        rhs.add(2f64.powf(-(l as f64) * kernel.eta) * avg);
        terms += 1;
        if members.len() == space.n() {
            break;
        }
    }
    let rhs = rhs.value();
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(OscillationBound { lhs, rhs, ratio, terms })
}

/// `‖m(opf, Q0)‖_{L²(w, Q0)} = |m(opf, Q0)| · w(Q0)^{1/2}` — the weighted
/// size of the median term subtracted in local decompositions.
pub fn median_term_norm(
    space: &QuasiMetricSpace,
    opf: &SampledFunction,
    q0_members: &[u32],
    w: &Weight,
) -> Result<f64> {
    if opf.len() != space.n() || w.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "sampled lengths {} and {} for a space of {} points",
            opf.len(),
            w.len(),
            space.n()
        )));
    }
    let measure = LocalMeasure::from_points(space, q0_members)?;
    let m = median(opf, &measure);
    Ok(m.abs() * w.set_mass(space, q0_members).sqrt())
}
