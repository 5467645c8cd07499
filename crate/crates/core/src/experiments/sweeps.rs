//! Measurement sweeps: weighted norm growth against the A₂ characteristic,
//! weak-(1,1) and L² growth against operator complexity, the oscillation
//! battery for the singular kernel, and deterministic CSV/SVG emission.
//!
//! Every sweep is a pure function of its configuration: cells are seeded by
//! `cell_seed(config.seed, label, coords)` with value-based coordinates
//! (the weight exponent's bit pattern, the complexity itself), so a single
//! cell rerun in isolation reproduces the full sweep's rows byte for byte.

use std::collections::HashMap;
use std::path::Path;

use serde_json::json;

use crate::dyadic::CubeId;
use crate::error::{CoreError, Result};
use crate::experiments::battery::CaseRng;
use crate::experiments::config::RunConfig;
use crate::experiments::report::{fmt_float, Chart, Series, Table};
use crate::median::{oscillation, LocalMeasure, SampledFunction};
use crate::operators::{
    a2_characteristic, a2_dyadic, apply_cz, build_a_k, build_b, cz_decompose,
    discretization_ratio, level_window_pairs, linear_l2_norm, maximal_function,
    operator_l2_norm, oscillation_bound_ratio, weak_11_ratio, weighted_ball_maximal,
    weighted_dyadic_maximal, CzParts, DiscreteOperator, Kernel, MeasuredConstants,
    NormEstimate, Weight,
};
use crate::space::QuasiMetricSpace;
use crate::sparse::{build_sparse_family, exclusive_sets, SparseFamily};
use crate::util::{cell_seed, compensated_sum, fit_line, LineFit};

/// Functions fed to sublinear-operator suprema (weak-type quotients and
/// maximal-function norms). Spikes carry the extremal mass for weak (1,1),
/// so they lead; sign vectors and tie-rich atomic vectors cover the rest.
const OPERATOR_BATTERY: usize = 96;

/// Functions fed to the weighted-maximal norm supremum per weight.
const MAXIMAL_BATTERY: usize = 25;

/// One measured quantity in one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Weight exponent of the cell (0 for unweighted measurements).
    pub alpha: f64,
    /// A₂ characteristic of that weight (exact supremum over open balls).
    pub a2: f64,
    /// Operator complexity of the cell (0 when not applicable).
    pub k: u32,
    /// Operator the measurement refers to: `T`, `A`, `B_j`, `M_w`, …
    pub operator: String,
    /// What was measured: `l2_norm`, `weak11_sup`, `gamma`, …
    pub measure: String,
    pub value: f64,
    /// `value / (a2 · max(k, 1))` for norm-type rows; measure-specific
    /// normalizations are documented where the row is produced.
    pub ratio: f64,
    /// Power-iteration convergence where applicable, `true` otherwise.
    pub converged: bool,
    /// Iteration (or battery-case) count behind the value.
    pub iterations: usize,
    /// Seed that reproduces this cell in isolation.
    pub cell_seed: u64,
}

/// A fitted log₁₀-log₁₀ (or linear) trend over one operator's rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub operator: String,
    pub measure: String,
    pub slope: f64,
    pub intercept: f64,
    pub std_err: f64,
    pub points: usize,
}

/// One Rayleigh-quotient sample of a norm measurement, for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub operator: String,
    pub measure: String,
    pub alpha: f64,
    pub k: u32,
    pub iteration: usize,
    pub rayleigh: f64,
}

/// A finished sweep: rows, fitted trends, norm traces, the measured
/// constants, and any violated invariants.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub label: String,
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<SlopeRow>,
    pub traces: Vec<TraceRow>,
    pub constants: MeasuredConstants,
    /// Human-readable descriptions of violated invariants; empty on success.
    pub problems: Vec<String>,
}

/// `util::fit_line` over point pairs; `None` without two distinct
/// abscissae (the fit itself would be degenerate there).
fn fit_points(points: &[(f64, f64)]) -> Option<LineFit> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    if xs.iter().all(|&x| x == xs[0]) {
        return None;
    }
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    Some(fit_line(&xs, &ys))
}

/// Everything a sweep shares across its cells: the space, the base dyadic
/// system, adjacent systems, the kernel, and one sparse family stopped on
/// the kernel image of a seeded function (the pipeline the decomposition
/// is designed around; a zero kernel falls back to the function itself).
pub(crate) struct SweepContext {
    pub space: QuasiMetricSpace,
    pub system: crate::dyadic::DyadicSystem,
    pub adjacent: crate::adjacent::AdjacentSystems,
    pub kernel: Kernel,
    pub family: SparseFamily,
    pub family_f: SampledFunction,
    /// Mass of the exclusive set `E(Q)` per family cube.
    pub exclusive_mass: HashMap<CubeId, f64>,
}

pub(crate) fn build_context(config: &RunConfig) -> Result<SweepContext> {
    config.validate()?;
    let space = config.build_space()?;
    let system = config.build_system(&space)?;
    let adjacent = config.build_adjacent(&space)?;
    let kernel = config.build_kernel()?;
    let root = system.root().ok_or_else(|| {
        CoreError::Construction("the configured system has no single root".into())
    })?;
    let mut rng = CaseRng::new(cell_seed(config.seed, "family", &[]));
    let g = SampledFunction::new((0..space.n()).map(|_| rng.symmetric()).collect())?;
    let tg = apply_cz(&kernel, &space, &g)?;
    let family_f = if tg.iter().any(|&v| v != 0.0) { tg } else { g };
    let family = build_sparse_family(&space, &system, &family_f, root, None, 64)?;
    let exclusive_mass = exclusive_sets(&system, &family)
        .into_iter()
        .map(|(q, pts)| {
            (q, compensated_sum(pts.iter().map(|&p| space.mass_of(p as usize))))
        })
        .collect();
    Ok(SweepContext { space, system, adjacent, kernel, family, family_f, exclusive_mass })
}

/// Dense matrix forms of the kernel operator and its measure-transpose,
/// both row-major so power iteration runs on contiguous rows instead of
/// re-evaluating the kernel per entry per step.
pub(crate) struct DenseCz {
    n: usize,
    fwd: Vec<f64>,
    bwd: Vec<f64>,
}

impl DenseCz {
    pub fn new(kernel: &Kernel, space: &QuasiMetricSpace) -> Self {
        let n = space.n();
        let mut fwd = vec![0.0; n * n];
        let mut bwd = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let k = kernel.eval(space, x, y);
                fwd[x * n + y] = k * space.mass_of(y);
                bwd[y * n + x] = k * space.mass_of(x);
            }
        }
        Self { n, fwd, bwd }
    }

    fn mat_vec(m: &[f64], n: usize, f: &[f64]) -> Vec<f64> {
        (0..n)
            .map(|x| m[x * n..(x + 1) * n].iter().zip(f).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        Self::mat_vec(&self.fwd, self.n, f)
    }

    pub fn apply_t(&self, f: &[f64]) -> Vec<f64> {
        Self::mat_vec(&self.bwd, self.n, f)
    }
}

/// A fixed, seeded function battery: one constant, then cycles of a point
/// spike, a ±1 sign vector, and a tie-rich atomic vector.
pub(crate) fn function_battery(
    space: &QuasiMetricSpace,
    seed: u64,
    count: usize,
) -> Vec<SampledFunction> {
    let n = space.n();
    let mut rng = CaseRng::new(seed);
    let mut out = vec![SampledFunction::new(vec![1.0; n]).expect("constant battery entry")];
    while out.len() < count.max(4) {
        let vals: Vec<f64> = match out.len() % 3 {
            1 => {
                let mut v = vec![0.0; n];
                v[rng.pick(n)] = 1.0;
                v
            }
            2 => (0..n).map(|_| if rng.unit() < 0.5 { -1.0 } else { 1.0 }).collect(),
            _ => (0..n).map(|_| rng.value()).collect(),
        };
        if vals.iter().all(|&v| v == 0.0) {
            continue;
        }
        out.push(SampledFunction::new(vals).expect("battery entry"));
    }
    out
}

fn weighted_l2_norm(space: &QuasiMetricSpace, w: Option<&Weight>, f: &[f64]) -> f64 {
    compensated_sum(
        (0..f.len()).map(|x| f[x] * f[x] * w.map_or(1.0, |w| w.value(x)) * space.mass_of(x)),
    )
    .max(0.0)
    .sqrt()
}

fn m_average_abs(space: &QuasiMetricSpace, points: &[u32], f: &[f64]) -> f64 {
    let mass = compensated_sum(points.iter().map(|&p| space.mass_of(p as usize)));
    let sum = compensated_sum(
        points.iter().map(|&p| f[p as usize].abs() * space.mass_of(p as usize)),
    );
    if mass == 0.0 { 0.0 } else { sum / mass }
}

/// The guaranteed-bound chain for one localized operator at a measured
/// extremal pair `(f, g = Bf)`, every link a number (all normalized by
/// `‖f‖₂‖g‖₂`):
///
/// `⟨Bf, g⟩ ≤ Σ_Q avg_{Q*}|f|·avg_Q|g|·|Q| ≤ 2 Σ_Q avg_{Q*}|f|·avg_Q|g|·|E(Q)|`
/// `≤ 2 ∫ M_j|f|·M₀|g| dm ≤ 2‖M_j f‖₂‖M₀ g‖₂ = γ·‖f‖₂‖g‖₂`,
///
/// using that `E(Q)` holds at least half of `Q` and the sets are disjoint,
/// that `Q* ` is a cube of adjacent system `j` containing `E(Q)`, and that
/// `Q ⊇ E(Q)` is a base-system cube; `M_j`, `M₀` are the corresponding
/// dyadic maximal functions. So `‖B‖₂ ≤ γ` with every link checkable.
#[derive(Debug, Clone, Copy)]
pub struct GammaChain {
    pub pairing: f64,
    pub term_sum: f64,
    pub exclusive_sum: f64,
    pub maximal_integral: f64,
    pub gamma: f64,
}

fn gamma_chain(
    ctx: &SweepContext,
    op: &DiscreteOperator,
    f: &[f64],
) -> Result<GammaChain> {
    let space = &ctx.space;
    let g = op.apply_linear(space, f)?;
    let nf = weighted_l2_norm(space, None, f);
    let ng = weighted_l2_norm(space, None, &g);
    if nf == 0.0 || ng == 0.0 {
        return Ok(GammaChain {
            pairing: 0.0,
            term_sum: 0.0,
            exclusive_sum: 0.0,
            maximal_integral: 0.0,
            gamma: 0.0,
        });
    }
    let j = op
        .terms
        .first()
        .and_then(|t| t.star)
        .map(|(j, _)| j as usize)
        .ok_or_else(|| {
            CoreError::InvalidValue("localized operator carries no cover assignment".into())
        })?;
    if op.terms.iter().any(|t| t.star.map(|(s, _)| s as usize) != Some(j)) {
        return Err(CoreError::InvalidValue(
            "localized operator mixes adjacent systems".into(),
        ));
    }
    let pairing = compensated_sum(
        (0..space.n()).map(|x| g[x] * g[x] * space.mass_of(x)),
    ) / (nf * ng);
    let mut terms = Vec::with_capacity(op.terms.len());
    for t in &op.terms {
        let avg_star = t.coefficient
            * compensated_sum(
                t.source.iter().map(|&p| f[p as usize].abs() * space.mass_of(p as usize)),
            );
        let avg_cube = m_average_abs(space, &t.target, &g);
        let cube_mass =
            compensated_sum(t.target.iter().map(|&p| space.mass_of(p as usize)));
        let e_mass = *ctx.exclusive_mass.get(&t.cube).ok_or_else(|| {
            CoreError::InvalidValue("operator term cube outside the sparse family".into())
        })?;
        terms.push((avg_star, avg_cube, cube_mass, e_mass));
    }
    let term_sum =
        compensated_sum(terms.iter().map(|&(a, b, m, _)| a * b * m)) / (nf * ng);
    let exclusive_sum =
        2.0 * compensated_sum(terms.iter().map(|&(a, b, _, e)| a * b * e)) / (nf * ng);
    let f_abs = SampledFunction::new(f.to_vec())?;
    let g_abs = SampledFunction::new(g.clone())?;
    let mj = weighted_dyadic_maximal(space, &ctx.adjacent.systems[j], None, &f_abs)?;
    let m0 = weighted_dyadic_maximal(space, &ctx.system, None, &g_abs)?;
    let maximal_integral = 2.0
        * compensated_sum((0..space.n()).map(|x| mj[x] * m0[x] * space.mass_of(x)))
        / (nf * ng);
    let gamma = 2.0 * weighted_l2_norm(space, None, &mj) * weighted_l2_norm(space, None, &m0)
        / (nf * ng);
    Ok(GammaChain { pairing, term_sum, exclusive_sum, maximal_integral, gamma })
}

struct A2Shared {
    dense: DenseCz,
    a_op: DiscreteOperator,
    b_ops: Vec<DiscreteOperator>,
    battery: Vec<SampledFunction>,
    k: u32,
}

fn a2_shared(config: &RunConfig, ctx: &SweepContext) -> Result<A2Shared> {
    let k = config.complexities.first().copied().unwrap_or(1).max(1);
    Ok(A2Shared {
        dense: DenseCz::new(&ctx.kernel, &ctx.space),
        a_op: build_a_k(&ctx.space, &ctx.system, &ctx.family, k)?,
        b_ops: build_b(&ctx.space, &ctx.system, &ctx.family, &ctx.adjacent, k)?,
        battery: function_battery(
            &ctx.space,
            cell_seed(config.seed, "maximal-battery", &[]),
            MAXIMAL_BATTERY,
        ),
        k,
    })
}

fn a2_cell(
    config: &RunConfig,
    ctx: &SweepContext,
    shared: &A2Shared,
    alpha: f64,
) -> Result<(Vec<SweepRow>, Vec<TraceRow>)> {
    let seed = cell_seed(config.seed, "a2", &[alpha.to_bits()]);
    let space = &ctx.space;
    let w = config.build_weight(space, alpha)?;
    let a2 = a2_characteristic(space, &w, None)?;
    let a2d = a2_dyadic(space, &ctx.system, &w)?;
    let kk = f64::from(shared.k.max(1));
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let push_norm = |rows: &mut Vec<SweepRow>,
                         traces: &mut Vec<TraceRow>,
                         operator: &str,
                         k: u32,
                         ratio_div: f64,
                         est: &NormEstimate| {
        for (i, &r) in est.trace.iter().enumerate() {
            traces.push(TraceRow {
                operator: operator.to_string(),
                measure: "l2_norm".into(),
                alpha,
                k,
                iteration: i + 1,
                rayleigh: r,
            });
        }
        rows.push(SweepRow {
            alpha,
            a2,
            k,
            operator: operator.to_string(),
            measure: "l2_norm".into(),
            value: est.value,
            ratio: est.value / ratio_div,
            converged: est.converged,
            iterations: est.iterations,
            cell_seed: seed,
        });
    };

    // Dyadic-against-ball characteristic quotient (the D₀ ingredient).
    rows.push(SweepRow {
        alpha,
        a2,
        k: 0,
        operator: "w".into(),
        measure: "a2_dyadic_ratio".into(),
        value: a2d / a2,
        ratio: a2d / a2,
        converged: true,
        iterations: 0,
        cell_seed: seed,
    });

    let est = linear_l2_norm(
        space,
        Some(&w),
        cell_seed(seed, "T", &[]),
        &|f| Ok(shared.dense.apply(f)),
        &|f| Ok(shared.dense.apply_t(f)),
    )?;
    push_norm(&mut rows, &mut traces, "T", 0, a2, &est);

    let est = operator_l2_norm(&shared.a_op, space, Some(&w), cell_seed(seed, "A", &[]))?;
    push_norm(&mut rows, &mut traces, "A", shared.k, a2 * kk, &est);

    for (j, op) in shared.b_ops.iter().enumerate() {
        if op.terms.is_empty() {
            continue;
        }
        let est =
            operator_l2_norm(op, space, Some(&w), cell_seed(seed, "B", &[j as u64]))?;
        push_norm(&mut rows, &mut traces, &format!("B_{j}"), shared.k, a2 * kk, &est);
    }

    let mut best = 0.0f64;
    for f in &shared.battery {
        let mf = weighted_ball_maximal(space, &w, f)?;
        let denom = weighted_l2_norm(space, Some(&w), f);
        if denom > 0.0 {
            best = best.max(weighted_l2_norm(space, Some(&w), &mf) / denom);
        }
    }
    rows.push(SweepRow {
        alpha,
        a2,
        k: 0,
        operator: "M_w".into(),
        measure: "l2_battery_sup".into(),
        value: best,
        ratio: best,
        converged: true,
        iterations: shared.battery.len(),
        cell_seed: seed,
    });
    Ok((rows, traces))
}

/// Sweeps the configured weight exponents at the first configured
/// complexity, measuring `T`, the dilated-ball operator `A`, every
/// localized operator `B_j` on `L²(w)`, and the weighted maximal battery,
/// with log-log trends of norm against characteristic.
pub fn run_a2_sweep(config: &RunConfig) -> Result<SweepResult> {
    let ctx = build_context(config)?;
    let shared = a2_shared(config, &ctx)?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for &alpha in &config.weights.alphas {
        let (r, t) = a2_cell(config, &ctx, &shared, alpha)?;
        rows.extend(r);
        traces.extend(t);
    }
    let slopes = norm_slopes(&rows, |r| (r.a2, r.value));
    let mut constants = MeasuredConstants::default();
    constants.d0 = max_value(&rows, |r| r.measure == "a2_dyadic_ratio");
    constants.d7 = max_value(&rows, |r| r.operator == "M_w");
    let problems = common_problems(&rows);
    Ok(SweepResult { label: "a2".into(), rows, slopes, traces, constants, problems })
}

/// Reruns one weight cell of the A₂ sweep in isolation. When `alpha` is one
/// of the configured exponents the rows equal the full sweep's byte for
/// byte; `k` overrides the sweep complexity (defaults to the configured
/// one).
pub fn run_a2_cell(config: &RunConfig, alpha: f64, k: Option<u32>) -> Result<Vec<SweepRow>> {
    if !alpha.is_finite() || alpha.abs() >= config.space.dim as f64 {
        return Err(CoreError::InvalidValue(format!(
            "alpha = {alpha} must satisfy |alpha| < dim = {}",
            config.space.dim
        )));
    }
    let ctx = build_context(config)?;
    let mut shared = a2_shared(config, &ctx)?;
    if let Some(k) = k {
        if k != shared.k {
            if k == 0 || k > 32 {
                return Err(CoreError::InvalidValue(format!("k = {k} must lie in 1..=32")));
            }
            shared.k = k;
            shared.a_op = build_a_k(&ctx.space, &ctx.system, &ctx.family, k)?;
            shared.b_ops =
                build_b(&ctx.space, &ctx.system, &ctx.family, &ctx.adjacent, k)?;
        }
    }
    a2_cell(config, &ctx, &shared, alpha).map(|(rows, _)| rows)
}

struct ComplexityShared {
    w: Option<Weight>,
    alpha: f64,
    a2: f64,
    battery: Vec<SampledFunction>,
    parts: Vec<CzParts>,
    lambda: f64,
    sample_cubes: Vec<CubeId>,
}

fn complexity_shared(config: &RunConfig, ctx: &SweepContext) -> Result<ComplexityShared> {
    let alpha = config.weights.alphas.first().copied().unwrap_or(0.0);
    let w = if alpha == 0.0 {
        None
    } else {
        Some(config.build_weight(&ctx.space, alpha)?)
    };
    let a2 = match &w {
        Some(w) => a2_characteristic(&ctx.space, w, None)?,
        None => 1.0,
    };
    let mut battery = function_battery(
        &ctx.space,
        cell_seed(config.seed, "weak-battery", &[]),
        OPERATOR_BATTERY.min(config.fuzz.family_cases.max(8)),
    );
    // Weak-type extremizers: spikes at the most deeply nested family
    // points. An atom sitting in a long chain of family cubes makes the
    // adjoint stack one plateau per chain level — the mechanism by which
    // the weak-(1,1) constant actually grows with complexity. Random
    // spikes rarely land on the deepest chain, so these are added
    // deterministically (appended: battery prefixes stay stable).
    let n = ctx.space.n();
    let mut depth = vec![0u32; n];
    for q in ctx.family.cubes() {
        for &p in ctx.system.members(q) {
            depth[p as usize] += 1;
        }
    }
    let mut nested: Vec<usize> = (0..n).filter(|&p| depth[p] >= 2).collect();
    nested.sort_by(|&a, &b| depth[b].cmp(&depth[a]).then(a.cmp(&b)));
    for &p in nested.iter().take(4) {
        let mut vals = vec![0.0; n];
        vals[p] = 1.0;
        battery.push(SampledFunction::new(vals)?);
    }
    // CZ splittings of a concentrated probe: the unit atom at the weight
    // pole. Its maximal function decays away from the pole, so super-level
    // sets are large and the Whitney cover spans many scales — the regime
    // the good-part and window quotients are about. (The family function
    // itself is too flat: its maximal function barely exceeds its mean, and
    // the Whitney cubes degenerate to near-singletons.) Heights are three
    // geometric interior points of the probe's maximal-function range, so
    // the super-level set is never empty and never the whole space.
    let mut probe_vals = vec![0.0; n];
    probe_vals[config.weights.pole.min(n - 1)] = 1.0;
    let probe = SampledFunction::new(probe_vals)?;
    let mprobe = maximal_function(&ctx.space, &probe, None)?;
    let m_top = mprobe.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let m_bot = mprobe.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let mut parts = Vec::new();
    if m_bot > 0.0 && m_top > m_bot * (1.0 + 1e-9) {
        let spread = m_top / m_bot;
        for i in 1..=3 {
            let height = m_bot * spread.powf(i as f64 / 4.0);
            parts.push(cz_decompose(&ctx.space, &ctx.system, &probe, height)?);
        }
    }
    let lambda = ctx.system.eps_observed / 4.0;
    let family_cubes: Vec<CubeId> =
        ctx.family.generations.iter().flatten().copied().collect();
    let sample_cubes = sample_distinct(
        &family_cubes,
        16,
        cell_seed(config.seed, "oscillation-cubes", &[]),
    );
    Ok(ComplexityShared { w, alpha, a2, battery, parts, lambda, sample_cubes })
}

/// Picks up to `count` distinct entries of `pool`, deterministically.
fn sample_distinct(pool: &[CubeId], count: usize, seed: u64) -> Vec<CubeId> {
    if pool.len() <= count {
        return pool.to_vec();
    }
    let mut rng = CaseRng::new(seed);
    let mut out: Vec<CubeId> = Vec::with_capacity(count);
    while out.len() < count {
        let q = pool[rng.pick(pool.len())];
        if !out.contains(&q) {
            out.push(q);
        }
    }
    out
}

fn complexity_cell(
    config: &RunConfig,
    ctx: &SweepContext,
    shared: &ComplexityShared,
    k: u32,
) -> Result<(Vec<SweepRow>, Vec<TraceRow>, Vec<String>)> {
    let seed = cell_seed(config.seed, "complexity", &[u64::from(k)]);
    let space = &ctx.space;
    let kk = f64::from(k.max(1));
    let (alpha, a2) = (shared.alpha, shared.a2);
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut problems = Vec::new();

    let a_op = build_a_k(space, &ctx.system, &ctx.family, k)?;
    let b_ops = build_b(space, &ctx.system, &ctx.family, &ctx.adjacent, k)?;

    let disc = discretization_ratio(&a_op, &b_ops)?;
    rows.push(SweepRow {
        alpha,
        a2,
        k,
        operator: "A".into(),
        measure: "discretization_ratio".into(),
        value: disc,
        ratio: disc,
        converged: true,
        iterations: a_op.terms.len(),
        cell_seed: seed,
    });

    let mut window_max: Option<i64> = None;
    let mut window_pairs = 0usize;
    for (j, op) in b_ops.iter().enumerate() {
        if op.terms.is_empty() {
            continue;
        }
        let name = format!("B_{j}");
        let est = operator_l2_norm(
            op,
            space,
            shared.w.as_ref(),
            cell_seed(seed, "norm", &[j as u64]),
        )?;
        let est_t = operator_l2_norm(
            &op.adjoint(),
            space,
            shared.w.as_ref(),
            cell_seed(seed, "norm-adjoint", &[j as u64]),
        )?;
        for (measure, e) in [("l2_norm", &est), ("l2_norm_adjoint", &est_t)] {
            for (i, &r) in e.trace.iter().enumerate() {
                traces.push(TraceRow {
                    operator: name.clone(),
                    measure: measure.into(),
                    alpha,
                    k,
                    iteration: i + 1,
                    rayleigh: r,
                });
            }
            rows.push(SweepRow {
                alpha,
                a2,
                k,
                operator: name.clone(),
                measure: measure.into(),
                value: e.value,
                ratio: e.value / (a2 * kk),
                converged: e.converged,
                iterations: e.iterations,
                cell_seed: seed,
            });
        }

        // The guaranteed bound is an unweighted-L² statement; rerun the
        // norm without the weight when the sweep itself is weighted.
        let est_u = if shared.w.is_none() {
            est.clone()
        } else {
            operator_l2_norm(op, space, None, cell_seed(seed, "norm-unweighted", &[j as u64]))?
        };
        let chain = gamma_chain(ctx, op, &est_u.vector)?;
        let links = [
            ("pairing", chain.pairing, "term sum", chain.term_sum),
            ("term sum", chain.term_sum, "exclusive sum", chain.exclusive_sum),
            ("exclusive sum", chain.exclusive_sum, "maximal integral", chain.maximal_integral),
            ("maximal integral", chain.maximal_integral, "gamma", chain.gamma),
        ];
        for (lo_name, lo, hi_name, hi) in links {
            if lo > hi * (1.0 + 1e-9) + 1e-300 {
                problems.push(format!(
                    "{name} at k = {k}: chain link broken, {lo_name} = {lo} > {hi_name} = {hi}"
                ));
            }
        }
        if est_u.value > chain.gamma * (1.0 + 1e-9) {
            problems.push(format!(
                "{name} at k = {k}: measured norm {} exceeds its guaranteed bound {}",
                est_u.value, chain.gamma
            ));
        }
        rows.push(SweepRow {
            alpha,
            a2,
            k,
            operator: name.clone(),
            measure: "gamma".into(),
            value: chain.gamma,
            ratio: if est_u.value > 0.0 { chain.gamma / est_u.value } else { 0.0 },
            converged: est_u.converged,
            iterations: est_u.iterations,
            cell_seed: seed,
        });

        let adj = op.adjoint();
        let mut weak = 0.0f64;
        for f in &shared.battery {
            let g = adj.apply(space, f)?;
            weak = weak.max(weak_11_ratio(space, &g, f)?);
        }
        rows.push(SweepRow {
            alpha,
            a2,
            k,
            operator: name.clone(),
            measure: "weak11_sup".into(),
            value: weak,
            ratio: weak / kk,
            converged: true,
            iterations: shared.battery.len(),
            cell_seed: seed,
        });

        // Local oscillation of the adjoint per unit complexity: the median
        // oscillation of B*f over a family cube against the average of |f|
        // over the cube's dilated ball (the matching A-term source).
        let mut local_osc = 0.0f64;
        let mut cases = 0usize;
        for f in shared.battery.iter().take(12) {
            let bf = adj.apply(space, f)?;
            for &q in &shared.sample_cubes {
                let Some(a_term) = a_op.terms.iter().find(|t| t.cube == q) else {
                    continue;
                };
                let avg = m_average_abs(space, &a_term.source, f);
                if avg == 0.0 {
                    continue;
                }
                let measure = LocalMeasure::from_points(space, ctx.system.members(q))?;
                let om = oscillation(&bf, &measure, shared.lambda)?;
                local_osc = local_osc.max(om / (kk * avg));
                cases += 1;
            }
        }
        rows.push(SweepRow {
            alpha,
            a2,
            k,
            operator: name.clone(),
            measure: "local_oscillation_per_avg".into(),
            value: local_osc,
            ratio: local_osc,
            converged: true,
            iterations: cases,
            cell_seed: seed,
        });

        for parts in &shared.parts {
            for p in level_window_pairs(&ctx.system, op, parts) {
                window_max = Some(window_max.map_or(i64::from(p.dk), |m| m.max(i64::from(p.dk))));
                window_pairs += 1;
            }
        }
    }
    if let Some(dk) = window_max {
        rows.push(SweepRow {
            alpha,
            a2,
            k,
            operator: "B".into(),
            measure: "window_depth".into(),
            value: dk as f64,
            ratio: dk as f64 / kk,
            converged: true,
            iterations: window_pairs,
            cell_seed: seed,
        });
    }
    Ok((rows, traces, problems))
}

/// Sweeps the configured complexities at the first configured weight,
/// measuring per localized operator the L² norm and its adjoint's, the
/// guaranteed bound γ with its full inequality chain, the weak-(1,1)
/// supremum over the function battery, local adjoint oscillation, the
/// ball/cover discretization quotient, and the CZ level-window depths;
/// plus the complexity-independent maximal-function and good-part
/// quotients. Fits log-log trends of the per-operator measures against k.
pub fn run_complexity_sweep(config: &RunConfig) -> Result<SweepResult> {
    let ctx = build_context(config)?;
    let shared = complexity_shared(config, &ctx)?;
    let seed0 = cell_seed(config.seed, "complexity-shared", &[]);
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut problems = Vec::new();

    // Complexity-independent quotients: the centered maximal function's
    // weak-(1,1) supremum and the CZ good-part bounds per split height.
    let mut weak_m = 0.0f64;
    for f in &shared.battery {
        let mf = maximal_function(&ctx.space, f, None)?;
        weak_m = weak_m.max(weak_11_ratio(&ctx.space, &mf, f)?);
    }
    rows.push(SweepRow {
        alpha: shared.alpha,
        a2: shared.a2,
        k: 0,
        operator: "M".into(),
        measure: "weak11_sup".into(),
        value: weak_m,
        ratio: weak_m,
        converged: true,
        iterations: shared.battery.len(),
        cell_seed: seed0,
    });
    for parts in &shared.parts {
        rows.push(SweepRow {
            alpha: shared.alpha,
            a2: shared.a2,
            k: 0,
            operator: "CZ".into(),
            measure: "good_part_sup_over_level".into(),
            value: parts.d3_observed,
            ratio: parts.d3_observed,
            converged: true,
            iterations: parts.whitney.len(),
            cell_seed: seed0,
        });
    }

    for &k in &config.complexities {
        let (r, t, p) = complexity_cell(config, &ctx, &shared, k)?;
        rows.extend(r);
        traces.extend(t);
        problems.extend(p);
    }

    let mut slopes = norm_slopes(&rows, |r| (f64::from(r.k.max(1)), r.value));
    slopes.extend(measure_slopes(&rows, "weak11_sup", |r| {
        (f64::from(r.k.max(1)), r.value)
    }));

    let mut constants = MeasuredConstants::default();
    constants.d2_discretization = max_value(&rows, |r| r.measure == "discretization_ratio");
    constants.d2_weak11 = Some(weak_m);
    constants.d3 = max_value(&rows, |r| r.measure == "good_part_sup_over_level");
    constants.d6 = max_value(&rows, |r| r.measure == "local_oscillation_per_avg");
    constants.beta = rows
        .iter()
        .filter(|r| r.measure == "weak11_sup" && r.k >= 1)
        .map(|r| r.ratio)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    constants.gamma = max_value(&rows, |r| r.measure == "gamma");
    // Window depths grow at most linearly: fit dk against k, then lift the
    // offset so `dk < d4·k + d5` holds strictly at every measured point.
    let window_pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.measure == "window_depth")
        .map(|r| (f64::from(r.k.max(1)), r.value))
        .collect();
    if !window_pts.is_empty() {
        let d4 = fit_points(&window_pts).map_or(0.0, |fit| fit.slope.max(0.0));
        let d5 = window_pts
            .iter()
            .map(|&(x, y)| y - d4 * x)
            .fold(f64::NEG_INFINITY, f64::max)
            + 1.0;
        constants.d4 = Some(d4);
        constants.d5 = Some(d5);
    }
    problems.extend(common_problems(&rows));
    Ok(SweepResult { label: "complexity".into(), rows, slopes, traces, constants, problems })
}

/// Reruns one complexity cell in isolation; for a configured `k` the rows
/// equal the full sweep's byte for byte.
pub fn run_complexity_cell(config: &RunConfig, k: u32) -> Result<Vec<SweepRow>> {
    if k == 0 || k > 32 {
        return Err(CoreError::InvalidValue(format!("k = {k} must lie in 1..=32")));
    }
    let ctx = build_context(config)?;
    let shared = complexity_shared(config, &ctx)?;
    complexity_cell(config, &ctx, &shared, k).map(|(rows, _, _)| rows)
}

/// Runs the oscillation battery for the configured kernel: over seeded
/// functions and sampled cubes, the median oscillation of `Tf` on a cube
/// against the dilation series of averages of `|f|`. The largest quotient
/// is the measured D₁.
pub fn run_oscillation_battery(config: &RunConfig) -> Result<SweepResult> {
    let ctx = build_context(config)?;
    let lambda = ctx.system.eps_observed / 4.0;
    let n_f = (config.fuzz.family_cases / 25).max(4);
    let all_cubes: Vec<CubeId> = (0..ctx.system.n_cubes() as CubeId).collect();
    let cubes = sample_distinct(
        &all_cubes,
        25,
        cell_seed(config.seed, "oscillation-cubes", &[]),
    );
    let battery = function_battery(
        &ctx.space,
        cell_seed(config.seed, "oscillation-battery", &[]),
        n_f,
    );
    let mut rows = Vec::new();
    for (i, f) in battery.iter().enumerate() {
        let seed = cell_seed(config.seed, "oscillation", &[i as u64]);
        let mut worst = 0.0f64;
        for &q in &cubes {
            let bound = oscillation_bound_ratio(&ctx.space, &ctx.system, &ctx.kernel, f, q, lambda)?;
            worst = worst.max(bound.ratio);
        }
        rows.push(SweepRow {
            alpha: 0.0,
            a2: 1.0,
            k: 0,
            operator: "T".into(),
            measure: "oscillation_ratio".into(),
            value: worst,
            ratio: worst,
            converged: true,
            iterations: cubes.len(),
            cell_seed: seed,
        });
    }
    let mut constants = MeasuredConstants::default();
    constants.d1 = max_value(&rows, |r| r.measure == "oscillation_ratio");
    let problems = common_problems(&rows);
    Ok(SweepResult {
        label: "oscillation".into(),
        rows,
        slopes: vec![],
        traces: vec![],
        constants,
        problems,
    })
}

/// Serializes the dilated-ball operator and the localized operators of the
/// configured pipeline at complexity `k`, term lists included, for audit.
pub fn operators_json(config: &RunConfig, k: u32) -> Result<String> {
    if k == 0 || k > 32 {
        return Err(CoreError::InvalidValue(format!("k = {k} must lie in 1..=32")));
    }
    let ctx = build_context(config)?;
    let a_op = build_a_k(&ctx.space, &ctx.system, &ctx.family, k)?;
    let b_ops = build_b(&ctx.space, &ctx.system, &ctx.family, &ctx.adjacent, k)?;
    serde_json::to_string_pretty(&json!({
        "complexity": k,
        "ball_operator": a_op,
        "localized_operators": b_ops,
    }))
    .map_err(|e| CoreError::Construction(format!("operator serialization: {e}")))
}

/// Log-log fits of `l2_norm` rows per operator, in first-appearance order.
fn norm_slopes(
    rows: &[SweepRow],
    xy: impl Fn(&SweepRow) -> (f64, f64),
) -> Vec<SlopeRow> {
    measure_slopes_inner(rows, "l2_norm", &xy)
}

fn measure_slopes(
    rows: &[SweepRow],
    measure: &str,
    xy: impl Fn(&SweepRow) -> (f64, f64),
) -> Vec<SlopeRow> {
    measure_slopes_inner(rows, measure, &xy)
}

fn measure_slopes_inner(
    rows: &[SweepRow],
    measure: &str,
    xy: &dyn Fn(&SweepRow) -> (f64, f64),
) -> Vec<SlopeRow> {
    let mut operators: Vec<&str> = Vec::new();
    for r in rows {
        if r.measure == measure && !operators.contains(&r.operator.as_str()) {
            operators.push(&r.operator);
        }
    }
    let mut out = Vec::new();
    for op in operators {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.operator == op && r.measure == measure)
            .map(|r| xy(r))
            .filter(|&(x, y)| x > 0.0 && y > 0.0)
            .map(|(x, y)| (x.log10(), y.log10()))
            .collect();
        if let Some(fit) = fit_points(&pts) {
            out.push(SlopeRow {
                operator: op.to_string(),
                measure: measure.to_string(),
                slope: fit.slope,
                intercept: fit.intercept,
                std_err: fit.std_err,
                points: pts.len(),
            });
        }
    }
    out
}

fn max_value(rows: &[SweepRow], pred: impl Fn(&SweepRow) -> bool) -> Option<f64> {
    rows.iter()
        .filter(|r| pred(r))
        .map(|r| r.value)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
}

/// Invariants every sweep owes: finite values, characteristics at least
/// one, converged norm measurements.
fn common_problems(rows: &[SweepRow]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows {
        if !r.value.is_finite() || !r.ratio.is_finite() {
            out.push(format!(
                "{} {} at alpha = {}, k = {}: non-finite value {}",
                r.operator, r.measure, r.alpha, r.k, r.value
            ));
        }
        if r.a2 < 1.0 - 1e-9 {
            out.push(format!(
                "weight alpha = {}: characteristic {} below one",
                r.alpha, r.a2
            ));
        }
        if !r.converged {
            out.push(format!(
                "{} {} at alpha = {}, k = {}: power iteration did not converge",
                r.operator, r.measure, r.alpha, r.k
            ));
        }
    }
    out
}

impl SweepResult {
    pub fn pass(&self) -> bool {
        self.problems.is_empty()
    }

    /// The rows as a CSV table, trend columns joined in per operator and
    /// measure.
    pub fn to_table(&self) -> Table {
        let mut slope_of: HashMap<(&str, &str), (f64, f64)> = HashMap::new();
        for s in &self.slopes {
            slope_of.insert((s.operator.as_str(), s.measure.as_str()), (s.slope, s.std_err));
        }
        let mut t = Table::new(&[
            "alpha",
            "a2",
            "k",
            "operator",
            "measure",
            "value",
            "ratio",
            "converged",
            "iterations",
            "cell_seed",
            "slope",
            "slope_std_err",
        ]);
        for r in &self.rows {
            let (s, se) = slope_of
                .get(&(r.operator.as_str(), r.measure.as_str()))
                .map_or((String::new(), String::new()), |&(a, b)| {
                    (fmt_float(a), fmt_float(b))
                });
            t.push_row(vec![
                fmt_float(r.alpha),
                fmt_float(r.a2),
                r.k.to_string(),
                r.operator.clone(),
                r.measure.clone(),
                fmt_float(r.value),
                fmt_float(r.ratio),
                r.converged.to_string(),
                r.iterations.to_string(),
                r.cell_seed.to_string(),
                s,
                se,
            ]);
        }
        t
    }

    pub fn slopes_table(&self) -> Table {
        let mut t = Table::new(&["operator", "measure", "slope", "intercept", "std_err", "points"]);
        for s in &self.slopes {
            t.push_row(vec![
                s.operator.clone(),
                s.measure.clone(),
                fmt_float(s.slope),
                fmt_float(s.intercept),
                fmt_float(s.std_err),
                s.points.to_string(),
            ]);
        }
        t
    }

    pub fn traces_table(&self) -> Table {
        let mut t =
            Table::new(&["operator", "measure", "alpha", "k", "iteration", "rayleigh"]);
        for r in &self.traces {
            t.push_row(vec![
                r.operator.clone(),
                r.measure.clone(),
                fmt_float(r.alpha),
                r.k.to_string(),
                r.iteration.to_string(),
                fmt_float(r.rayleigh),
            ]);
        }
        t
    }

    /// A log-log (or, for the oscillation battery, linear) chart of the
    /// sweep's headline series.
    pub fn chart(&self) -> Chart {
        match self.label.as_str() {
            "complexity" => {
                let mut chart = Chart::new(
                    "Localized operators against complexity",
                    "log10 k",
                    "log10 value",
                );
                for measure in ["weak11_sup", "l2_norm"] {
                    for series in self.series_by_operator(measure, |r| {
                        (f64::from(r.k.max(1)), r.value)
                    }) {
                        chart.series.push(series);
                    }
                }
                chart
            }
            "oscillation" => {
                let mut chart = Chart::new(
                    "Oscillation over dilation series",
                    "case",
                    "worst ratio",
                );
                let points: Vec<(f64, f64)> = self
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (i as f64, r.value))
                    .collect();
                chart.series.push(Series { label: "T".into(), points });
                chart
            }
            _ => {
                let mut chart = Chart::new(
                    "Weighted operator norms on L2(w)",
                    "log10 [w]_A2",
                    "log10 norm",
                );
                for series in
                    self.series_by_operator("l2_norm", |r| (r.a2, r.value))
                {
                    chart.series.push(series);
                }
                for series in
                    self.series_by_operator("l2_battery_sup", |r| (r.a2, r.value))
                {
                    chart.series.push(series);
                }
                chart
            }
        }
    }

    fn series_by_operator(
        &self,
        measure: &str,
        xy: impl Fn(&SweepRow) -> (f64, f64),
    ) -> Vec<Series> {
        let mut operators: Vec<&str> = Vec::new();
        for r in &self.rows {
            if r.measure == measure && !operators.contains(&r.operator.as_str()) {
                operators.push(&r.operator);
            }
        }
        operators
            .into_iter()
            .map(|op| {
                let mut points: Vec<(f64, f64)> = self
                    .rows
                    .iter()
                    .filter(|r| r.operator == op && r.measure == measure)
                    .map(|r| xy(r))
                    .filter(|&(x, y)| x > 0.0 && y > 0.0)
                    .map(|(x, y)| (x.log10(), y.log10()))
                    .collect();
                points.sort_by(|a, b| a.partial_cmp(b).expect("finite chart points"));
                Series { label: format!("{op} ({measure})"), points }
            })
            .filter(|s| !s.points.is_empty())
            .collect()
    }

    /// Writes `<label>_sweep.csv`, `<label>_slopes.csv`,
    /// `<label>_traces.csv`, `<label>_sweep.svg` and
    /// `<label>_constants.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CoreError::Construction(format!("create {}: {e}", dir.display())))?;
        self.to_table().write_csv(&dir.join(format!("{}_sweep.csv", self.label)))?;
        self.slopes_table().write_csv(&dir.join(format!("{}_slopes.csv", self.label)))?;
        self.traces_table().write_csv(&dir.join(format!("{}_traces.csv", self.label)))?;
        self.chart().write_svg(&dir.join(format!("{}_sweep.svg", self.label)))?;
        let summary = serde_json::to_string_pretty(&json!({
            "label": self.label,
            "constants": self.constants,
            "problems": self.problems,
        }))
        .map_err(|e| CoreError::Construction(format!("constants serialization: {e}")))?;
        let path = dir.join(format!("{}_constants.json", self.label));
        std::fs::write(&path, summary)
            .map_err(|e| CoreError::Construction(format!("write {}: {e}", path.display())))?;
        Ok(())
    }
}
