//! Seeded fuzz batteries: every median/quantile property runs as a row of
//! random (f, Q, λ, c) cases, followed by sparse-family structure rows.
//! A deliberately broken median can be injected to prove the battery is
//! alive (mutation self-test).

use crate::error::{CoreError, Result};
use crate::experiments::config::RunConfig;
use crate::experiments::report::{fmt_float, Table};
use crate::median::{
    best_constant_oscillation, distribution, ess_sup_diff, median, omega_lambda, oscillation,
    LocalMeasure, SampledFunction,
};
use crate::space::{MassMode, Metric, QuasiMetricSpace};
use crate::sparse::{build_sparse_family, exclusive_sets, verify_domination};
use crate::util::{cell_seed, compensated_sum, mix64};

/// Median implementation under test; the production battery passes
/// [`median`], the self-test passes [`mutant_median`].
pub type MedianFn = fn(&[f64], &LocalMeasure) -> f64;

/// Deliberately broken median for the battery self-test: the running sup is
/// seeded at zero instead of at the first candidate value (an off-by-one on
/// the scan start), which clamps every result to ≥ 0 and destroys shift
/// equivariance.
pub fn mutant_median(f: &[f64], measure: &LocalMeasure) -> f64 {
    median(f, measure).max(0.0)
}

/// One battery row. `worst` is the largest signed excess observed over all
/// cases: `lhs − rhs − tolerance` for inequalities, `|lhs − rhs| − tolerance`
/// for equalities. Negative worst = margin of safety.
#[derive(Debug, Clone)]
pub struct LemmaOutcome {
    pub lemma: String,
    pub cases: usize,
    pub violations: usize,
    pub worst: f64,
    pub first_bad_seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct BatteryReport {
    pub rows: Vec<LemmaOutcome>,
}

impl BatteryReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.violations == 0)
    }

    pub fn row(&self, lemma: &str) -> Option<&LemmaOutcome> {
        self.rows.iter().find(|r| r.lemma == lemma)
    }

    pub fn to_table(&self) -> Table {
        let mut table =
            Table::new(&["lemma", "cases", "violations", "worst_excess", "first_bad_seed"]);
        for r in &self.rows {
            table.push_row(vec![
                r.lemma.clone(),
                r.cases.to_string(),
                r.violations.to_string(),
                fmt_float(r.worst),
                r.first_bad_seed.map_or(String::new(), |s| s.to_string()),
            ]);
        }
        table
    }
}

const REL_TOL: f64 = 1e-12;

/// Deterministic per-case random stream (split-mix chain; the case seed
/// comes from stable hashing of the row label and case index).
pub(crate) struct CaseRng(u64);

impl CaseRng {
    pub(crate) fn new(seed: u64) -> Self {
        Self(mix64(seed ^ 0x6a09e667f3bcc909))
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        self.0 = mix64(self.0);
        self.0
    }

    /// Uniform in `[0, 1)`.
    pub(crate) fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in `[-1, 1)`.
    pub(crate) fn symmetric(&mut self) -> f64 {
        self.unit() * 2.0 - 1.0
    }

    pub(crate) fn pick(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Tie-rich value draw: half the mass on a small set of exact dyadic
    /// atoms so quantile boundary cases are hit constantly.
    pub(crate) fn value(&mut self) -> f64 {
        const ATOMS: [f64; 7] = [-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0];
        if self.unit() < 0.5 {
            ATOMS[self.pick(ATOMS.len())]
        } else {
            self.symmetric()
        }
    }

    /// `size` distinct points of `0..n`, ascending.
    pub(crate) fn subset(&mut self, n: usize, max_size: usize) -> Vec<u32> {
        let size = 1 + self.pick(max_size.min(n));
        let mut points: Vec<u32> = Vec::with_capacity(size);
        while points.len() < size {
            let candidate = self.pick(n) as u32;
            if !points.contains(&candidate) {
                points.push(candidate);
            }
        }
        points.sort_unstable();
        points
    }

    /// λ in `(0, 1)`, frequently exactly on a mass-quantile boundary of a
    /// `size`-point uniform subset.
    pub(crate) fn lambda(&mut self, size: usize) -> f64 {
        if size > 1 && self.unit() < 0.25 {
            (1 + self.pick(size - 1)) as f64 / size as f64
        } else {
            let u = self.unit();
            (u.max(1e-6)).min(1.0 - 1e-6)
        }
    }
}

/// Scratch function storage: values live at the subset's points and are
/// zeroed again after each case, so no per-case allocation of length n.
struct Scratch {
    f: Vec<f64>,
    g: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { f: vec![0.0; n], g: vec![0.0; n] }
    }

    fn clear(&mut self, points: &[u32]) {
        for &p in points {
            self.f[p as usize] = 0.0;
            self.g[p as usize] = 0.0;
        }
    }
}

fn run_row(
    name: &str,
    cases: usize,
    global_seed: u64,
    mut case: impl FnMut(u64, &mut CaseRng) -> f64,
) -> LemmaOutcome {
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut first_bad_seed = None;
    for i in 0..cases {
        let seed = cell_seed(global_seed, name, &[i as u64]);
        let mut rng = CaseRng::new(seed);
        let excess = case(seed, &mut rng);
        if excess > 0.0 {
            violations += 1;
            if first_bad_seed.is_none() {
                first_bad_seed = Some(seed);
            }
        }
        if excess > worst {
            worst = excess;
        }
    }
    LemmaOutcome { lemma: name.into(), cases, violations, worst, first_bad_seed }
}

fn avg_abs(space: &QuasiMetricSpace, f: &[f64], measure: &LocalMeasure) -> f64 {
    let sum = compensated_sum(
        measure.points().iter().map(|&p| f[p as usize].abs() * space.mass_of(p as usize)),
    );
    sum / measure.total_mass()
}

/// `sup_a a·μ{|f| > a}` over the (unnormalized) local measure, by brute
/// force over the distinct values of |f|.
fn weak_l1_norm(space: &QuasiMetricSpace, f: &[f64], measure: &LocalMeasure) -> f64 {
    let mut best = 0.0f64;
    for &v in measure.points() {
        let a = f[v as usize].abs();
        if a <= 0.0 {
            continue;
        }
        let mass = compensated_sum(measure.points().iter().filter_map(|&p| {
            if f[p as usize].abs() >= a {
                Some(space.mass_of(p as usize))
            } else {
                None
            }
        }));
        best = best.max(a * mass);
    }
    best
}

/// Runs the full battery with the production median.
pub fn run_lemma_battery(config: &RunConfig) -> Result<BatteryReport> {
    run_lemma_battery_with(config, median)
}

/// Runs the full battery with an injectable median implementation (the
/// mutation self-test hook).
pub fn run_lemma_battery_with(config: &RunConfig, median_fn: MedianFn) -> Result<BatteryReport> {
    config.validate()?;
    let space = config.build_space()?;
    let system = config.build_system(&space)?;
    let n = space.n();
    let cases = config.fuzz.lemma_cases;
    let seed = config.seed;
    let mut scratch = Scratch::new(n);
    let mut rows: Vec<LemmaOutcome> = Vec::new();

    // μ(f < m(f)) ≤ 1/2: the defining feasibility of the median.
    rows.push(run_row("distribution_at_median_at_most_half", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        for &p in &points {
            scratch.f[p as usize] = rng.value();
        }
        let m = median_fn(&scratch.f, &measure);
        let excess = distribution(&scratch.f, &measure, m) - 0.5 - REL_TOL;
        scratch.clear(&points);
        excess
    }));

    // μ(f ≤ m(f)) ≥ 1/2: the other half of the defining pair.
    rows.push(run_row("mass_at_or_below_median_at_least_half", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        for &p in &points {
            scratch.f[p as usize] = rng.value();
        }
        let m = median_fn(&scratch.f, &measure);
        let at_or_below = compensated_sum(points.iter().filter_map(|&p| {
            if scratch.f[p as usize] <= m {
                Some(space.mass_of(p as usize))
            } else {
                None
            }
        })) / measure.total_mass();
        scratch.clear(&points);
        0.5 - at_or_below - REL_TOL
    }));

    // f ≤ g pointwise ⇒ m(f) ≤ m(g), exactly.
    rows.push(run_row("median_monotone_in_function", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        for &p in &points {
            let v = rng.value();
            scratch.f[p as usize] = v;
            // Equality-rich: a third of the points get g = f exactly.
            scratch.g[p as usize] = if rng.unit() < 1.0 / 3.0 { v } else { v + rng.unit() };
        }
        let excess = median_fn(&scratch.f, &measure) - median_fn(&scratch.g, &measure);
        scratch.clear(&points);
        excess
    }));

    // |m(f)| ≤ m(|f|), exactly.
    rows.push(run_row("median_abs_bound", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        for &p in &points {
            let v = rng.value();
            scratch.f[p as usize] = v;
            scratch.g[p as usize] = v.abs();
        }
        let excess =
            median_fn(&scratch.f, &measure).abs() - median_fn(&scratch.g, &measure);
        scratch.clear(&points);
        excess
    }));

    // m(f − c) = m(f) − c: shift equivariance (up to merge rounding).
    rows.push(run_row("median_shift_equivariant", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        let c = rng.symmetric() * 2.0;
        for &p in &points {
            let v = rng.value();
            scratch.f[p as usize] = v;
            scratch.g[p as usize] = v - c;
        }
        let lhs = median_fn(&scratch.g, &measure);
        let rhs = median_fn(&scratch.f, &measure) - c;
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        let excess = (lhs - rhs).abs() - REL_TOL * scale;
        scratch.clear(&points);
        excess
    }));

    // m(|f − m(f)|) ≤ 2·min over the c-grid of m(|f − c|); the grid minimum
    // over-estimates the true inf, so this is the strong form.
    rows.push(run_row("median_within_twice_best_constant", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        for &p in &points {
            scratch.f[p as usize] = rng.value();
        }
        let m = median_fn(&scratch.f, &measure);
        for &p in &points {
            scratch.g[p as usize] = (scratch.f[p as usize] - m).abs();
        }
        let lhs = median_fn(&scratch.g, &measure);
        let best = best_constant_oscillation(&scratch.f, &measure, 0.5).expect("valid lambda");
        let excess = lhs - 2.0 * best - REL_TOL * lhs.abs().max(1.0);
        scratch.clear(&points);
        excess
    }));

    // The exact non-subadditivity instance: two step functions on a
    // 1000-point uniform unit-mass grid whose medians are 1/4 each while
    // the median of the sum is 5/4.
    rows.push(run_row("median_not_subadditive_instance", 1, seed, |_, _| {
        let grid = QuasiMetricSpace::unit_grid_1d(1000, Metric::Euclidean, MassMode::Unit)
            .expect("grid builds");
        let whole = LocalMeasure::whole(&grid);
        let f: Vec<f64> = (0..1000)
            .map(|i| {
                let x = grid.coords_of(i).expect("grid has coords")[0];
                if x <= 0.375 {
                    1.0
                } else {
                    0.25
                }
            })
            .collect();
        let g: Vec<f64> = (0..1000)
            .map(|i| {
                let x = grid.coords_of(i).expect("grid has coords")[0];
                if x <= 0.625 {
                    0.25
                } else {
                    1.0
                }
            })
            .collect();
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let (mf, mg, msum) = (
            median_fn(&f, &whole),
            median_fn(&g, &whole),
            median_fn(&sum, &whole),
        );
        let exact = mf == 0.25 && mg == 0.25 && msum == 1.25;
        let superadditive_here = msum > mf + mg;
        let dist_ok = (distribution(&f, &whole, 0.5) - 0.625).abs() <= REL_TOL;
        if exact && superadditive_here && dist_ok {
            -1.0
        } else {
            1.0
        }
    }));

    // m(|f|) ≤ ess-sup|f − g| + m(|g|).
    rows.push(run_row("median_sup_difference_bound", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        for &p in &points {
            scratch.f[p as usize] = rng.value().abs();
            scratch.g[p as usize] = rng.value().abs();
        }
        let lhs = median_fn(&scratch.f, &measure);
        let rhs = ess_sup_diff(&scratch.f, &scratch.g, &measure)
            + median_fn(&scratch.g, &measure);
        let excess = lhs - rhs - REL_TOL * rhs.abs().max(1.0);
        scratch.clear(&points);
        excess
    }));

    // ω_λ(|f|) ≤ ess-sup|f − g| + ω_λ(|g|): the quantile analogue.
    rows.push(run_row("quantile_sup_difference_bound", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        let lambda = rng.lambda(points.len());
        for &p in &points {
            scratch.f[p as usize] = rng.value().abs();
            scratch.g[p as usize] = rng.value().abs();
        }
        let lhs = omega_lambda(&scratch.f, &measure, lambda).expect("valid lambda");
        let rhs = ess_sup_diff(&scratch.f, &scratch.g, &measure)
            + omega_lambda(&scratch.g, &measure, lambda).expect("valid lambda");
        let excess = lhs - rhs - REL_TOL * rhs.abs().max(1.0);
        scratch.clear(&points);
        excess
    }));

    // λ·ω_λ(|f|) ≤ avg_Q |f|: Chebyshev for the quantile.
    rows.push(run_row("quantile_chebyshev_bound", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        let lambda = rng.lambda(points.len());
        for &p in &points {
            scratch.f[p as usize] = rng.value().abs();
        }
        let omega = omega_lambda(&scratch.f, &measure, lambda).expect("valid lambda");
        let rhs = avg_abs(&space, &scratch.f, &measure);
        let excess = lambda * omega - rhs - REL_TOL * rhs.abs().max(1.0);
        scratch.clear(&points);
        excess
    }));

    // ω_λ(|f|) ≤ ‖f‖_{L^{1,∞}(Q)} / (λ·|Q|) with the weak norm by brute force.
    rows.push(run_row("quantile_weak_l1_bound", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        let lambda = rng.lambda(points.len());
        for &p in &points {
            scratch.f[p as usize] = rng.value().abs();
        }
        let omega = omega_lambda(&scratch.f, &measure, lambda).expect("valid lambda");
        let weak = weak_l1_norm(&space, &scratch.f, &measure);
        let rhs = weak / (lambda * measure.total_mass());
        let excess = omega - rhs - REL_TOL * rhs.abs().max(1.0);
        scratch.clear(&points);
        excess
    }));

    // Along the chain of cubes containing x, the quantile reaches f(x)
    // exactly once the cube is the singleton {x}.
    rows.push(run_row("quantile_shrinking_cubes_converge", cases, seed, |_, rng| {
        let x = rng.pick(n);
        let lambda = rng.lambda(8);
        for v in scratch.f.iter_mut() {
            *v = rng.value();
        }
        let mut excess = 1.0; // stays positive unless the chain reaches {x}
        for k in system.k_min..=system.k_max() {
            let id = match system.locate(x, k) {
                Ok(id) => id,
                Err(_) => continue,
            };
            let members = system.members(id);
            if members.len() == 1 {
                debug_assert_eq!(members[0] as usize, x);
                let measure =
                    LocalMeasure::from_points(&space, members).expect("singleton cube");
                let omega = omega_lambda(&scratch.f, &measure, lambda).expect("valid lambda");
                let m = median_fn(&scratch.f, &measure);
                excess = if omega == scratch.f[x] && m == scratch.f[x] { -1.0 } else { 1.0 };
                break;
            }
        }
        for v in scratch.f.iter_mut() {
            *v = 0.0;
        }
        excess
    }));

    // λ₁ ≤ λ₂ ⇒ ω_{λ₂} ≤ ω_{λ₁}; m ≤ ω_λ for λ ≤ 1/2; ω_{1/2} = m. All exact.
    rows.push(run_row("quantile_monotone_in_lambda", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        let (a, b) = (rng.lambda(points.len()), rng.lambda(points.len()));
        let (l1, l2) = (a.min(b), a.max(b));
        for &p in &points {
            scratch.f[p as usize] = rng.value();
        }
        let w1 = omega_lambda(&scratch.f, &measure, l1).expect("valid lambda");
        let w2 = omega_lambda(&scratch.f, &measure, l2).expect("valid lambda");
        let m = median_fn(&scratch.f, &measure);
        let half = omega_lambda(&scratch.f, &measure, 0.5).expect("valid lambda");
        let mut excess = w2 - w1;
        if l1 <= 0.5 {
            excess = excess.max(m - omega_lambda(&scratch.f, &measure, l1).expect("ok"));
        }
        excess = excess.max((half - m).abs());
        scratch.clear(&points);
        excess
    }));

    // ω_λ(|f − m(f)|) ≤ 2·min over the c-grid of ω_λ(|f − c|) for λ ≤ 1/2.
    rows.push(run_row("oscillation_within_twice_best_quantile", cases, seed, |_, rng| {
        let points = rng.subset(n, 64);
        let measure = LocalMeasure::from_points(&space, &points).expect("nonempty subset");
        let lambda = rng.lambda(points.len()).min(0.5);
        for &p in &points {
            scratch.f[p as usize] = rng.value();
        }
        let lhs = oscillation(&scratch.f, &measure, lambda).expect("valid lambda");
        let best =
            best_constant_oscillation(&scratch.f, &measure, lambda).expect("valid lambda");
        let excess = lhs - 2.0 * best - REL_TOL * lhs.abs().max(1.0);
        scratch.clear(&points);
        excess
    }));

    // Sparse-family structure rows: random full-length functions.
    let family_cases = config.fuzz.family_cases;
    let root = system.root().ok_or_else(|| {
        CoreError::Construction("the configured system has no single root".into())
    })?;

    rows.push(run_row("sparse_generations_half_mass", family_cases, seed, |_, rng| {
        let f = draw_function(rng, n);
        let family = build_sparse_family(&space, &system, &f, root, None, 64)
            .expect("family builds");
        let mut excess = f64::NEG_INFINITY;
        for gen in 1..family.generations.len() {
            for &parent in &family.generations[gen - 1] {
                let child_mass = compensated_sum(
                    family.generations[gen]
                        .iter()
                        .filter(|&&q| system.is_subset(q, parent))
                        .map(|&q| space.measure(system.members(q))),
                );
                let parent_mass = space.measure(system.members(parent));
                excess = excess.max(child_mass - 0.5 * parent_mass - REL_TOL * parent_mass);
            }
        }
        if excess == f64::NEG_INFINITY {
            -1.0
        } else {
            excess
        }
    }));

    rows.push(run_row("sparse_domination_pointwise", family_cases, seed, |_, rng| {
        let f = draw_function(rng, n);
        let family = build_sparse_family(&space, &system, &f, root, None, 64)
            .expect("family builds");
        let report =
            verify_domination(&space, &system, &f, &family).expect("domination verifies");
        report.max_violation - 1e-9 * report.scale.max(1e-300)
    }));

    rows.push(run_row("sparse_exclusive_sets_cover_half", family_cases, seed, |_, rng| {
        let f = draw_function(rng, n);
        let family = build_sparse_family(&space, &system, &f, root, None, 64)
            .expect("family builds");
        let sets = exclusive_sets(&system, &family);
        let mut seen = vec![false; n];
        let mut excess = f64::NEG_INFINITY;
        for (q, points) in &sets {
            for &p in points {
                if seen[p as usize] {
                    return 1.0; // exclusive sets overlapped
                }
                seen[p as usize] = true;
            }
            let q_mass = space.measure(system.members(*q));
            let e_mass = space.measure(points);
            excess = excess.max(0.5 * q_mass - e_mass - REL_TOL * q_mass);
        }
        if excess == f64::NEG_INFINITY {
            -1.0
        } else {
            excess
        }
    }));

    Ok(BatteryReport { rows })
}

fn draw_function(rng: &mut CaseRng, n: usize) -> SampledFunction {
    SampledFunction::new((0..n).map(|_| rng.value()).collect()).expect("finite values")
}
