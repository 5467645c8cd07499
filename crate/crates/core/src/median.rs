//! Distribution functions, medians, generalized medians and local mean
//! oscillation.
//!
//! Everything here is exact on finite spaces: `sup{a : F(a) ≤ t}` is computed
//! by sorting the distinct values of `f` with cumulative raw masses and
//! comparing against `t · total`, not by bisection. With unit point masses
//! the comparisons reduce to integer arithmetic, so tie cases (`F(a) = t`
//! exactly) are decided exactly, which the §3 lemma batteries rely on.

use crate::dyadic::{CubeId, DyadicSystem};
use crate::error::{CoreError, Result};
use crate::space::QuasiMetricSpace;
use crate::util::CompensatedSum;

/// Real values sampled at every point of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::InvalidValue(format!("value[{i}] = {v} is not finite")));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Deref for SampledFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// A nonempty point set together with its (raw) masses.
///
/// Distribution values are reported normalized, but every internal
/// comparison uses raw masses against `t · total` so that exactly
/// representable masses give exact tie decisions. Zero-mass points are
/// dropped: removing a set of measure zero never changes a median.
#[derive(Debug, Clone)]
pub struct LocalMeasure {
    points: Vec<u32>,
    mass: Vec<f64>,
    total: f64,
}

impl LocalMeasure {
    pub fn from_points(space: &QuasiMetricSpace, points: &[u32]) -> Result<Self> {
        let mut pts = Vec::with_capacity(points.len());
        let mut mass = Vec::with_capacity(points.len());
        for &p in points {
            if p as usize >= space.n() {
                return Err(CoreError::IndexOutOfRange { index: p as usize, n: space.n() });
            }
            let m = space.mass_of(p as usize);
            if m > 0.0 {
                pts.push(p);
                mass.push(m);
            }
        }
        if pts.is_empty() {
            return Err(CoreError::EmptySet("local measure carries no positive mass".into()));
        }
        let mut acc = CompensatedSum::new();
        for &m in &mass {
            acc.add(m);
        }
        Ok(Self { points: pts, mass, total: acc.value() })
    }

    pub fn whole(space: &QuasiMetricSpace) -> Self {
        let points: Vec<u32> = (0..space.n() as u32).collect();
        Self::from_points(space, &points).expect("spaces are nonempty with positive masses")
    }

    pub fn points(&self) -> &[u32] {
        &self.points
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.points.iter().zip(&self.mass).map(|(&p, &m)| (p as usize, m))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(CoreError::InvalidValue(format!("lambda = {lambda} must lie in (0, 1)")));
    }
    Ok(())
}

/// `F(a) = μ{x : f(x) < a}` under the normalized measure.
pub fn distribution(f: &[f64], measure: &LocalMeasure, a: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for (p, m) in measure.iter() {
        if f[p] < a {
            acc.add(m);
        }
    }
    acc.value() / measure.total
}

/// `sup{a : F(a) ≤ t}` for `t ∈ (0, 1)`; the sup is attained at a distinct
/// value of the function (left continuity of F), namely the largest value
/// whose strictly-below cumulative mass is ≤ `t · total`.
fn quantile_sup(value_at: impl Fn(usize) -> f64, measure: &LocalMeasure, t: f64) -> f64 {
    debug_assert!(t > 0.0 && t < 1.0);
    let mut pairs: Vec<(f64, f64)> = measure.iter().map(|(p, m)| (value_at(p), m)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("sampled values are finite"));
    let threshold = t * measure.total;
    let mut below = CompensatedSum::new();
    let mut result = pairs[0].0;
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        if below.value() <= threshold {
            result = v;
        } else {
            break;
        }
        while i < pairs.len() && pairs[i].0 == v {
            below.add(pairs[i].1);
            i += 1;
        }
    }
    result
}

/// The median `m(f) = sup{a : F(a) ≤ 1/2}`.
///
/// The sup runs over all real `a`, not just `a > 0`: this is what makes
/// `m(f − c) = m(f) − c` hold identically.
pub fn median(f: &[f64], measure: &LocalMeasure) -> f64 {
    quantile_sup(|p| f[p], measure, 0.5)
}

/// The generalized median `ω_λ(f) = sup{a : F(a) ≤ 1 − λ}`; `ω_{1/2} = m`.
pub fn omega_lambda(f: &[f64], measure: &LocalMeasure, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(quantile_sup(|p| f[p], measure, 1.0 - lambda))
}

/// Local mean oscillation `ω_λ(|f − m(f)|)` — always ≥ 0.
pub fn oscillation(f: &[f64], measure: &LocalMeasure, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let m = median(f, measure);
    Ok(quantile_sup(|p| (f[p] - m).abs(), measure, 1.0 - lambda))
}

/// `min over a c-grid of ω_λ(|f − c|)`: the grid is the distinct values of
/// `f` on the measure plus a uniform refinement of their range. For
/// piecewise-constant finite-space data the true inf over all reals is
/// attained at or between data values, so the grid minimum over-estimates
/// the inf — inequalities tested against it are tested in their strong form.
pub fn best_constant_oscillation(f: &[f64], measure: &LocalMeasure, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let mut grid: Vec<f64> = measure.iter().map(|(p, _)| f[p]).collect();
    let (lo, hi) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    const REFINE: usize = 64;
    if hi > lo {
        for i in 1..REFINE {
            grid.push(lo + (hi - lo) * i as f64 / REFINE as f64);
        }
    }
    let mut best = f64::INFINITY;
    for &c in &grid {
        let w = quantile_sup(|p| (f[p] - c).abs(), measure, 1.0 - lambda);
        best = best.min(w);
    }
    Ok(best)
}

/// Max of `|f − g|` over the positive-mass points of the measure: the finite
/// reading of the essential sup.
pub fn ess_sup_diff(f: &[f64], g: &[f64], measure: &LocalMeasure) -> f64 {
    measure.iter().map(|(p, _)| (f[p] - g[p]).abs()).fold(0.0, f64::max)
}

/// The restricted sharp maximal function: at each `x ∈ Q0`,
/// `sup of oscillation(f, Q, λ)` over dyadic cubes `Q` with `x ∈ Q ⊆ Q0`;
/// points outside `Q0` get 0 by convention.
///
/// Computed in one pass down the subtree of `Q0`, carrying the running max
/// of the ancestor oscillations — identical to the per-point sup because the
/// cubes containing `x` inside `Q0` are exactly that ancestor chain.
pub fn sharp_maximal(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    f: &SampledFunction,
    q0: CubeId,
    lambda: f64,
) -> Result<SampledFunction> {
    check_lambda(lambda)?;
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
    let mut out = vec![0.0; space.n()];
    let mut stack: Vec<(CubeId, f64)> = vec![(q0, 0.0)];
    while let Some((id, inherited)) = stack.pop() {
        let measure = LocalMeasure::from_points(space, system.members(id))?;
        let best = inherited.max(oscillation(f, &measure, lambda)?);
        let children = system.cube(id).children.clone();
        if children.is_empty() {
            for &p in system.members(id) {
                out[p as usize] = best;
            }
        } else {
            for child in children {
                stack.push((child, best));
            }
        }
    }
    SampledFunction::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{MassMode, Metric};
    use proptest::prelude::*;

    fn grid(n: usize) -> QuasiMetricSpace {
        QuasiMetricSpace::unit_grid_1d(n, Metric::Euclidean, MassMode::Unit).unwrap()
    }

    /// Definition-based oracle: evaluates F at each distinct value by naive
    /// counting and returns the largest value with F ≤ t.
    fn oracle_sup(values: &[f64], masses: &[f64], t: f64) -> f64 {
        let total: f64 = masses.iter().sum();
        let mut best = f64::NEG_INFINITY;
        for &v in values {
            let below: f64 =
                values.iter().zip(masses).filter(|(&u, _)| u < v).map(|(_, &m)| m).sum();
            if below <= t * total {
                best = best.max(v);
            }
        }
        best
    }

    /// The two step functions of the non-subadditivity example, sampled on a
    /// uniform grid: f = 1 on [0, 3/8) + 1/4 beyond, g = 1/4 on [0, 5/8) + 1
    /// beyond.
    fn step_pair(space: &QuasiMetricSpace) -> (Vec<f64>, Vec<f64>) {
        let n = space.n();
        let f: Vec<f64> = (0..n)
            .map(|i| if space.coords_of(i).unwrap()[0] < 0.375 { 1.0 } else { 0.25 })
            .collect();
        let g: Vec<f64> = (0..n)
            .map(|i| if space.coords_of(i).unwrap()[0] < 0.625 { 0.25 } else { 1.0 })
            .collect();
        (f, g)
    }

    #[test]
    fn distribution_of_constant() {
        let space = grid(10);
        let lm = LocalMeasure::whole(&space);
        let f = vec![3.0; 10];
        assert_eq!(distribution(&f, &lm, 3.0), 0.0);
        assert_eq!(distribution(&f, &lm, 2.9), 0.0);
        assert_eq!(distribution(&f, &lm, 3.1), 1.0);
    }

    #[test]
    fn distribution_of_step_function_at_one_half() {
        let space = grid(1000);
        let lm = LocalMeasure::whole(&space);
        let (f, _) = step_pair(&space);
        // 375 points carry value 1, 625 carry 1/4; F(1/2) = 625/1000 exactly.
        assert_eq!(distribution(&f, &lm, 0.5), 0.625);
    }

    #[test]
    fn medians_of_the_nonsubadditive_pair_are_exact() {
        let space = grid(1000);
        let lm = LocalMeasure::whole(&space);
        let (f, g) = step_pair(&space);
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        assert_eq!(median(&f, &lm), 0.25);
        assert_eq!(median(&g, &lm), 0.25);
        assert_eq!(median(&fg, &lm), 1.25);
        // Subadditivity fails strictly: m(f+g) > m(f) + m(g).
        assert!(median(&fg, &lm) > median(&f, &lm) + median(&g, &lm));
    }

    #[test]
    fn median_of_constant_is_the_constant() {
        let space = grid(7);
        let lm = LocalMeasure::whole(&space);
        assert_eq!(median(&vec![-2.5; 7], &lm), -2.5);
    }

    #[test]
    fn median_matches_oracle_with_unequal_masses() {
        let coords = [0.0, 0.13, 0.29, 0.44, 0.61, 0.78, 0.97];
        let masses = vec![0.5, 2.0, 1.25, 0.75, 3.0, 0.25, 1.0];
        let space =
            QuasiMetricSpace::from_points(&coords, 1, masses.clone(), Metric::Euclidean).unwrap();
        let lm = LocalMeasure::whole(&space);
        let f = vec![0.3, -1.2, 4.0, 0.3, 2.2, -0.7, 0.9];
        assert_eq!(median(&f, &lm), oracle_sup(&f, &masses, 0.5));
        for lambda in [0.1, 0.25, 0.5, 0.75, 0.9] {
            assert_eq!(
                omega_lambda(&f, &lm, lambda).unwrap(),
                oracle_sup(&f, &masses, 1.0 - lambda),
                "lambda = {lambda}"
            );
        }
    }

    #[test]
    fn omega_half_is_the_median() {
        let space = grid(53);
        let lm = LocalMeasure::whole(&space);
        let mut state = 1u64;
        for _ in 0..200 {
            let f: Vec<f64> = (0..53)
                .map(|_| {
                    state = crate::util::mix64(state);
                    (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            assert_eq!(omega_lambda(&f, &lm, 0.5).unwrap(), median(&f, &lm));
        }
    }

    #[test]
    fn omega_two_valued_equality_case() {
        // f = 2·χ_{[0,1/4)} on a uniform grid; λ = 1/4 sits exactly at the
        // jump: F(2) = 3/4 ≤ 3/4, so ω = 2 and λ·ω = avg|f| = 1/2.
        let space = grid(1000);
        let lm = LocalMeasure::whole(&space);
        let f: Vec<f64> = (0..1000)
            .map(|i| if space.coords_of(i).unwrap()[0] < 0.25 { 2.0 } else { 0.0 })
            .collect();
        let w = omega_lambda(&f, &lm, 0.25).unwrap();
        assert_eq!(w, 2.0);
        let avg: f64 = f.iter().sum::<f64>() / 1000.0;
        assert_eq!(0.25 * w, avg);
    }

    #[test]
    fn oscillation_of_constant_is_zero() {
        let space = grid(12);
        let lm = LocalMeasure::whole(&space);
        assert_eq!(oscillation(&vec![7.0; 12], &lm, 0.25).unwrap(), 0.0);
    }

    #[test]
    fn oscillation_of_half_indicator() {
        // f = χ on exactly half the mass: the median is 1 (sup convention),
        // |f − m| is two-valued with half mass each, and ω_{1/4} = 1.
        let space = grid(8);
        let lm = LocalMeasure::whole(&space);
        let f = vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(median(&f, &lm), 1.0);
        assert_eq!(oscillation(&f, &lm, 0.25).unwrap(), 1.0);
    }

    #[test]
    fn median_shift_identity_is_exact() {
        let space = grid(101);
        let lm = LocalMeasure::whole(&space);
        let mut state = 42u64;
        for round in 0..500 {
            let f: Vec<f64> = (0..101)
                .map(|_| {
                    state = crate::util::mix64(state);
                    (state >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
                })
                .collect();
            state = crate::util::mix64(state);
            // Include huge shifts that collapse distinct values in f64.
            let c = match round % 3 {
                0 => (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5,
                1 => ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 1e12,
                _ => ((state >> 40) as f64) - 8_388_608.0,
            };
            let shifted: Vec<f64> = f.iter().map(|v| v - c).collect();
            assert_eq!(median(&shifted, &lm), median(&f, &lm) - c, "round {round}, c = {c}");
        }
    }

    #[test]
    fn rejects_bad_lambda_and_empty_sets() {
        let space = grid(4);
        let lm = LocalMeasure::whole(&space);
        let f = vec![0.0; 4];
        assert!(omega_lambda(&f, &lm, 0.0).is_err());
        assert!(omega_lambda(&f, &lm, 1.0).is_err());
        assert!(LocalMeasure::from_points(&space, &[]).is_err());
        assert!(LocalMeasure::from_points(&space, &[99]).is_err());
    }

    #[test]
    fn sampled_function_rejects_non_finite() {
        assert!(SampledFunction::new(vec![0.0, f64::NAN]).is_err());
        assert!(SampledFunction::new(vec![f64::INFINITY]).is_err());
        assert!(SampledFunction::new(vec![1.0, -2.0]).is_ok());
    }

    proptest! {
        #[test]
        fn median_lies_between_extremes(values in prop::collection::vec(-100.0f64..100.0, 1..40)) {
            let n = values.len();
            let space = grid(n);
            let lm = LocalMeasure::whole(&space);
            let m = median(&values, &lm);
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= m && m <= hi);
            // F(m) ≤ 1/2 and μ(f ≤ m) ≥ 1/2 (Lemmas 3.2 / 3.3).
            prop_assert!(distribution(&values, &lm, m) <= 0.5);
            let at_most: f64 = values.iter().filter(|&&v| v <= m).count() as f64 / n as f64;
            prop_assert!(at_most >= 0.5);
        }

        #[test]
        fn omega_is_antitone_in_lambda(
            values in prop::collection::vec(-10.0f64..10.0, 2..30),
            l1 in 0.05f64..0.95,
            l2 in 0.05f64..0.95,
        ) {
            let (l1, l2) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let space = grid(values.len());
            let lm = LocalMeasure::whole(&space);
            let w1 = omega_lambda(&values, &lm, l1).unwrap();
            let w2 = omega_lambda(&values, &lm, l2).unwrap();
            prop_assert!(w2 <= w1);
            if l2 <= 0.5 {
                prop_assert!(median(&values, &lm) <= w2);
            }
        }

        #[test]
        fn pointwise_order_gives_median_order(
            values in prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 1..30)
        ) {
            let f: Vec<f64> = values.iter().map(|(a, _)| *a).collect();
            let g: Vec<f64> = values.iter().map(|(a, b)| a + b).collect();
            let space = grid(f.len());
            let lm = LocalMeasure::whole(&space);
            prop_assert!(median(&f, &lm) <= median(&g, &lm));
        }
    }

    mod sharp {
        use super::*;
        use crate::dyadic::{build_dyadic_system, CubeId, DyadicSystem, NetOrder};

        fn system(space: &QuasiMetricSpace) -> DyadicSystem {
            build_dyadic_system(space, 0.5, None, NetOrder::Index).unwrap()
        }

        /// Max of oscillation(f, Q, λ) over every cube Q with x ∈ Q ⊆ Q0,
        /// by scanning all cubes of the system.
        fn oracle(
            space: &QuasiMetricSpace,
            sys: &DyadicSystem,
            f: &SampledFunction,
            q0: CubeId,
            lambda: f64,
            x: usize,
        ) -> f64 {
            let mut best = 0.0f64;
            for id in 0..sys.cubes.len() as CubeId {
                if sys.contains(id, x) && sys.is_subset(id, q0) {
                    let lm = LocalMeasure::from_points(space, sys.members(id)).unwrap();
                    best = best.max(oscillation(f, &lm, lambda).unwrap());
                }
            }
            best
        }

        #[test]
        fn constant_function_has_zero_sharp_maximal() {
            let space = grid(32);
            let sys = system(&space);
            let f = SampledFunction::new(vec![3.25; 32]).unwrap();
            let root = sys.root().unwrap();
            let m = sharp_maximal(&space, &sys, &f, root, 0.25).unwrap();
            assert!(m.iter().all(|&v| v == 0.0));
        }

        #[test]
        fn matches_enumeration_oracle_on_random_data() {
            let space = grid(64);
            let sys = system(&space);
            let root = sys.root().unwrap();
            let mut state = 31u64;
            for round in 0..20 {
                let mut vals = Vec::with_capacity(64);
                for _ in 0..64 {
                    state = crate::util::mix64(state);
                    vals.push(((state >> 11) as f64 / (1u64 << 53) as f64) * 8.0 - 4.0);
                }
                let f = SampledFunction::new(vals).unwrap();
                state = crate::util::mix64(state);
                let lambda = 0.05 + 0.9 * (state >> 11) as f64 / (1u64 << 53) as f64;
                // Alternate between the root and a proper subcube.
                let q0 = if round % 2 == 0 { root } else { sys.locate(17, 2).unwrap() };
                let m = sharp_maximal(&space, &sys, &f, q0, lambda).unwrap();
                for x in 0..64 {
                    let want = if sys.contains(q0, x) {
                        oracle(&space, &sys, &f, q0, lambda, x)
                    } else {
                        0.0
                    };
                    assert_eq!(m[x], want, "round {round}, x = {x}");
                }
            }
        }

        #[test]
        fn point_mass_is_seen_only_near_its_support() {
            // f = indicator of a single point. A cube oscillates only while
            // the point's relative mass exceeds λ, so the positive set of M#
            // is a small cube around the support.
            let space = grid(64);
            let sys = system(&space);
            let root = sys.root().unwrap();
            let mut vals = vec![0.0; 64];
            vals[40] = 1.0;
            let f = SampledFunction::new(vals).unwrap();
            let m = sharp_maximal(&space, &sys, &f, root, 0.25).unwrap();
            assert!(m[40] > 0.0);
            // λ = 1/4 keeps cubes of ≤ 4 points oscillating; the 4-point
            // cube around 40 is [40, 44).
            for x in 0..64 {
                let expect_positive = (40..44).contains(&x);
                assert_eq!(m[x] > 0.0, expect_positive, "x = {x}");
            }
        }

        #[test]
        fn bounded_by_dyadic_maximal_function() {
            // M#(f)(x) ≤ (2/λ)·max over cubes Q ∋ x of avg_Q |f|, for λ ≤ 1/2.
            let space = grid(64);
            let sys = system(&space);
            let root = sys.root().unwrap();
            let mut state = 97u64;
            for _ in 0..10 {
                let mut vals = Vec::with_capacity(64);
                for _ in 0..64 {
                    state = crate::util::mix64(state);
                    vals.push(((state >> 11) as f64 / (1u64 << 53) as f64) * 6.0 - 3.0);
                }
                let f = SampledFunction::new(vals).unwrap();
                state = crate::util::mix64(state);
                let lambda = 0.05 + 0.45 * (state >> 11) as f64 / (1u64 << 53) as f64;
                let m = sharp_maximal(&space, &sys, &f, root, lambda).unwrap();
                for x in 0..64 {
                    let mut maximal = 0.0f64;
                    for id in 0..sys.cubes.len() as CubeId {
                        if sys.contains(id, x) {
                            let members = sys.members(id);
                            let avg: f64 = members.iter().map(|&p| f[p as usize].abs()).sum::<f64>()
                                / members.len() as f64;
                            maximal = maximal.max(avg);
                        }
                    }
                    assert!(
                        m[x] <= (2.0 / lambda) * maximal * (1.0 + 1e-12),
                        "x = {x}: {} > {}",
                        m[x],
                        (2.0 / lambda) * maximal
                    );
                }
            }
        }

        #[test]
        fn rejects_mismatched_function_and_bad_cube() {
            let space = grid(16);
            let sys = system(&space);
            let f = SampledFunction::new(vec![1.0; 8]).unwrap();
            assert!(sharp_maximal(&space, &sys, &f, 0, 0.5).is_err());
            let f = SampledFunction::new(vec![1.0; 16]).unwrap();
            assert!(sharp_maximal(&space, &sys, &f, 10_000, 0.5).is_err());
        }
    }
}
