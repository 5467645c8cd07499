//! Centered Hardy–Littlewood and weighted dyadic maximal functions.

use crate::dyadic::DyadicSystem;
use crate::error::{CoreError, Result};
use crate::median::SampledFunction;
use crate::operators::weight::Weight;
use crate::space::QuasiMetricSpace;
use crate::util::CompensatedSum;

/// Ball averages of `|f|` against `w·dm` at every sorted-row prefix
/// boundary of `center`: `(cut, avg)` pairs, one per distinct open ball
/// around the center. `w = None` averages against `dm` alone.
fn prefix_averages(
    space: &QuasiMetricSpace,
    w: Option<&Weight>,
    f: &[f64],
    center: usize,
) -> Vec<(usize, f64)> {
    let row = space.sorted_row(center);
    let n = row.len();
    let mut sm = CompensatedSum::new();
    let mut sf = CompensatedSum::new();
    let mut out = Vec::new();
    for t in 0..n {
        let p = row[t] as usize;
        let wm = w.map_or(1.0, |w| w.value(p)) * space.mass_of(p);
        sm.add(wm);
        sf.add(f[p].abs() * wm);
        let boundary =
            t + 1 == n || space.rho(center, row[t + 1] as usize) > space.rho(center, p);
        if boundary {
            out.push((t + 1, sf.value() / sm.value()));
        }
    }
    out
}

/// The centered maximal function `Mf(x) = sup_r avg_{B(x,r)} |f|`.
///
/// With `radius_grid = None` the supremum is exact — every open ball is a
/// sorted-row prefix cut at a distance-group boundary — and in particular
/// `Mf ≥ |f|` pointwise (the singleton ball is always enumerated). With a
/// grid, only the given radii enter, around every center.
pub fn maximal_function(
    space: &QuasiMetricSpace,
    f: &SampledFunction,
    radius_grid: Option<&[f64]>,
) -> Result<SampledFunction> {
    if f.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "function has {} values for a space of {} points",
            f.len(),
            space.n()
        )));
    }
    if let Some(grid) = radius_grid {
        for &r in grid {
            if !(r > 0.0) {
                return Err(CoreError::InvalidValue(format!("grid radius {r} must be > 0")));
            }
        }
    }
    let mut out = Vec::with_capacity(space.n());
    for c in 0..space.n() {
        let averages = prefix_averages(space, None, f, c);
        let best = match radius_grid {
            None => averages.iter().fold(0.0f64, |acc, &(_, a)| acc.max(a)),
            Some(grid) => {
                let row = space.sorted_row(c);
                let mut acc = 0.0f64;
                for &r in grid {
                    let cut = row.partition_point(|&p| space.rho(c, p as usize) < r);
                    if cut == 0 {
                        continue;
                    }
                    if let Some(&(_, a)) = averages.iter().find(|&&(t, _)| t == cut) {
                        acc = acc.max(a);
                    }
                }
                acc
            }
        };
        out.push(best);
    }
    SampledFunction::new(out)
}

/// The weighted centered maximal function
/// `M_w f(x) = sup_r (1/w(B(x,r))) ∫_{B(x,r)} |f| w dm`,
/// with the supremum exact over all open balls around each center (every
/// ball is a sorted-row prefix cut). The singleton ball is enumerated, so
/// `M_w f ≥ |f|` pointwise, and constants are fixed points.
pub fn weighted_ball_maximal(
    space: &QuasiMetricSpace,
    w: &Weight,
    f: &SampledFunction,
) -> Result<SampledFunction> {
    if f.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "function has {} values for a space of {} points",
            f.len(),
            space.n()
        )));
    }
    if w.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "weight has {} values for a space of {} points",
            w.len(),
            space.n()
        )));
    }
    let mut out = Vec::with_capacity(space.n());
    for c in 0..space.n() {
        let best = prefix_averages(space, Some(w), f, c)
            .iter()
            .fold(0.0f64, |acc, &(_, a)| acc.max(a));
        out.push(best);
    }
    SampledFunction::new(out)
}

/// The weighted dyadic maximal function
/// `M_w f(x) = max{ (1/w(Q)) Σ_Q |f| w dm : x ∈ Q ∈ S }`,
/// taken over every cube of the system; `w = None` means the unweighted
/// dyadic maximal function. Computed by one precomputed pair of per-cube
/// sums and an ancestor walk per point.
pub fn weighted_dyadic_maximal(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    w: Option<&Weight>,
    f: &SampledFunction,
) -> Result<SampledFunction> {
    if f.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "function has {} values for a space of {} points",
            f.len(),
            space.n()
        )));
    }
    if let Some(w) = w {
        if w.len() != space.n() {
            return Err(CoreError::InvalidValue(format!(
                "weight has {} values for a space of {} points",
                w.len(),
                space.n()
            )));
        }
    }
    let wv = |p: usize| w.map_or(1.0, |w| w.value(p));
    let n_cubes = system.n_cubes();
    let mut ratio = Vec::with_capacity(n_cubes);
    for id in 0..n_cubes as u32 {
        let mut wq = CompensatedSum::new();
        let mut fwq = CompensatedSum::new();
        for &p in system.members(id) {
            let p = p as usize;
            let wm = wv(p) * space.mass_of(p);
            wq.add(wm);
            fwq.add(f[p].abs() * wm);
        }
        ratio.push(fwq.value() / wq.value());
    }
    let mut out = vec![0.0f64; space.n()];
    for (x, slot) in out.iter_mut().enumerate() {
        let mut id = system.leaf_of[x];
        let mut best = ratio[id as usize];
        while let Some(parent) = system.cube(id).parent {
            id = parent;
            best = best.max(ratio[id as usize]);
        }
        *slot = best;
    }
    SampledFunction::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{build_dyadic_system, NetOrder};
    use crate::space::{Ball, MassMode, Metric};
    use crate::util::mix64;

    fn grid(n: usize) -> QuasiMetricSpace {
        QuasiMetricSpace::unit_grid_1d(n, Metric::Euclidean, MassMode::Normalized).unwrap()
    }

    fn random_f(n: usize, seed: u64) -> SampledFunction {
        let mut state = seed;
        SampledFunction::new(
            (0..n)
                .map(|_| {
                    state = mix64(state);
                    (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn indicator_function_is_fixed_by_the_maximal_operator_at_one() {
        let space = grid(32);
        let f = SampledFunction::new(vec![1.0; 32]).unwrap();
        let m = maximal_function(&space, &f, None).unwrap();
        assert!(m.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exact_maximal_matches_all_balls_oracle() {
        // Every open ball around c is a prefix of the points sorted by
        // distance, cut where the distance strictly increases; conversely
        // each such cut is an open ball at a real radius strictly between
        // the two distances (even when they differ by one ulp, which float
        // midpoints cannot express — so the oracle enumerates cuts, and
        // checks radius realizability only across well-separated gaps).
        let space = grid(48);
        for round in 0..6u64 {
            let f = random_f(48, 0xcafe + round);
            let got = maximal_function(&space, &f, None).unwrap();
            for c in 0..48 {
                let mut pairs: Vec<(f64, usize)> =
                    (0..48).map(|y| (space.rho(c, y), y)).collect();
                pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut want: f64 = 0.0;
                for t in 1..=48 {
                    if t < 48 && pairs[t].0 == pairs[t - 1].0 {
                        continue;
                    }
                    let (mut sm, mut sf) = (0.0, 0.0);
                    for &(_, y) in &pairs[..t] {
                        sm += space.mass_of(y);
                        sf += f[y].abs() * space.mass_of(y);
                    }
                    want = want.max(sf / sm);
                    if t < 48 && pairs[t].0 - pairs[t - 1].0 > 1e-9 {
                        let r = 0.5 * (pairs[t].0 + pairs[t - 1].0);
                        let members = space.ball_members(Ball::new(c, r)).unwrap();
                        assert_eq!(members.len(), t, "cut {t} at x = {c}");
                    }
                }
                assert!(
                    (got[c] - want).abs() <= 1e-12 * want.max(1.0),
                    "round {round}, x = {c}: {} vs {}",
                    got[c],
                    want
                );
            }
        }
    }

    #[test]
    fn maximal_dominates_the_function_and_its_sup() {
        let space = grid(64);
        let f = random_f(64, 7);
        let m = maximal_function(&space, &f, None).unwrap();
        let sup = f.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for x in 0..64 {
            assert!(m[x] >= f[x].abs());
            assert!(m[x] <= sup * (1.0 + 1e-12));
        }
    }

    #[test]
    fn grid_maximal_is_dominated_by_the_exact_one() {
        let space = grid(64);
        let f = random_f(64, 11);
        let exact = maximal_function(&space, &f, None).unwrap();
        let radii: Vec<f64> = (0..10).map(|i| space.min_gap() * 2f64.powi(i)).collect();
        let gridded = maximal_function(&space, &f, Some(&radii)).unwrap();
        for x in 0..64 {
            assert!(gridded[x] <= exact[x] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn spike_maximal_decays_like_the_ball_mass() {
        let space = grid(64);
        let mut vals = vec![0.0; 64];
        vals[0] = 1.0;
        let f = SampledFunction::new(vals).unwrap();
        let m = maximal_function(&space, &f, None).unwrap();
        // At x, the best ball reaches the spike: avg = m(0)/|B(x, ρ(x,0)+)|.
        for x in 1..64 {
            let r = space.rho(x, 0) * (1.0 + 1e-9);
            let b = space.ball_measure(Ball::new(x, r)).unwrap();
            let want = space.mass_of(0) / b;
            assert!(
                (m[x] - want).abs() <= 1e-12,
                "x = {x}: {} vs {}",
                m[x],
                want
            );
        }
    }

    #[test]
    fn unweighted_dyadic_maximal_matches_all_cubes_oracle() {
        let space = grid(64);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let f = random_f(64, 23);
        let got = weighted_dyadic_maximal(&space, &system, None, &f).unwrap();
        for x in 0..64 {
            let mut want: f64 = 0.0;
            for id in 0..system.n_cubes() as u32 {
                if system.contains(id, x) {
                    let (mut sm, mut sf) = (0.0, 0.0);
                    for &p in system.members(id) {
                        sm += space.mass_of(p as usize);
                        sf += f[p as usize].abs() * space.mass_of(p as usize);
                    }
                    want = want.max(sf / sm);
                }
            }
            assert!(
                (got[x] - want).abs() <= 1e-12 * want.max(1.0),
                "x = {x}: {} vs {}",
                got[x],
                want
            );
        }
    }

    #[test]
    fn weighted_dyadic_maximal_matches_ancestor_oracle_and_dominates_f() {
        let space = grid(64);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let mut state = 77u64;
        let w = Weight::new(
            (0..64)
                .map(|_| {
                    state = mix64(state);
                    ((state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0).exp()
                })
                .collect(),
        )
        .unwrap();
        let f = random_f(64, 31);
        let got = weighted_dyadic_maximal(&space, &system, Some(&w), &f).unwrap();
        for x in 0..64 {
            let mut want: f64 = 0.0;
            for id in 0..system.n_cubes() as u32 {
                if system.contains(id, x) {
                    let (mut swm, mut sfwm) = (0.0, 0.0);
                    for &p in system.members(id) {
                        let wm = w.value(p as usize) * space.mass_of(p as usize);
                        swm += wm;
                        sfwm += f[p as usize].abs() * wm;
                    }
                    want = want.max(sfwm / swm);
                }
            }
            assert!(
                (got[x] - want).abs() <= 1e-12 * want.max(1.0),
                "x = {x}: {} vs {}",
                got[x],
                want
            );
            // Auto-ranged systems end in singleton leaves, so M_w f ≥ |f|.
            assert!(got[x] >= f[x].abs() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn constant_function_is_fixed_by_the_weighted_maximal() {
        let space = grid(32);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let w = Weight::new((0..32).map(|i| 1.0 + i as f64).collect()).unwrap();
        let f = SampledFunction::new(vec![1.0; 32]).unwrap();
        let m = weighted_dyadic_maximal(&space, &system, Some(&w), &f).unwrap();
        assert!(m.iter().all(|&v| v == 1.0), "{m:?}");
    }

    #[test]
    fn weighted_ball_maximal_matches_all_cuts_oracle() {
        let space = grid(48);
        let mut state = 3u64;
        let w = Weight::new(
            (0..48)
                .map(|_| {
                    state = mix64(state);
                    ((state >> 11) as f64 / (1u64 << 53) as f64 * 3.0 - 1.5).exp()
                })
                .collect(),
        )
        .unwrap();
        let f = random_f(48, 0xbead);
        let got = weighted_ball_maximal(&space, &w, &f).unwrap();
        for c in 0..48 {
            let mut pairs: Vec<(f64, usize)> = (0..48).map(|y| (space.rho(c, y), y)).collect();
            pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut want: f64 = 0.0;
            for t in 1..=48 {
                if t < 48 && pairs[t].0 == pairs[t - 1].0 {
                    continue;
                }
                let (mut sm, mut sf) = (0.0, 0.0);
                for &(_, y) in &pairs[..t] {
                    let wm = w.value(y) * space.mass_of(y);
                    sm += wm;
                    sf += f[y].abs() * wm;
                }
                want = want.max(sf / sm);
            }
            assert!(
                (got[c] - want).abs() <= 1e-12 * want.max(1.0),
                "x = {c}: {} vs {}",
                got[c],
                want
            );
            assert!(got[c] >= f[c].abs() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn unit_weight_ball_maximal_equals_the_unweighted_one() {
        let space = grid(40);
        let f = random_f(40, 99);
        let w = Weight::constant(40, 1.0).unwrap();
        let a = weighted_ball_maximal(&space, &w, &f).unwrap();
        let b = maximal_function(&space, &f, None).unwrap();
        for x in 0..40 {
            assert_eq!(a[x].to_bits(), b[x].to_bits(), "x = {x}");
        }
    }

    #[test]
    fn constant_function_is_fixed_by_the_weighted_ball_maximal() {
        let space = grid(24);
        let w = Weight::new((0..24).map(|i| 1.0 + (i as f64).sqrt()).collect()).unwrap();
        let f = SampledFunction::new(vec![1.0; 24]).unwrap();
        let m = weighted_ball_maximal(&space, &w, &f).unwrap();
        assert!(m.iter().all(|&v| v == 1.0), "{m:?}");
    }

    #[test]
    fn rejects_mismatched_lengths_and_bad_radii() {
        let space = grid(16);
        let f = SampledFunction::new(vec![0.0; 8]).unwrap();
        assert!(maximal_function(&space, &f, None).is_err());
        let g = SampledFunction::new(vec![0.0; 16]).unwrap();
        assert!(maximal_function(&space, &g, Some(&[-1.0])).is_err());
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        assert!(weighted_dyadic_maximal(&space, &system, None, &f).is_err());
        let short = Weight::constant(8, 1.0).unwrap();
        assert!(weighted_dyadic_maximal(&space, &system, Some(&short), &g).is_err());
    }
}
