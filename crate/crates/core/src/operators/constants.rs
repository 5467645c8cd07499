//! Measured constants of a run, plus the Calderón–Zygmund machinery they
//! are measured with: Whitney covers of level sets, the good/bad splitting,
//! and the level-window audit for localized operators.

use serde::{Deserialize, Serialize};

use crate::dyadic::{CubeId, DyadicSystem};
use crate::error::{CoreError, Result};
use crate::median::SampledFunction;
use crate::operators::discrete::DiscreteOperator;
use crate::operators::maximal::maximal_function;
use crate::space::QuasiMetricSpace;
use crate::util::CompensatedSum;

/// All constants a run measures rather than assumes. `None` means the
/// corresponding experiment has not run. The two classical `D₂`s are kept
/// apart: one compares cover measures to dilated-ball measures, the other is
/// the weak-(1,1) constant of the maximal function.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasuredConstants {
    /// Dyadic A₂ against ball A₂: `max a2_dyadic(w) / a2(w)`.
    pub d0: Option<f64>,
    /// Largest oscillation/dilation-series quotient for the singular kernel.
    pub d1: Option<f64>,
    /// Largest cover/ball measure ratio `|Q*| / |2^k Q|`.
    pub d2_discretization: Option<f64>,
    /// Weak-(1,1) quotient of the centered maximal function.
    pub d2_weak11: Option<f64>,
    /// Good-part bound: `‖g‖_∞ / a` in the CZ splitting.
    pub d3: Option<f64>,
    /// Level-window slope: contributing pairs satisfy `k(Q) − k(W) < D₄k + D₅`.
    pub d4: Option<f64>,
    /// Level-window offset.
    pub d5: Option<f64>,
    /// Local oscillation of localized adjoints per unit average.
    pub d6: Option<f64>,
    /// Weighted-maximal norm bound on L²(w).
    pub d7: Option<f64>,
    /// Weak-(1,1) quotient of localized adjoints per unit complexity.
    pub beta: Option<f64>,
    /// L² bound of the localized operators.
    pub gamma: Option<f64>,
}

/// The maximal dyadic cubes `W ⊆ Ω` with `diam(W) ≤ dist(W, Ω^c)`.
///
/// Whitney cubes are disjoint and exhaust `Ω` exactly: singleton leaves have
/// zero diameter and positive distance to the complement, so a qualifying
/// cube exists above every point of `Ω`; the top-down first hit picks the
/// maximal one. Fails if a leaf inside `Ω` still violates the inequality
/// (possible only for truncated systems with non-singleton leaves).
pub fn whitney_cover(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    in_omega: &[bool],
) -> Result<Vec<CubeId>> {
    if in_omega.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "level-set mask has {} entries for a space of {} points",
            in_omega.len(),
            space.n()
        )));
    }
    let complement: Vec<u32> =
        (0..space.n() as u32).filter(|&p| !in_omega[p as usize]).collect();
    let mut cover = Vec::new();
    let mut stack: Vec<CubeId> = system.roots().rev().collect();
    while let Some(id) = stack.pop() {
        let cube = system.cube(id);
        let members = system.members(id);
        let inside = members.iter().all(|&p| in_omega[p as usize]);
        if inside {
            let dist = complement
                .iter()
                .flat_map(|&y| members.iter().map(move |&x| space.rho(x as usize, y as usize)))
                .fold(f64::INFINITY, f64::min);
            if cube.diameter <= dist {
                cover.push(id);
                continue;
            }
        }
        if cube.children.is_empty() {
            if inside {
                return Err(CoreError::Construction(format!(
                    "leaf cube {id} lies in the level set but is wider than its \
                     distance to the complement; refine the dyadic system"
                )));
            }
            continue;
        }
        stack.extend(cube.children.clone().rev());
    }
    Ok(cover)
}

/// A Calderón–Zygmund splitting of `f` at height `a`.
#[derive(Debug, Clone)]
pub struct CzParts {
    pub level: f64,
    /// `Ω = {Mf > a}` as a mask.
    pub omega: Vec<bool>,
    /// Whitney cubes covering `Ω`.
    pub whitney: Vec<CubeId>,
    /// `g`: equals the Whitney-cube average inside `Ω`, `f` outside.
    pub good: SampledFunction,
    /// `b = Σ_i (f − avg_{W_i} f)·χ_{W_i}`; every summand has zero integral.
    pub bad: SampledFunction,
    /// `max |g| / a`.
    pub d3_observed: f64,
}

/// Splits `f` at height `a` along the exact centered maximal function:
/// `f = g + b` with `b` supported on the Whitney cubes of `{Mf > a}` and
/// mean-free on each of them.
pub fn cz_decompose(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    f: &SampledFunction,
    a: f64,
) -> Result<CzParts> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(CoreError::InvalidValue(format!("height {a} must be positive and finite")));
    }
    if f.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "function has {} values for a space of {} points",
            f.len(),
            space.n()
        )));
    }
    let mf = maximal_function(space, f, None)?;
    let omega: Vec<bool> = mf.iter().map(|&v| v > a).collect();
    let whitney = whitney_cover(space, system, &omega)?;
    let mut good = f.to_vec();
    for &w in &whitney {
        let members = system.members(w);
        let mut s = CompensatedSum::new();
        for &p in members {
            s.add(f[p as usize] * space.mass_of(p as usize));
        }
        let avg = s.value() / system.cube(w).mass;
        for &p in members {
            good[p as usize] = avg;
        }
    }
    let bad: Vec<f64> = (0..space.n()).map(|x| f[x] - good[x]).collect();
    let d3_observed = good.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())) / a;
    Ok(CzParts {
        level: a,
        omega,
        whitney,
        good: SampledFunction::new(good)?,
        bad: SampledFunction::new(bad)?,
        d3_observed,
    })
}

/// One contributing (family cube, Whitney cube) pair of the weak-type
/// argument, with its level offset `k(Q) − k(W) ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPair {
    pub cube: CubeId,
    pub whitney: CubeId,
    pub dk: i32,
}

/// Enumerates the pairs through which a mean-free bad part can reach the
/// complement of `Ω`: terms of a localized operator (cube `Q`, cover `Q*`)
/// and Whitney cubes `W` of the same system with `Q` strictly inside `W`
/// (equal member sets integrate `b_W` to zero and drop out) and `Q*`
/// meeting `Ω^c`. Expects the operator in its source-= `Q*` form, i.e. the
/// one built by `build_b`, not its adjoint.
pub fn level_window_pairs(
    system: &DyadicSystem,
    op: &DiscreteOperator,
    parts: &CzParts,
) -> Vec<WindowPair> {
    let mut out = Vec::new();
    for term in &op.terms {
        if term.star.is_none() {
            continue;
        }
        let reaches_out = term.source.iter().any(|&p| !parts.omega[p as usize]);
        if !reaches_out {
            continue;
        }
        let q_span = system.cube(term.cube).span;
        for &w in &parts.whitney {
            let w_span = system.cube(w).span;
            let nested = w_span.0 <= q_span.0 && q_span.1 <= w_span.1;
            if nested && q_span != w_span {
                let dk = system.k_of(term.cube) - system.k_of(w);
                debug_assert!(dk >= 0, "a strictly smaller cube sits at a finer level");
                out.push(WindowPair { cube: term.cube, whitney: w, dk });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacent::build_adjacent_systems;
    use crate::dyadic::{build_dyadic_system, NetOrder};
    use crate::operators::discrete::build_b;
    use crate::space::{MassMode, Metric};
    use crate::sparse::build_sparse_family;
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

    fn check_whitney(
        space: &QuasiMetricSpace,
        system: &DyadicSystem,
        omega: &[bool],
        cover: &[CubeId],
    ) {
        // Exact disjoint union of Ω.
        let mut hit = vec![0usize; space.n()];
        for &w in cover {
            for &p in system.members(w) {
                hit[p as usize] += 1;
            }
        }
        for x in 0..space.n() {
            assert_eq!(hit[x], usize::from(omega[x]), "point {x}");
        }
        // Property and maximality, by brute force.
        let dist = |id: CubeId| -> f64 {
            let members = system.members(id);
            (0..space.n())
                .filter(|&y| !omega[y])
                .flat_map(|y| members.iter().map(move |&x| space.rho(x as usize, y)))
                .fold(f64::INFINITY, f64::min)
        };
        let qualifies = |id: CubeId| -> bool {
            system.members(id).iter().all(|&p| omega[p as usize])
                && system.cube(id).diameter <= dist(id)
        };
        for &w in cover {
            assert!(qualifies(w), "cube {w} fails the Whitney property");
            let mut up = system.cube(w).parent;
            while let Some(p) = up {
                assert!(!qualifies(p), "ancestor {p} of {w} also qualifies");
                up = system.cube(p).parent;
            }
        }
    }

    #[test]
    fn whitney_cover_is_an_exact_partition_with_maximal_cubes() {
        for metric in [Metric::Euclidean, Metric::Snowflake(0.5)] {
            let space =
                QuasiMetricSpace::unit_grid_1d(96, metric, MassMode::Normalized).unwrap();
            let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
            for round in 0..12u64 {
                let f = random_f(96, 0x3b + round);
                let mf = maximal_function(&space, &f, None).unwrap();
                let mut levels: Vec<f64> = mf.iter().map(|&v| v).collect();
                levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let a = levels[(round as usize * 7 + 13) % 96].max(1e-6);
                let omega: Vec<bool> = mf.iter().map(|&v| v > a).collect();
                let cover = whitney_cover(&space, &system, &omega).unwrap();
                check_whitney(&space, &system, &omega, &cover);
            }
        }
    }

    #[test]
    fn full_level_set_is_covered_by_the_roots() {
        let space = grid(64);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let omega = vec![true; 64];
        let cover = whitney_cover(&space, &system, &omega).unwrap();
        let roots: Vec<CubeId> = system.roots().collect();
        assert_eq!(cover, roots);
    }

    #[test]
    fn empty_level_set_has_an_empty_cover_and_trivial_split() {
        let space = grid(64);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let f = random_f(64, 1);
        let sup = f.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let parts = cz_decompose(&space, &system, &f, sup * 2.0).unwrap();
        assert!(parts.whitney.is_empty());
        assert!(parts.bad.iter().all(|&v| v == 0.0));
        for x in 0..64 {
            assert_eq!(parts.good[x], f[x]);
        }
        assert!(parts.d3_observed <= 0.5 + 1e-12);
    }

    #[test]
    fn split_reassembles_f_and_bad_parts_are_mean_free() {
        let space = grid(128);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        for round in 0..10u64 {
            let f = random_f(128, 0x60 + round);
            let a = 0.05 + 0.1 * round as f64 / 10.0;
            let parts = cz_decompose(&space, &system, &f, a).unwrap();
            let scale = f.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            for x in 0..128 {
                assert!(
                    (parts.good[x] + parts.bad[x] - f[x]).abs() <= 1e-14 * scale,
                    "round {round}, x = {x}"
                );
            }
            for &w in &parts.whitney {
                let mut s = CompensatedSum::new();
                for &p in system.members(w) {
                    s.add(parts.bad[p as usize] * space.mass_of(p as usize));
                }
                assert!(
                    s.value().abs() <= 1e-13 * scale,
                    "round {round}: ∫ b over cube {w} = {}",
                    s.value()
                );
            }
            // Outside Ω the good part is f itself and obeys the height bound.
            for x in 0..128 {
                if !parts.omega[x] {
                    assert_eq!(parts.good[x], f[x]);
                    assert!(f[x].abs() <= a * (1.0 + 1e-12));
                    assert_eq!(parts.bad[x], 0.0);
                }
            }
            assert!(parts.d3_observed.is_finite());
        }
    }

    #[test]
    fn good_part_height_stays_bounded_across_heights() {
        let space = grid(96);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let f = random_f(96, 0x44);
        let mut worst: f64 = 0.0;
        for i in 1..10 {
            let a = 0.02 * i as f64;
            let parts = cz_decompose(&space, &system, &f, a).unwrap();
            worst = worst.max(parts.d3_observed);
        }
        // Doubling-controlled: the average over a Whitney cube is dominated
        // by a maximal-function value ≤ a at a nearby complement point.
        assert!(worst < 50.0, "d3 blew up: {worst}");
    }

    #[test]
    fn window_pairs_sit_strictly_inside_their_whitney_cubes() {
        let space = grid(128);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let f = random_f(128, 0x88);
        let family =
            build_sparse_family(&space, &system, &f, system.root().unwrap(), None, 30).unwrap();
        let adjacent = build_adjacent_systems(&space, 0.5, 4, 5).unwrap();
        for k in [1u32, 2] {
            let ops = build_b(&space, &system, &family, &adjacent, k).unwrap();
            for a in [0.05, 0.15, 0.4] {
                let parts = cz_decompose(&space, &system, &f, a).unwrap();
                for op in &ops {
                    for pair in level_window_pairs(&system, op, &parts) {
                        assert!(pair.dk >= 0);
                        assert!(system.is_subset(pair.cube, pair.whitney));
                        assert_ne!(
                            system.cube(pair.cube).span,
                            system.cube(pair.whitney).span
                        );
                        // The cover does reach the complement.
                        let term = op
                            .terms
                            .iter()
                            .find(|t| t.cube == pair.cube)
                            .expect("pair cube comes from a term");
                        assert!(term
                            .source
                            .iter()
                            .any(|&p| !parts.omega[p as usize]));
                    }
                }
            }
        }
    }

    #[test]
    fn measured_constants_round_trip_through_json() {
        let mut c = MeasuredConstants::default();
        assert_eq!(c, serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap());
        c.d3 = Some(4.5);
        c.beta = Some(1.25);
        c.gamma = Some(19.0);
        let back: MeasuredConstants =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_bad_heights_and_mask_lengths() {
        let space = grid(16);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let f = random_f(16, 2);
        assert!(cz_decompose(&space, &system, &f, 0.0).is_err());
        assert!(cz_decompose(&space, &system, &f, f64::NAN).is_err());
        assert!(whitney_cover(&space, &system, &[true; 4]).is_err());
    }
}
