//! Discrete model operators attached to a sparse family: the dilated-ball
//! averaging operators `A_k` and their cube-localized versions `B_{j,k}`
//! with sources in an adjacent dyadic family.

use serde::{Deserialize, Serialize};

use crate::adjacent::{cover_ball, AdjacentSystems};
use crate::dyadic::{CubeId, DyadicSystem};
use crate::error::{CoreError, Result};
use crate::median::SampledFunction;
use crate::space::QuasiMetricSpace;
use crate::sparse::SparseFamily;
use crate::util::CompensatedSum;

/// One rank-one summand `coefficient · (∫_source ·) · χ_target`, remembering
/// which family cube produced it and, for localized forms, the covering cube
/// `(j, Q*)` it averages over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorTerm {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
    pub coefficient: f64,
    pub cube: CubeId,
    pub star: Option<(u32, CubeId)>,
}

/// A finite sum of rank-one averaging terms.
///
/// `absolute` marks the positive form that averages `|f|` (the `A_k`
/// operators); its operator norm equals the norm of the linear form with the
/// absolute values dropped, since the defining terms are nonnegative and the
/// supremum is attained at a nonnegative function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOperator {
    pub terms: Vec<OperatorTerm>,
    pub complexity: u32,
    pub absolute: bool,
    pub label: String,
}

impl DiscreteOperator {
    /// `(op f)(x) = Σ_t c_t (Σ_{y ∈ src_t} g(y) m(y)) χ_{tgt_t}(x)` with
    /// `g = |f|` when the operator is an absolute form, `g = f` otherwise.
    pub fn apply(&self, space: &QuasiMetricSpace, f: &SampledFunction) -> Result<SampledFunction> {
        if f.len() != space.n() {
            return Err(CoreError::InvalidValue(format!(
                "function has {} values for a space of {} points",
                f.len(),
                space.n()
            )));
        }
        if self.absolute {
            self.scatter(space, &|y| f[y].abs())
        } else {
            self.scatter(space, &|y| f[y])
        }
    }

    /// The linear form: always sums `f` itself, ignoring the absolute flag.
    /// This is what norms, adjoints and duality identities act on.
    pub fn apply_linear(
        &self,
        space: &QuasiMetricSpace,
        f: &[f64],
    ) -> Result<Vec<f64>> {
        if f.len() != space.n() {
            return Err(CoreError::InvalidValue(format!(
                "function has {} values for a space of {} points",
                f.len(),
                space.n()
            )));
        }
        Ok(self.scatter_raw(space, &|y| f[y]))
    }

    fn scatter(
        &self,
        space: &QuasiMetricSpace,
        g: &dyn Fn(usize) -> f64,
    ) -> Result<SampledFunction> {
        SampledFunction::new(self.scatter_raw(space, g))
    }

    fn scatter_raw(&self, space: &QuasiMetricSpace, g: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let mut acc: Vec<CompensatedSum> = vec![CompensatedSum::new(); space.n()];
        for term in &self.terms {
            let mut s = CompensatedSum::new();
            for &y in &term.source {
                s.add(g(y as usize) * space.mass_of(y as usize));
            }
            let v = term.coefficient * s.value();
            for &x in &term.target {
                acc[x as usize].add(v);
            }
        }
        acc.into_iter().map(|c| c.value()).collect()
    }

    /// The formal adjoint under the underlying measure: every term swaps its
    /// source and target sets, keeping the coefficient and provenance.
    pub fn adjoint(&self) -> DiscreteOperator {
        DiscreteOperator {
            terms: self
                .terms
                .iter()
                .map(|t| OperatorTerm {
                    source: t.target.clone(),
                    target: t.source.clone(),
                    coefficient: t.coefficient,
                    cube: t.cube,
                    star: t.star,
                })
                .collect(),
            complexity: self.complexity,
            absolute: self.absolute,
            label: format!("{}*", self.label),
        }
    }

    /// Dense matrix of the linear form: `M[x][y] = Σ_t c_t [x∈tgt][y∈src] m(y)`,
    /// row-major. Quadratic memory — intended for small-space oracles.
    pub fn matrix(&self, space: &QuasiMetricSpace) -> Vec<f64> {
        let n = space.n();
        let mut m = vec![0.0; n * n];
        for term in &self.terms {
            for &x in &term.target {
                let row = x as usize * n;
                for &y in &term.source {
                    m[row + y as usize] += term.coefficient * space.mass_of(y as usize);
                }
            }
        }
        m
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }
}

/// Builds `A_k f = Σ_{Q ∈ F} (avg_{2^k Q} |f|) χ_Q` over the family cubes;
/// `2^k Q` is the dilated ball `B(x_c(Q), 2^k C δ^{k(Q)})`. Requires `k ≥ 1`.
pub fn build_a_k(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    family: &SparseFamily,
    k: u32,
) -> Result<DiscreteOperator> {
    if k == 0 {
        return Err(CoreError::InvalidValue(
            "complexity k must be ≥ 1 for a dilated-ball operator".into(),
        ));
    }
    let lambda = 2f64.powi(k as i32);
    let mut terms = Vec::with_capacity(family.len());
    for q in family.cubes() {
        let ball = system.dilate(q, lambda)?;
        let members = space.ball_members(ball)?;
        let measure = space.ball_measure(ball)?;
        terms.push(OperatorTerm {
            source: members.to_vec(),
            target: system.members(q).to_vec(),
            coefficient: 1.0 / measure,
            cube: q,
            star: None,
        });
    }
    Ok(DiscreteOperator { terms, complexity: k, absolute: true, label: format!("A_{k}") })
}

/// Builds the localized family `B_{j,k} f = Σ_{Q} (avg_{Q*} f) χ_Q`, where
/// `Q*` is the smallest adjacent-family cube containing the dilated ball
/// `2^k Q` (so `2^k Q ⊆ Q*` and `diam(Q*) ≤ D·2^k C δ^{k(Q)}` hold by
/// construction). Returns one operator per adjacent system; a family cube
/// contributes to exactly one of them. `k = 0` is the baseline with the
/// family cube itself as `Q*`, returned as a single operator.
pub fn build_b(
    space: &QuasiMetricSpace,
    system: &DyadicSystem,
    family: &SparseFamily,
    adjacent: &AdjacentSystems,
    k: u32,
) -> Result<Vec<DiscreteOperator>> {
    if k == 0 {
        let terms = family
            .cubes()
            .map(|q| OperatorTerm {
                source: system.members(q).to_vec(),
                target: system.members(q).to_vec(),
                coefficient: 1.0 / system.cube(q).mass,
                cube: q,
                star: None,
            })
            .collect();
        return Ok(vec![DiscreteOperator {
            terms,
            complexity: 0,
            absolute: false,
            label: "B_0,0".into(),
        }]);
    }
    let lambda = 2f64.powi(k as i32);
    let mut groups: Vec<Vec<OperatorTerm>> = vec![Vec::new(); adjacent.j()];
    for q in family.cubes() {
        let ball = system.dilate(q, lambda)?;
        let (j, qstar) = cover_ball(adjacent, space, ball).map_err(|e| {
            CoreError::Construction(format!(
                "complexity {k}: the dilated ball of cube {q} has no admissible cover: {e}"
            ))
        })?;
        let star_system = &adjacent.systems[j];
        debug_assert!(space
            .ball_members(ball)
            .unwrap()
            .iter()
            .all(|&p| star_system.contains(qstar, p as usize)));
        groups[j].push(OperatorTerm {
            source: star_system.members(qstar).to_vec(),
            target: system.members(q).to_vec(),
            coefficient: 1.0 / star_system.cube(qstar).mass,
            cube: q,
            star: Some((j as u32, qstar)),
        });
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(j, terms)| DiscreteOperator {
            terms,
            complexity: k,
            absolute: false,
            label: format!("B_{j},{k}"),
        })
        .collect())
}

/// The worst measure ratio `|Q*| / |2^k Q|` between a localized operator
/// family and its dilated-ball counterpart: the constant through which
/// `A_k |f| ≤ D · Σ_j B_{j,k} |f|` pointwise.
pub fn discretization_ratio(a_op: &DiscreteOperator, b_ops: &[DiscreteOperator]) -> Result<f64> {
    let mut ratio: f64 = 0.0;
    let mut matched = 0usize;
    for b in b_ops {
        for t in &b.terms {
            let Some(a_term) = a_op.terms.iter().find(|a| a.cube == t.cube) else {
                return Err(CoreError::InvalidValue(format!(
                    "cube {} has a localized term but no ball term",
                    t.cube
                )));
            };
            // coefficients are reciprocal measures, so a/b = |Q*|/|ball|.
            ratio = ratio.max(a_term.coefficient / t.coefficient);
            matched += 1;
        }
    }
    if matched != a_op.terms.len() {
        return Err(CoreError::InvalidValue(format!(
            "{matched} localized terms cover {} ball terms",
            a_op.terms.len()
        )));
    }
    Ok(ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacent::build_adjacent_systems;
    use crate::dyadic::{build_dyadic_system, NetOrder};
    use crate::space::{MassMode, Metric};
    use crate::sparse::build_sparse_family;
    use crate::util::{compensated_sum, mix64};

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

    fn setup(n: usize, seed: u64) -> (QuasiMetricSpace, DyadicSystem, SparseFamily) {
        let space = grid(n);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let f = random_f(n, seed);
        let q0 = system.root().unwrap();
        let family = build_sparse_family(&space, &system, &f, q0, None, 30).unwrap();
        (space, system, family)
    }

    #[test]
    fn single_cube_family_averages_over_the_dilated_ball() {
        let space = grid(64);
        let system = build_dyadic_system(&space, 0.5, None, NetOrder::Index).unwrap();
        let q0 = system.root().unwrap();
        let family = SparseFamily {
            q0,
            generations: vec![vec![q0]],
            lambda: 0.25,
            truncated: false,
        };
        let op = build_a_k(&space, &system, &family, 2).unwrap();
        assert_eq!(op.n_terms(), 1);
        let f = random_f(64, 3);
        let got = op.apply(&space, &f).unwrap();
        let ball = system.dilate(q0, 4.0).unwrap();
        let avg = {
            let members = space.ball_members(ball).unwrap();
            let s = compensated_sum(
                members.iter().map(|&p| f[p as usize].abs() * space.mass_of(p as usize)),
            );
            s / space.ball_measure(ball).unwrap()
        };
        for x in 0..64 {
            assert_eq!(got[x], avg, "x = {x}");
        }
    }

    #[test]
    fn apply_matches_dense_matrix_oracle() {
        let (space, system, family) = setup(128, 0xd15c);
        let op = build_a_k(&space, &system, &family, 1).unwrap();
        let f = random_f(128, 5);
        let got = op.apply_linear(&space, &f).unwrap();
        let m = op.matrix(&space);
        for x in 0..128 {
            let want: f64 = (0..128).map(|y| m[x * 128 + y] * f[y]).sum();
            assert!(
                (got[x] - want).abs() <= 1e-12 * want.abs().max(1.0),
                "x = {x}: {} vs {}",
                got[x],
                want
            );
        }
    }

    #[test]
    fn absolute_form_dominates_and_is_monotone() {
        let (space, system, family) = setup(64, 0xab5);
        let op = build_a_k(&space, &system, &family, 2).unwrap();
        let f = random_f(64, 9);
        let g = SampledFunction::new(f.iter().map(|v| v.abs() * 2.0).collect()).unwrap();
        let af = op.apply(&space, &f).unwrap();
        let ag = op.apply(&space, &g).unwrap();
        for x in 0..64 {
            assert!(af[x] >= 0.0);
            assert!(ag[x] >= af[x] * (1.0 - 1e-12), "x = {x}");
        }
    }

    #[test]
    fn adjoint_satisfies_the_duality_identity() {
        let (space, system, family) = setup(96, 0xd0a1);
        let adjacent = build_adjacent_systems(&space, 0.5, 4, 11).unwrap();
        for k in [1u32, 3] {
            let ops = build_b(&space, &system, &family, &adjacent, k).unwrap();
            for op in &ops {
                let star = op.adjoint();
                let f = random_f(96, 100 + k as u64);
                let g = random_f(96, 200 + k as u64);
                let bf = op.apply_linear(&space, &f).unwrap();
                let bsg = star.apply_linear(&space, &g).unwrap();
                let lhs = compensated_sum(
                    (0..96).map(|x| bf[x] * g[x] * space.mass_of(x)),
                );
                let rhs = compensated_sum(
                    (0..96).map(|x| f[x] * bsg[x] * space.mass_of(x)),
                );
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
                    "{}: ⟨Bf,g⟩ = {lhs}, ⟨f,B*g⟩ = {rhs}",
                    op.label
                );
            }
        }
    }

    #[test]
    fn localized_terms_satisfy_both_containment_conditions() {
        let (space, system, family) = setup(128, 0xbb);
        let adjacent = build_adjacent_systems(&space, 0.5, 4, 17).unwrap();
        for k in [1u32, 2, 4] {
            let ops = build_b(&space, &system, &family, &adjacent, k).unwrap();
            assert_eq!(ops.len(), adjacent.j());
            let mut seen = 0usize;
            for op in &ops {
                for t in &op.terms {
                    seen += 1;
                    let (j, qstar) = t.star.unwrap();
                    let star_system = &adjacent.systems[j as usize];
                    let ball = system.dilate(t.cube, 2f64.powi(k as i32)).unwrap();
                    // Dilated ball inside the cover…
                    for &p in space.ball_members(ball).unwrap() {
                        assert!(star_system.contains(qstar, p as usize));
                    }
                    // …and the cover not too wide.
                    assert!(
                        star_system.cube(qstar).diameter
                            <= adjacent.d_constant * ball.radius * (1.0 + 1e-9)
                    );
                }
            }
            // Partition: every family cube contributes to exactly one group.
            assert_eq!(seen, family.len());
        }
    }

    #[test]
    fn baseline_complexity_averages_over_the_cube_itself() {
        let (space, system, family) = setup(64, 0x0);
        let adjacent = build_adjacent_systems(&space, 0.5, 4, 23).unwrap();
        let ops = build_b(&space, &system, &family, &adjacent, 0).unwrap();
        assert_eq!(ops.len(), 1);
        let f = random_f(64, 41);
        let got = ops[0].apply(&space, &f).unwrap();
        // Direct evaluation: Σ_Q avg_Q(f)·χ_Q.
        let mut want = vec![0.0; 64];
        for q in family.cubes() {
            let members = system.members(q);
            let avg = compensated_sum(
                members.iter().map(|&p| f[p as usize] * space.mass_of(p as usize)),
            ) / system.cube(q).mass;
            for &p in members {
                want[p as usize] += avg;
            }
        }
        for x in 0..64 {
            assert!((got[x] - want[x]).abs() <= 1e-12 * want[x].abs().max(1.0));
        }
    }

    #[test]
    fn ball_averages_are_dominated_by_the_localized_sum() {
        let (space, system, family) = setup(128, 0x77);
        let adjacent = build_adjacent_systems(&space, 0.5, 4, 29).unwrap();
        for k in [1u32, 3] {
            let a_op = build_a_k(&space, &system, &family, k).unwrap();
            let b_ops = build_b(&space, &system, &family, &adjacent, k).unwrap();
            let d = discretization_ratio(&a_op, &b_ops).unwrap();
            assert!(d >= 1.0, "cover measure at least the ball measure, got {d}");
            let f = random_f(128, 500 + k as u64);
            let af = a_op.apply(&space, &f).unwrap();
            let fabs = SampledFunction::new(f.iter().map(|v| v.abs()).collect()).unwrap();
            let mut bsum = vec![0.0; 128];
            for op in &b_ops {
                let bf = op.apply(&space, &fabs).unwrap();
                for x in 0..128 {
                    bsum[x] += bf[x];
                }
            }
            for x in 0..128 {
                assert!(
                    af[x] <= d * bsum[x] * (1.0 + 1e-12) + 1e-15,
                    "k = {k}, x = {x}: {} vs {} (D = {d})",
                    af[x],
                    bsum[x]
                );
            }
        }
    }

    #[test]
    fn operators_serialize_and_round_trip() {
        let (space, system, family) = setup(32, 0x5e);
        let op = build_a_k(&space, &system, &family, 1).unwrap();
        let json = serde_json::to_string(&op).unwrap();
        let back: DiscreteOperator = serde_json::from_str(&json).unwrap();
        assert_eq!(op, back);
    }

    #[test]
    fn rejects_zero_complexity_for_ball_operators_and_bad_lengths() {
        let (space, system, family) = setup(32, 0x9);
        assert!(build_a_k(&space, &system, &family, 0).is_err());
        let op = build_a_k(&space, &system, &family, 1).unwrap();
        let short = SampledFunction::new(vec![0.0; 8]).unwrap();
        assert!(op.apply(&space, &short).is_err());
    }
}
