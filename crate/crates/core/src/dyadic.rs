//! Dyadic cube systems on finite quasi-metric spaces.
//!
//! Construction follows the classical net scheme: level nets are greedy
//! maximal `δ^k`-separated subsets, nested fine → coarse (every coarse net
//! point persists in all finer nets), each net point is assigned to its
//! nearest coarser net point (ties by smaller point index), and leaf points
//! are assigned to their nearest finest-level net point. Cube members are
//! the leaf points of the resulting subtree.
//!
//! Nothing is assumed about the outcome: the five structural properties
//!   p1  each level partitions the space exactly,
//!   p2  any two cubes are disjoint or nested,
//!   p3  one parent, ≥ 1 child, children partition the parent,
//!   p4  child mass ≥ ε · parent mass with ε > 0,
//!   p5  B(center, a·δ^k) ⊆ Q ⊆ B(center, C·δ^k) for recorded a, C,
//! are measured and re-checked exhaustively by [`verify_system`].
//!
//! Internally each cube is a contiguous span of a DFS ordering of the leaf
//! points, making membership and subset tests O(1); the exportable
//! [`RawSystem`] spells members out as explicit lists so that imported or
//! deliberately corrupted systems can be verified independently.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::space::{Ball, QuasiMetricSpace};
use crate::util::CompensatedSum;

pub type CubeId = u32;

/// Scan order used by the greedy net selection. Different orders yield
/// different (all valid) systems; adjacent families exploit this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetOrder {
    /// Ascending point index.
    Index,
    /// Ascending index, starting from `start` and wrapping around.
    Rotated { start: usize },
    /// Seeded pseudo-random permutation.
    Seeded { seed: u64 },
}

/// One dyadic cube. `span` indexes into the system's `leaf_order`; members
/// of the cube are exactly `leaf_order[span.0..span.1]`.
#[derive(Debug, Clone)]
pub struct Cube {
    /// Level index (0 = coarsest); the dyadic scale is `k_min + level`.
    pub level: u32,
    /// Center point (a net point of this level).
    pub center: u32,
    pub span: (u32, u32),
    pub parent: Option<CubeId>,
    /// Children are contiguous cube ids on the next level.
    pub children: Range<CubeId>,
    pub mass: f64,
    /// Exact max pairwise distance among members (0 for singletons).
    pub diameter: f64,
    /// Max distance from the center to a member.
    pub center_spread: f64,
}

/// A verified-by-measurement dyadic decomposition.
#[derive(Debug, Clone)]
pub struct DyadicSystem {
    pub delta: f64,
    pub k_min: i32,
    /// Cube id ranges per level, coarse → fine.
    pub levels: Vec<Range<CubeId>>,
    pub cubes: Vec<Cube>,
    /// Leaf points in DFS order; every cube is a contiguous run.
    pub leaf_order: Vec<u32>,
    /// Inverse of `leaf_order`: position of each point.
    pub position: Vec<u32>,
    /// Finest-level cube carrying each point.
    pub leaf_of: Vec<CubeId>,
    /// Outer roundness: every cube ⊆ B(center, cover_constant·δ^k).
    pub cover_constant: f64,
    /// Inner roundness: B(center, inner_constant·δ^k) ⊆ cube, for every cube
    /// with nonempty complement.
    pub inner_constant: f64,
    /// Min child/parent mass ratio.
    pub eps_observed: f64,
    pub order: NetOrder,
    /// Construction warnings (δ outside the guaranteed range, non-singleton
    /// leaves under an explicit k range, …).
    pub notes: Vec<String>,
}

impl DyadicSystem {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn k_max(&self) -> i32 {
        self.k_min + self.levels.len() as i32 - 1
    }

    pub fn n_cubes(&self) -> usize {
        self.cubes.len()
    }

    pub fn cube(&self, id: CubeId) -> &Cube {
        &self.cubes[id as usize]
    }

    pub fn members(&self, id: CubeId) -> &[u32] {
        let (lo, hi) = self.cubes[id as usize].span;
        &self.leaf_order[lo as usize..hi as usize]
    }

    /// Dyadic scale of a cube: `δ^{k(Q)}` has exponent `k(Q) = k_min + level`.
    pub fn k_of(&self, id: CubeId) -> i32 {
        self.k_min + self.cubes[id as usize].level as i32
    }

    /// `δ^k` for the cube's level.
    pub fn scale_of(&self, id: CubeId) -> f64 {
        self.delta.powi(self.k_of(id))
    }

    /// Ids of the coarsest-level cubes (normally a single root).
    pub fn roots(&self) -> Range<CubeId> {
        self.levels[0].clone()
    }

    /// The single root cube, if the coarsest level has exactly one.
    pub fn root(&self) -> Option<CubeId> {
        let r = self.roots();
        (r.len() == 1).then_some(r.start)
    }

    pub fn contains(&self, id: CubeId, x: usize) -> bool {
        let (lo, hi) = self.cubes[id as usize].span;
        let p = self.position[x];
        lo <= p && p < hi
    }

    /// Subset test via span containment (exact, O(1)).
    pub fn is_subset(&self, inner: CubeId, outer: CubeId) -> bool {
        let (ilo, ihi) = self.cubes[inner as usize].span;
        let (olo, ohi) = self.cubes[outer as usize].span;
        olo <= ilo && ihi <= ohi
    }

    /// The unique level-k cube containing point `x`.
    pub fn locate(&self, x: usize, k: i32) -> Result<CubeId> {
        if x >= self.position.len() {
            return Err(CoreError::IndexOutOfRange { index: x, n: self.position.len() });
        }
        let li = k - self.k_min;
        if li < 0 || li as usize >= self.levels.len() {
            return Err(CoreError::InvalidValue(format!(
                "level {k} outside the system range {}..={}",
                self.k_min,
                self.k_max()
            )));
        }
        let mut id = self.leaf_of[x];
        while self.cubes[id as usize].level as i32 > li {
            id = self.cubes[id as usize]
                .parent
                .expect("non-root cubes always have parents");
        }
        debug_assert!(self.contains(id, x));
        Ok(id)
    }

    /// The dilated set `λQ = B(x_c(Q), λ·C·δ^{k(Q)})`, with C the system's
    /// cover constant; contains the cube for any λ > 1.
    pub fn dilate(&self, id: CubeId, lambda: f64) -> Result<Ball> {
        if !(lambda > 1.0) {
            return Err(CoreError::InvalidValue(format!("dilation factor {lambda} must be > 1")));
        }
        let cube = self.cube(id);
        Ok(Ball::new(cube.center as usize, lambda * self.cover_constant * self.scale_of(id)))
    }

    /// Explicit-member form for export, import and verification.
    pub fn to_raw(&self) -> RawSystem {
        let levels = self
            .levels
            .iter()
            .enumerate()
            .map(|(li, range)| RawLevel {
                k: self.k_min + li as i32,
                cubes: range
                    .clone()
                    .map(|id| {
                        let cube = self.cube(id);
                        let mut members = self.members(id).to_vec();
                        members.sort_unstable();
                        RawCube {
                            center: cube.center,
                            members,
                            parent: cube.parent.map(|p| p - self.levels[li - 1].start),
                        }
                    })
                    .collect(),
            })
            .collect();
        RawSystem {
            delta: self.delta,
            k_min: self.k_min,
            levels,
            constants: Some(RawConstants {
                cover: self.cover_constant,
                inner: self.inner_constant,
                eps: self.eps_observed,
            }),
            order: Some(self.order),
        }
    }

    /// Rebuilds a system from its explicit form, verifying it first; import
    /// of a corrupted system fails with the verifier's findings.
    pub fn from_raw(raw: &RawSystem, space: &QuasiMetricSpace) -> Result<Self> {
        let report = verify_system(raw, space);
        if !report.pass() {
            return Err(CoreError::Verification(report.summary()));
        }
        // Per-level sorted member lists define leaf membership; the tree is
        // given by the parent links. Rebuild through the same DFS layout the
        // builder uses.
        let n = space.n();
        let level_sizes: Vec<usize> = raw.levels.iter().map(|l| l.cubes.len()).collect();
        let finest = raw.levels.len() - 1;
        let mut leaf_members: Vec<Vec<u32>> = raw.levels[finest]
            .cubes
            .iter()
            .map(|c| {
                let mut m = c.members.clone();
                m.sort_unstable();
                m
            })
            .collect();
        let mut children: Vec<Vec<Vec<u32>>> = Vec::with_capacity(raw.levels.len());
        for (li, level) in raw.levels.iter().enumerate() {
            let mut lists: Vec<Vec<u32>> = vec![Vec::new(); level.cubes.len()];
            if li + 1 < raw.levels.len() {
                for (ci, cube) in raw.levels[li + 1].cubes.iter().enumerate() {
                    lists[cube.parent.expect("verified: non-root has parent") as usize]
                        .push(ci as u32);
                }
            }
            children.push(lists);
        }
        let centers: Vec<Vec<u32>> =
            raw.levels.iter().map(|l| l.cubes.iter().map(|c| c.center).collect()).collect();
        let system = assemble_system(
            space,
            raw.delta,
            raw.k_min,
            &level_sizes,
            &centers,
            &children,
            &mut leaf_members,
            raw.order.unwrap_or(NetOrder::Index),
            Vec::new(),
        );
        let mut system = system;
        if let Some(c) = &raw.constants {
            system.cover_constant = c.cover;
            system.inner_constant = c.inner;
            system.eps_observed = c.eps;
        }
        debug_assert_eq!(system.position.len(), n);
        Ok(system)
    }
}

/// Exportable dyadic system: explicit member lists per cube, parents by
/// index into the previous level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSystem {
    pub delta: f64,
    pub k_min: i32,
    pub levels: Vec<RawLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<RawConstants>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<NetOrder>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawLevel {
    pub k: i32,
    pub cubes: Vec<RawCube>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawCube {
    pub center: u32,
    pub members: Vec<u32>,
    /// Index of the parent within the previous level (None for roots).
    pub parent: Option<u32>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RawConstants {
    pub cover: f64,
    pub inner: f64,
    pub eps: f64,
}

/// Outcome of one structural property check.
#[derive(Debug, Clone)]
pub struct PropertyCheck {
    pub pass: bool,
    pub detail: String,
}

impl PropertyCheck {
    fn ok(detail: impl Into<String>) -> Self {
        Self { pass: true, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self { pass: false, detail: detail.into() }
    }
}

/// Exhaustive verification report for properties p1–p5.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub p1_partition: PropertyCheck,
    pub p2_nesting: PropertyCheck,
    pub p3_tree: PropertyCheck,
    pub p4_child_mass: PropertyCheck,
    pub p5_roundness: PropertyCheck,
    /// Tightest outer constant achieved: max over cubes of spread/δ^k.
    pub cover_observed: f64,
    /// Tightest inner constant achieved: min over cubes (with nonempty
    /// complement) of the nearest-non-member distance over δ^k.
    pub inner_observed: f64,
    /// Min child/parent mass ratio.
    pub eps_observed: f64,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.p1_partition.pass
            && self.p2_nesting.pass
            && self.p3_tree.pass
            && self.p4_child_mass.pass
            && self.p5_roundness.pass
    }

    pub fn summary(&self) -> String {
        let line = |name: &str, c: &PropertyCheck| {
            format!("{name}: {} ({})", if c.pass { "pass" } else { "FAIL" }, c.detail)
        };
        [
            line("p1 partition", &self.p1_partition),
            line("p2 nesting", &self.p2_nesting),
            line("p3 tree", &self.p3_tree),
            line("p4 child mass", &self.p4_child_mass),
            line("p5 roundness", &self.p5_roundness),
            format!(
                "constants: cover {} inner {} eps {}",
                self.cover_observed, self.inner_observed, self.eps_observed
            ),
        ]
        .join("\n")
    }
}

/// Builds a dyadic system. `delta ∈ (0, 1)`; the theory guarantees success
/// for `delta ≤ 1/(8·c0²)`, larger values are allowed (noted in the result)
/// and settled by verification. `k_range` defaults to covering the space
/// from above its diameter down to below the minimum point separation.
pub fn build_dyadic_system(
    space: &QuasiMetricSpace,
    delta: f64,
    k_range: Option<(i32, i32)>,
    order: NetOrder,
) -> Result<DyadicSystem> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CoreError::InvalidValue(format!("delta = {delta} must lie in (0, 1)")));
    }
    let mut notes = Vec::new();
    let guaranteed = 1.0 / (8.0 * space.c0() * space.c0());
    if delta > guaranteed {
        notes.push(format!(
            "delta = {delta} exceeds the guaranteed range (0, {guaranteed}] for c0 = {}; \
             structural properties are settled by post-hoc verification",
            space.c0()
        ));
    }
    let n = space.n();
    let (k_min, k_max) = match k_range {
        Some((lo, hi)) => {
            if lo > hi {
                return Err(CoreError::InvalidValue(format!("empty level range {lo}..={hi}")));
            }
            if space.min_gap().is_finite() && delta.powi(hi) > space.min_gap() {
                notes.push(format!(
                    "finest scale δ^{hi} = {} exceeds the minimum separation {}; \
                     leaves will not all be singletons",
                    delta.powi(hi),
                    space.min_gap()
                ));
            }
            (lo, hi)
        }
        None => auto_k_range(space, delta)?,
    };
    let level_count = (k_max - k_min + 1) as usize;
    if level_count > MAX_LEVELS {
        return Err(CoreError::Construction(format!(
            "{level_count} levels exceed the supported maximum {MAX_LEVELS}; \
             pass an explicit k range"
        )));
    }

    // Scan rank per point under the requested order.
    let rank = scan_rank(n, order);

    // Nets, fine → coarse; nets[li] is sorted ascending and δ^{k_min+li}-
    // separated; nets are nested: nets[li] ⊆ nets[li+1].
    let all: Vec<u32> = (0..n as u32).collect();
    let mut nets: Vec<Vec<u32>> = vec![Vec::new(); level_count];
    nets[level_count - 1] = greedy_net(space, &all, &rank, delta.powi(k_max));
    for li in (0..level_count - 1).rev() {
        let finer = std::mem::take(&mut nets[li + 1]);
        nets[li] = greedy_net(space, &finer, &rank, delta.powi(k_min + li as i32));
        nets[li + 1] = finer;
    }
    if nets[0].is_empty() {
        return Err(CoreError::Construction("net selection produced no points".into()));
    }
    if nets[0].len() > 1 {
        notes.push(format!("coarsest level has {} roots (forest)", nets[0].len()));
    }

    // Tree edges: each net point points to the nearest coarser net point.
    // children[li][local index of cube] = local indices on level li+1.
    let mut children: Vec<Vec<Vec<u32>>> =
        nets.iter().map(|net| vec![Vec::new(); net.len()]).collect();
    for li in 1..level_count {
        for (ci, &z) in nets[li].iter().enumerate() {
            let parent = nearest_in(space, z, &nets[li - 1]);
            children[li - 1][parent].push(ci as u32);
        }
    }

    // Leaf membership: every point goes to its nearest finest net point.
    let mut leaf_members: Vec<Vec<u32>> = vec![Vec::new(); nets[level_count - 1].len()];
    for x in 0..n as u32 {
        let owner = nearest_in(space, x, &nets[level_count - 1]);
        leaf_members[owner].push(x);
    }

    let level_sizes: Vec<usize> = nets.iter().map(|net| net.len()).collect();
    Ok(assemble_system(
        space,
        delta,
        k_min,
        &level_sizes,
        &nets,
        &children,
        &mut leaf_members,
        order,
        notes,
    ))
}

const MAX_LEVELS: usize = 80;

/// Coarsest scale strictly above the diameter (single root), finest scale at
/// or below the minimum separation (singleton leaves).
fn auto_k_range(space: &QuasiMetricSpace, delta: f64) -> Result<(i32, i32)> {
    if space.n() == 1 {
        return Ok((0, 0));
    }
    let diam = space.diameter();
    let gap = space.min_gap();
    let mut k_min = (diam.ln() / delta.ln()).floor() as i32;
    while delta.powi(k_min) <= diam {
        k_min -= 1;
    }
    while delta.powi(k_min + 1) > diam {
        k_min += 1;
    }
    let mut k_max = (gap.ln() / delta.ln()).ceil() as i32;
    while delta.powi(k_max) > gap {
        k_max += 1;
    }
    while k_max > k_min && delta.powi(k_max - 1) <= gap {
        k_max -= 1;
    }
    let k_max = k_max.max(k_min);
    if (k_max - k_min + 1) as usize > MAX_LEVELS {
        return Err(CoreError::Construction(format!(
            "automatic level range {k_min}..={k_max} exceeds {MAX_LEVELS} levels \
             (diameter/min-gap ratio too large for delta = {delta})"
        )));
    }
    Ok((k_min, k_max))
}

fn scan_rank(n: usize, order: NetOrder) -> Vec<u32> {
    let mut rank = vec![0u32; n];
    match order {
        NetOrder::Index => {
            for (i, r) in rank.iter_mut().enumerate() {
                *r = i as u32;
            }
        }
        NetOrder::Rotated { start } => {
            let s = if n == 0 { 0 } else { start % n };
            for i in 0..n {
                rank[(s + i) % n] = i as u32;
            }
        }
        NetOrder::Seeded { seed } => {
            let mut perm: Vec<u32> = (0..n as u32).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            for (i, &p) in perm.iter().enumerate() {
                rank[p as usize] = i as u32;
            }
        }
    }
    rank
}

/// Greedy maximal `radius`-separated subset, scanning candidates in rank
/// order. Maximality: every rejected candidate is within `radius` of a
/// selected one. Result sorted ascending by index.
fn greedy_net(space: &QuasiMetricSpace, candidates: &[u32], rank: &[u32], radius: f64) -> Vec<u32> {
    let mut order = candidates.to_vec();
    order.sort_by_key(|&p| rank[p as usize]);
    let mut chosen: Vec<u32> = Vec::new();
    'next: for &p in &order {
        for &q in &chosen {
            if space.rho(p as usize, q as usize) < radius {
                continue 'next;
            }
        }
        chosen.push(p);
    }
    chosen.sort_unstable();
    chosen
}

/// Index of the nearest point of `net` (ascending point indices) to `p`;
/// ties resolve to the smaller point index because the scan is ascending.
fn nearest_in(space: &QuasiMetricSpace, p: u32, net: &[u32]) -> usize {
    let mut best = 0usize;
    let mut best_d = space.rho(p as usize, net[0] as usize);
    for (i, &q) in net.iter().enumerate().skip(1) {
        let d = space.rho(p as usize, q as usize);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Lays out cubes from per-level tree structure: DFS from the roots
/// (children visited in stored order, which is ascending by center),
/// assigning leaf order, spans, masses, diameters and roundness constants.
#[allow(clippy::too_many_arguments)]
fn assemble_system(
    space: &QuasiMetricSpace,
    delta: f64,
    k_min: i32,
    level_sizes: &[usize],
    centers: &[Vec<u32>],
    children: &[Vec<Vec<u32>>],
    leaf_members: &mut [Vec<u32>],
    order: NetOrder,
    notes: Vec<String>,
) -> DyadicSystem {
    let n = space.n();
    let level_count = level_sizes.len();
    for members in leaf_members.iter_mut() {
        members.sort_unstable();
    }

    // Global cube ids: per level contiguous, within a level in DFS discovery
    // order. First pass: DFS to discover per-level orderings and spans.
    let mut discovery: Vec<Vec<u32>> = vec![Vec::new(); level_count]; // local indices in DFS order
    let mut span_of: Vec<Vec<(u32, u32)>> =
        level_sizes.iter().map(|&s| vec![(0u32, 0u32); s]).collect();
    let mut leaf_order: Vec<u32> = Vec::with_capacity(n);
    // Stack holds (level, local index, entered) frames.
    let mut stack: Vec<(usize, u32, bool)> = Vec::new();
    for root in (0..level_sizes[0] as u32).rev() {
        stack.push((0, root, false));
    }
    while let Some((li, ci, entered)) = stack.pop() {
        if entered {
            span_of[li][ci as usize].1 = leaf_order.len() as u32;
            continue;
        }
        discovery[li].push(ci);
        span_of[li][ci as usize].0 = leaf_order.len() as u32;
        stack.push((li, ci, true));
        if li + 1 == level_count {
            leaf_order.extend_from_slice(&leaf_members[ci as usize]);
            continue;
        }
        for &child in children[li][ci as usize].iter().rev() {
            stack.push((li + 1, child, false));
        }
    }
    debug_assert_eq!(leaf_order.len(), n);

    let mut position = vec![0u32; n];
    for (pos, &p) in leaf_order.iter().enumerate() {
        position[p as usize] = pos as u32;
    }

    // Final ids: level offsets + discovery order.
    let mut level_offset = vec![0u32; level_count + 1];
    for li in 0..level_count {
        level_offset[li + 1] = level_offset[li] + discovery[li].len() as u32;
    }
    // local index -> final id
    let id_of: Vec<Vec<u32>> = (0..level_count)
        .map(|li| {
            let mut ids = vec![0u32; level_sizes[li]];
            for (d, &ci) in discovery[li].iter().enumerate() {
                ids[ci as usize] = level_offset[li] + d as u32;
            }
            ids
        })
        .collect();

    let total_cubes = level_offset[level_count] as usize;
    let mut cubes: Vec<Option<Cube>> = vec![None; total_cubes];
    let mut cover_observed: f64 = 0.0;
    let mut inner_observed = f64::INFINITY;
    let mut eps_observed = f64::INFINITY;
    for li in 0..level_count {
        let scale = delta.powi(k_min + li as i32);
        for &ci in &discovery[li] {
            let id = id_of[li][ci as usize];
            let (lo, hi) = span_of[li][ci as usize];
            let members = &leaf_order[lo as usize..hi as usize];
            let center = centers[li][ci as usize];
            let mut mass = CompensatedSum::new();
            let mut spread: f64 = 0.0;
            for &p in members {
                mass.add(space.mass_of(p as usize));
                spread = spread.max(space.rho(center as usize, p as usize));
            }
            let mut diameter: f64 = 0.0;
            for (a, &p) in members.iter().enumerate() {
                for &q in &members[a + 1..] {
                    diameter = diameter.max(space.rho(p as usize, q as usize));
                }
            }
            cover_observed = cover_observed.max(spread / scale);
            if ((hi - lo) as usize) < n {
                // Nearest non-member bounds the inner roundness constant.
                let mut nearest = f64::INFINITY;
                for y in 0..n {
                    let pos = position[y];
                    if pos < lo || pos >= hi {
                        nearest = nearest.min(space.rho(center as usize, y));
                    }
                }
                inner_observed = inner_observed.min(nearest / scale);
            }
            let child_locals = if li + 1 < level_count {
                &children[li][ci as usize][..]
            } else {
                &[]
            };
            let child_range = if child_locals.is_empty() {
                0..0
            } else {
                // Children are contiguous in the next level's DFS order.
                let ids: Vec<u32> =
                    child_locals.iter().map(|&c| id_of[li + 1][c as usize]).collect();
                let lo_id = *ids.iter().min().unwrap();
                let hi_id = *ids.iter().max().unwrap() + 1;
                debug_assert_eq!(ids.len() as u32, hi_id - lo_id);
                lo_id..hi_id
            };
            cubes[id as usize] = Some(Cube {
                level: li as u32,
                center,
                span: (lo, hi),
                parent: None, // filled below
                children: child_range,
                mass: mass.value(),
                diameter,
                center_spread: spread,
            });
        }
    }
    let mut cubes: Vec<Cube> = cubes.into_iter().map(|c| c.expect("all cubes assembled")).collect();
    // Parent links + p4 ratio from the children ranges.
    for id in 0..total_cubes as u32 {
        let (children, mass) = {
            let c = &cubes[id as usize];
            (c.children.clone(), c.mass)
        };
        for child in children {
            cubes[child as usize].parent = Some(id);
            eps_observed = eps_observed.min(cubes[child as usize].mass / mass);
        }
    }
    let leaf_of: Vec<CubeId> = (0..n)
        .map(|x| {
            let pos = position[x];
            let fin = level_count - 1;
            let local = span_of[fin]
                .iter()
                .position(|&(lo, hi)| lo <= pos && pos < hi)
                .expect("leaf spans cover all positions");
            id_of[fin][local]
        })
        .collect();

    let levels: Vec<Range<CubeId>> =
        (0..level_count).map(|li| level_offset[li]..level_offset[li + 1]).collect();
    DyadicSystem {
        delta,
        k_min,
        levels,
        cubes,
        leaf_order,
        position,
        leaf_of,
        cover_constant: if cover_observed > 0.0 { cover_observed } else { 1.0 },
        inner_constant: if inner_observed.is_finite() { inner_observed } else { 1.0 },
        eps_observed: if eps_observed.is_finite() { eps_observed } else { 1.0 },
        order,
        notes,
    }
}

/// Exhaustively checks p1–p5 on the explicit representation.
///
/// p2 is checked as: every cube's members lie inside a single cube of every
/// coarser level. Given p1 (each level partitions the space), this is
/// equivalent to the pairwise "disjoint or nested" statement: two same-level
/// cubes are disjoint by p1, and for levels l < l' the finer cube either
/// sits inside the unique l-cube owning its first member or meets none.
pub fn verify_system(raw: &RawSystem, space: &QuasiMetricSpace) -> VerifyReport {
    let n = space.n();
    let level_count = raw.levels.len();

    // --- p1: each level partitions the point set exactly.
    let mut p1 = PropertyCheck::ok(format!("{level_count} levels partition all {n} points"));
    let mut owner: Vec<Vec<u32>> = Vec::with_capacity(level_count); // point -> cube index per level
    for (li, level) in raw.levels.iter().enumerate() {
        let mut seen = vec![u32::MAX; n];
        let mut count = 0usize;
        for (ci, cube) in level.cubes.iter().enumerate() {
            if cube.members.is_empty() && p1.pass {
                p1 = PropertyCheck::fail(format!("level {} cube {ci} is empty", level.k));
            }
            for &p in &cube.members {
                if p as usize >= n {
                    p1 = PropertyCheck::fail(format!(
                        "level {} cube {ci} refers to point {p} outside the space",
                        level.k
                    ));
                    continue;
                }
                if seen[p as usize] != u32::MAX {
                    if p1.pass {
                        p1 = PropertyCheck::fail(format!(
                            "level {} point {p} appears in cubes {} and {ci}",
                            level.k, seen[p as usize]
                        ));
                    }
                } else {
                    seen[p as usize] = ci as u32;
                    count += 1;
                }
            }
        }
        if count != n && p1.pass {
            p1 = PropertyCheck::fail(format!(
                "level {} covers {count} of {n} points",
                level.k
            ));
        }
        owner.push(seen);
        let _ = li;
    }

    // --- p2: disjoint or nested (via per-level owners; see doc comment).
    let mut p2 = PropertyCheck::ok("all cube pairs disjoint or nested");
    if !p1.pass {
        p2 = PropertyCheck::fail("skipped: p1 failed, owners are ill-defined");
    } else {
        'p2: for li in 0..level_count {
            for lj in (li + 1)..level_count {
                for (cj, cube) in raw.levels[lj].cubes.iter().enumerate() {
                    let own = owner[li][cube.members[0] as usize];
                    for &p in &cube.members[1..] {
                        if owner[li][p as usize] != own {
                            p2 = PropertyCheck::fail(format!(
                                "level {} cube {cj} straddles cubes {} and {} of level {}",
                                raw.levels[lj].k,
                                own,
                                owner[li][p as usize],
                                raw.levels[li].k
                            ));
                            break 'p2;
                        }
                    }
                }
            }
        }
    }

    // --- p3: parents exist and children partition them.
    let mut p3 =
        PropertyCheck::ok("every non-root cube has one parent; children partition parents");
    'p3: for li in 0..level_count {
        for (ci, cube) in raw.levels[li].cubes.iter().enumerate() {
            if li == 0 {
                if cube.parent.is_some() {
                    p3 = PropertyCheck::fail(format!("root cube {ci} has a parent link"));
                    break 'p3;
                }
                continue;
            }
            let Some(pi) = cube.parent else {
                p3 = PropertyCheck::fail(format!(
                    "level {} cube {ci} has no parent",
                    raw.levels[li].k
                ));
                break 'p3;
            };
            let Some(parent) = raw.levels[li - 1].cubes.get(pi as usize) else {
                p3 = PropertyCheck::fail(format!(
                    "level {} cube {ci} points to missing parent {pi}",
                    raw.levels[li].k
                ));
                break 'p3;
            };
            // Subset test against the parent's member set.
            let mut parent_sorted = parent.members.clone();
            parent_sorted.sort_unstable();
            for &p in &cube.members {
                if parent_sorted.binary_search(&p).is_err() {
                    p3 = PropertyCheck::fail(format!(
                        "level {} cube {ci}: point {p} is outside its parent {pi}",
                        raw.levels[li].k
                    ));
                    break 'p3;
                }
            }
        }
        // Child counts: every cube above the finest level needs ≥ 1 child,
        // and the children's total size must match the parent's.
        if li + 1 < level_count {
            let mut child_sizes = vec![0usize; raw.levels[li].cubes.len()];
            for cube in &raw.levels[li + 1].cubes {
                if let Some(pi) = cube.parent {
                    if let Some(s) = child_sizes.get_mut(pi as usize) {
                        *s += cube.members.len();
                    }
                }
            }
            for (ci, cube) in raw.levels[li].cubes.iter().enumerate() {
                if child_sizes[ci] != cube.members.len() {
                    p3 = PropertyCheck::fail(format!(
                        "level {} cube {ci}: children carry {} of its {} points",
                        raw.levels[li].k,
                        child_sizes[ci],
                        cube.members.len()
                    ));
                    break 'p3;
                }
            }
        }
    }

    // --- p4: child/parent mass ratios.
    let mut eps_observed = f64::INFINITY;
    for li in 1..level_count {
        for cube in &raw.levels[li].cubes {
            let Some(pi) = cube.parent else { continue };
            let Some(parent) = raw.levels[li - 1].cubes.get(pi as usize) else { continue };
            let cm = space.measure(&cube.members);
            let pm = space.measure(&parent.members);
            if pm > 0.0 {
                eps_observed = eps_observed.min(cm / pm);
            }
        }
    }
    if !eps_observed.is_finite() {
        eps_observed = 1.0; // single-level system: no child pairs
    }
    let p4 = if eps_observed > 0.0 {
        PropertyCheck::ok(format!("min child/parent mass ratio = {eps_observed}"))
    } else {
        PropertyCheck::fail(format!("vanishing child/parent mass ratio = {eps_observed}"))
    };

    // --- p5: inner and outer roundness against the recorded constants.
    let tol = 1.0 + 1e-12;
    let mut cover_observed: f64 = 0.0;
    let mut inner_observed = f64::INFINITY;
    let mut p5_fail: Option<String> = None;
    for level in &raw.levels {
        let scale = raw.delta.powi(level.k);
        for (ci, cube) in level.cubes.iter().enumerate() {
            let c = cube.center as usize;
            if c >= n || !cube.members.contains(&cube.center) {
                p5_fail.get_or_insert(format!(
                    "level {} cube {ci}: center {} is not a member",
                    level.k, cube.center
                ));
                continue;
            }
            let mut in_cube = vec![false; n];
            let mut spread: f64 = 0.0;
            for &p in &cube.members {
                in_cube[p as usize] = true;
                spread = spread.max(space.rho(c, p as usize));
            }
            cover_observed = cover_observed.max(spread / scale);
            let mut nearest_out = f64::INFINITY;
            for (y, &inside) in in_cube.iter().enumerate() {
                if !inside {
                    nearest_out = nearest_out.min(space.rho(c, y));
                }
            }
            if nearest_out.is_finite() {
                inner_observed = inner_observed.min(nearest_out / scale);
            }
            if let Some(consts) = &raw.constants {
                if spread > consts.cover * scale * tol {
                    p5_fail.get_or_insert(format!(
                        "level {} cube {ci}: member at distance {spread} > C·δ^k = {}",
                        level.k,
                        consts.cover * scale
                    ));
                }
                if nearest_out < consts.inner * scale / tol {
                    p5_fail.get_or_insert(format!(
                        "level {} cube {ci}: non-member at distance {nearest_out} < a·δ^k = {}",
                        level.k,
                        consts.inner * scale
                    ));
                }
            }
        }
    }
    if !inner_observed.is_finite() {
        inner_observed = 1.0; // every cube is the whole space
    }
    let p5 = match p5_fail {
        Some(detail) => PropertyCheck::fail(detail),
        None if inner_observed <= 0.0 => {
            PropertyCheck::fail("inner roundness constant is zero")
        }
        None => PropertyCheck::ok(format!(
            "cover ≤ {cover_observed}, inner ≥ {inner_observed}"
        )),
    };

    VerifyReport {
        p1_partition: p1,
        p2_nesting: p2,
        p3_tree: p3,
        p4_child_mass: p4,
        p5_roundness: p5,
        cover_observed,
        inner_observed,
        eps_observed,
    }
}

/// Convenience: verify a built system through its explicit form.
pub fn verify_built(system: &DyadicSystem, space: &QuasiMetricSpace) -> VerifyReport {
    verify_system(&system.to_raw(), space)
}
