//! Finite quasi-metric measure spaces.
//!
//! A space is a finite point set carrying a dense symmetric distance table,
//! strictly positive per-point masses and a declared quasi-triangle constant
//! `c0`. Balls are open throughout: `B(x, r) = {y : rho(x, y) < r}`. All
//! downstream structure (dyadic systems, medians, operators) reads distances
//! and masses exclusively through this type.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{CoreError, Result};
use crate::util::{geometric_grid, CompensatedSum};

/// An open ball `B(center, radius)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: usize, radius: f64) -> Self {
        Self { center, radius }
    }
}

/// Distance law applied to Euclidean point clouds.
///
/// All three are powers of the Euclidean distance: `Euclidean` is exponent 1,
/// `Snowflake(s)` is exponent `s ∈ (0, 1]` (a genuine metric), and `Power(p)`
/// is exponent `p ≥ 1` (a quasi-metric with constant `2^{p-1}`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Euclidean,
    Snowflake(f64),
    Power(f64),
}

impl Metric {
    /// Parses a descriptor string: `euclidean`, `snowflake:S` or `power:P`.
    pub fn parse(desc: &str) -> Result<Self> {
        let desc = desc.trim();
        if desc.eq_ignore_ascii_case("euclidean") {
            return Ok(Metric::Euclidean);
        }
        let bad = |m: &str| CoreError::InvalidValue(format!("metric descriptor {desc:?}: {m}"));
        if let Some(s) = desc.strip_prefix("snowflake:") {
            let s: f64 = s.parse().map_err(|_| bad("exponent must be a number"))?;
            if !(s > 0.0 && s <= 1.0) {
                return Err(bad("snowflake exponent must lie in (0, 1]"));
            }
            return Ok(Metric::Snowflake(s));
        }
        if let Some(p) = desc.strip_prefix("power:") {
            let p: f64 = p.parse().map_err(|_| bad("exponent must be a number"))?;
            if !(p >= 1.0 && p.is_finite()) {
                return Err(bad("power exponent must be finite and ≥ 1"));
            }
            return Ok(Metric::Power(p));
        }
        Err(bad("expected euclidean, snowflake:S or power:P"))
    }

    pub fn descriptor(&self) -> String {
        match self {
            Metric::Euclidean => "euclidean".into(),
            Metric::Snowflake(s) => format!("snowflake:{s}"),
            Metric::Power(p) => format!("power:{p}"),
        }
    }

    pub fn exponent(&self) -> f64 {
        match *self {
            Metric::Euclidean => 1.0,
            Metric::Snowflake(s) => s,
            Metric::Power(p) => p,
        }
    }

    /// Smallest quasi-triangle constant valid for this law on Euclidean
    /// clouds: 1 for exponents ≤ 1, else `2^{e-1}` (by convexity of `t^e`).
    pub fn quasi_constant(&self) -> f64 {
        let e = self.exponent();
        if e <= 1.0 {
            1.0
        } else {
            2f64.powf(e - 1.0)
        }
    }

    fn apply(&self, euclidean: f64) -> f64 {
        match *self {
            Metric::Euclidean => euclidean,
            Metric::Snowflake(s) if s == 0.5 => euclidean.sqrt(),
            Metric::Snowflake(s) => euclidean.powf(s),
            Metric::Power(p) if p == 2.0 => euclidean * euclidean,
            Metric::Power(p) => euclidean.powf(p),
        }
    }
}

/// Mass convention for generated grids: each point carries 1, or 1/n so the
/// space has total mass 1 (the Riemann-sum normalization for kernels).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassMode {
    Unit,
    Normalized,
}

/// Per-row distance order plus mass prefix sums, built lazily; backs ball
/// queries, maximal functions and A₂ scans.
struct SortedRows {
    /// `order[i*n..(i+1)*n]`: point indices sorted by distance from `i`
    /// (ascending, ties by index; entry 0 is `i` itself).
    order: Vec<u32>,
    /// `prefix[i*n + t]`: total mass of the first `t+1` entries of row `i`.
    prefix: Vec<f64>,
}

/// A finite quasi-metric measure space with a dense distance table.
pub struct QuasiMetricSpace {
    n: usize,
    rho: Vec<f64>,
    mass: Vec<f64>,
    c0: f64,
    coords: Option<(usize, Vec<f64>)>,
    total_mass: f64,
    diameter: f64,
    min_gap: f64,
    sorted: OnceLock<SortedRows>,
}

impl fmt::Debug for QuasiMetricSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuasiMetricSpace")
            .field("n", &self.n)
            .field("c0", &self.c0)
            .field("total_mass", &self.total_mass)
            .field("diameter", &self.diameter)
            .field("min_gap", &self.min_gap)
            .finish_non_exhaustive()
    }
}

/// One defect found by [`QuasiMetricSpace::validate_quasimetric`].
#[derive(Debug, Clone, PartialEq)]
pub enum MetricViolation {
    Asymmetry { i: usize, j: usize, forward: f64, backward: f64 },
    NonzeroDiagonal { i: usize, value: f64 },
    ZeroOffDiagonal { i: usize, j: usize },
    QuasiTriangle { x: usize, y: usize, z: usize, ratio: f64 },
}

impl fmt::Display for MetricViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricViolation::Asymmetry { i, j, forward, backward } => {
                write!(f, "rho({i},{j}) = {forward} but rho({j},{i}) = {backward}")
            }
            MetricViolation::NonzeroDiagonal { i, value } => {
                write!(f, "rho({i},{i}) = {value} (must be 0)")
            }
            MetricViolation::ZeroOffDiagonal { i, j } => {
                write!(f, "rho({i},{j}) = 0 for distinct points")
            }
            MetricViolation::QuasiTriangle { x, y, z, ratio } => {
                write!(f, "triple ({x},{y},{z}) needs c0 ≥ {ratio}")
            }
        }
    }
}

/// Result of the exhaustive quasi-metric scan (O(n³) in the point count).
#[derive(Debug, Clone)]
pub struct QuasiMetricReport {
    /// Max over all triples of `rho(x,z) / (rho(x,y) + rho(y,z))`.
    pub c0_observed: f64,
    /// Triple achieving `c0_observed`.
    pub worst_triple: Option<(usize, usize, usize)>,
    /// Structural defects plus quasi-triangle excesses over the declared c0.
    pub violations: Vec<MetricViolation>,
    /// Total number of violations found (the list above is capped).
    pub violation_count: usize,
}

impl QuasiMetricReport {
    pub fn pass(&self) -> bool {
        self.violation_count == 0
    }
}

const VIOLATION_CAP: usize = 64;

impl QuasiMetricSpace {
    /// Builds a space from a dense row-major distance table.
    ///
    /// Structural requirements (zero diagonal, positive finite off-diagonal
    /// entries, positive masses) are enforced here; symmetry and the
    /// quasi-triangle inequality are *not* — they are diagnosed by
    /// [`validate_quasimetric`](Self::validate_quasimetric), so that
    /// deliberately corrupted tables can be constructed and reported on.
    pub fn from_table(rho: Vec<f64>, mass: Vec<f64>, c0: f64) -> Result<Self> {
        let n = mass.len();
        if n == 0 {
            return Err(CoreError::EmptySet("space must have at least one point".into()));
        }
        if rho.len() != n * n {
            return Err(CoreError::InvalidValue(format!(
                "distance table has {} entries, expected {}",
                rho.len(),
                n * n
            )));
        }
        if !(c0 >= 1.0 && c0.is_finite()) {
            return Err(CoreError::InvalidValue(format!("c0 = {c0} must be finite and ≥ 1")));
        }
        for (i, &m) in mass.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(CoreError::InvalidValue(format!("mass[{i}] = {m} must be positive and finite")));
            }
        }
        for i in 0..n {
            for j in 0..n {
                let d = rho[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(CoreError::InvalidValue(format!("rho({i},{j}) = {d} must be finite and ≥ 0")));
                }
                if i == j && d != 0.0 {
                    return Err(CoreError::InvalidValue(format!("rho({i},{i}) = {d} must be 0")));
                }
                if i != j && d == 0.0 {
                    return Err(CoreError::InvalidValue(format!(
                        "rho({i},{j}) = 0: duplicate points are not supported"
                    )));
                }
            }
        }
        let mut diameter: f64 = 0.0;
        let mut min_gap = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = rho[i * n + j];
                diameter = diameter.max(d);
                min_gap = min_gap.min(d);
            }
        }
        let total_mass = crate::util::compensated_sum(mass.iter().copied());
        Ok(Self {
            n,
            rho,
            mass,
            c0,
            coords: None,
            total_mass,
            diameter,
            min_gap,
            sorted: OnceLock::new(),
        })
    }

    /// Builds a space from a Euclidean point cloud under the given distance law.
    ///
    /// `coords` is row-major with `dim` columns. The declared `c0` is the
    /// metric's exact quasi-triangle constant.
    pub fn from_points(coords: &[f64], dim: usize, mass: Vec<f64>, metric: Metric) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(CoreError::InvalidValue(format!(
                "coordinate array of length {} is not divisible into rows of {dim}",
                coords.len()
            )));
        }
        let n = coords.len() / dim;
        if n != mass.len() {
            return Err(CoreError::InvalidValue(format!(
                "{n} coordinate rows but {} masses",
                mass.len()
            )));
        }
        for (i, &c) in coords.iter().enumerate() {
            if !c.is_finite() {
                return Err(CoreError::InvalidValue(format!("coordinate {i} is not finite")));
            }
        }
        let mut rho = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let base = if dim == 1 {
                    (coords[i] - coords[j]).abs()
                } else {
                    let mut d2 = 0.0;
                    for t in 0..dim {
                        let d = coords[i * dim + t] - coords[j * dim + t];
                        d2 += d * d;
                    }
                    d2.sqrt()
                };
                let d = metric.apply(base);
                rho[i * n + j] = d;
                rho[j * n + i] = d;
            }
        }
        let mut space = Self::from_table(rho, mass, metric.quasi_constant())?;
        space.coords = Some((dim, coords.to_vec()));
        Ok(space)
    }

    /// Uniform midpoint grid `x_i = (i + 1/2)/n` on `[0, 1]`.
    pub fn unit_grid_1d(n: usize, metric: Metric, mode: MassMode) -> Result<Self> {
        let coords: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        Self::from_points(&coords, 1, grid_masses(n, mode), metric)
    }

    /// Uniform `side × side` midpoint grid on `[0, 1]²`, row-major.
    pub fn unit_grid_2d(side: usize, metric: Metric, mode: MassMode) -> Result<Self> {
        let n = side * side;
        let mut coords = Vec::with_capacity(2 * n);
        for i in 0..side {
            for j in 0..side {
                coords.push((i as f64 + 0.5) / side as f64);
                coords.push((j as f64 + 0.5) / side as f64);
            }
        }
        Self::from_points(&coords, 2, grid_masses(n, mode), metric)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Distance table lookup (no bounds checks beyond the slice's own).
    #[inline]
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.n + j]
    }

    #[inline]
    pub fn mass_of(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Smallest distance between distinct points (∞ for a single point).
    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    /// Coordinates of point `i` if the space was built from a point cloud.
    pub fn coords_of(&self, i: usize) -> Option<&[f64]> {
        self.coords.as_ref().map(|(dim, data)| &data[i * dim..(i + 1) * dim])
    }

    pub fn dim(&self) -> Option<usize> {
        self.coords.as_ref().map(|(dim, _)| *dim)
    }

    fn sorted_rows(&self) -> &SortedRows {
        self.sorted.get_or_init(|| {
            let n = self.n;
            let mut order = Vec::with_capacity(n * n);
            let mut prefix = Vec::with_capacity(n * n);
            let mut row: Vec<u32> = Vec::with_capacity(n);
            for i in 0..n {
                row.clear();
                row.extend(0..n as u32);
                let d = &self.rho[i * n..(i + 1) * n];
                // Ties broken by index: sort_by on (distance, index) pairs.
                row.sort_by(|&a, &b| {
                    d[a as usize]
                        .partial_cmp(&d[b as usize])
                        .unwrap()
                        .then(a.cmp(&b))
                });
                let mut acc = CompensatedSum::new();
                for &p in &row {
                    acc.add(self.mass[p as usize]);
                    prefix.push(acc.value());
                }
                order.extend_from_slice(&row);
            }
            SortedRows { order, prefix }
        })
    }

    /// Point indices of row `i` sorted by distance from `i` (ascending, ties
    /// by index; the first entry is `i` itself).
    pub fn sorted_row(&self, i: usize) -> &[u32] {
        let n = self.n;
        &self.sorted_rows().order[i * n..(i + 1) * n]
    }

    /// Mass of the first `t` entries of `sorted_row(i)`.
    pub fn sorted_row_prefix_mass(&self, i: usize, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.sorted_rows().prefix[i * self.n + (t - 1)]
    }

    fn check_ball(&self, ball: Ball) -> Result<()> {
        if ball.center >= self.n {
            return Err(CoreError::IndexOutOfRange { index: ball.center, n: self.n });
        }
        if !(ball.radius > 0.0) {
            return Err(CoreError::InvalidValue(format!("ball radius {} must be > 0", ball.radius)));
        }
        Ok(())
    }

    /// Number of points strictly inside the ball (prefix length of the
    /// sorted row).
    fn ball_cut(&self, ball: Ball) -> usize {
        let row = self.sorted_row(ball.center);
        let d = &self.rho[ball.center * self.n..(ball.center + 1) * self.n];
        row.partition_point(|&p| d[p as usize] < ball.radius)
    }

    /// Members of the open ball, sorted by distance from the center.
    /// Always contains the center.
    pub fn ball_members(&self, ball: Ball) -> Result<&[u32]> {
        self.check_ball(ball)?;
        let cut = self.ball_cut(ball);
        Ok(&self.sorted_row(ball.center)[..cut])
    }

    /// Mass of the open ball; positive, since the center always belongs.
    pub fn ball_measure(&self, ball: Ball) -> Result<f64> {
        self.check_ball(ball)?;
        let cut = self.ball_cut(ball);
        Ok(self.sorted_row_prefix_mass(ball.center, cut))
    }

    /// Total mass of a point set (summed in the given order, compensated).
    pub fn measure(&self, points: &[u32]) -> f64 {
        let mut acc = CompensatedSum::new();
        for &p in points {
            acc.add(self.mass[p as usize]);
        }
        acc.value()
    }

    /// Exhaustive structural scan: symmetry, diagonal, zero distances and the
    /// quasi-triangle constant over all ordered triples. O(n³); intended for
    /// desk-scale spaces and import-time validation.
    pub fn validate_quasimetric(&self) -> QuasiMetricReport {
        let n = self.n;
        let mut violations = Vec::new();
        let mut count = 0usize;
        let push = |violations: &mut Vec<MetricViolation>, count: &mut usize, v: MetricViolation| {
            *count += 1;
            if violations.len() < VIOLATION_CAP {
                violations.push(v);
            }
        };
        for i in 0..n {
            let d = self.rho[i * n + i];
            if d != 0.0 {
                push(&mut violations, &mut count, MetricViolation::NonzeroDiagonal { i, value: d });
            }
            for j in (i + 1)..n {
                let f = self.rho[i * n + j];
                let b = self.rho[j * n + i];
                if f != b {
                    push(&mut violations, &mut count, MetricViolation::Asymmetry { i, j, forward: f, backward: b });
                }
                if f == 0.0 || b == 0.0 {
                    push(&mut violations, &mut count, MetricViolation::ZeroOffDiagonal { i, j });
                }
            }
        }
        let mut c0_observed: f64 = 0.0;
        let mut worst = None;
        for x in 0..n {
            for z in 0..n {
                if x == z {
                    continue;
                }
                let dxz = self.rho[x * n + z];
                for y in 0..n {
                    if y == x || y == z {
                        continue;
                    }
                    let den = self.rho[x * n + y] + self.rho[y * n + z];
                    if den == 0.0 {
                        continue;
                    }
                    let ratio = dxz / den;
                    if ratio > c0_observed {
                        c0_observed = ratio;
                        worst = Some((x, y, z));
                    }
                }
            }
        }
        if let Some((x, y, z)) = worst {
            if c0_observed > self.c0 * (1.0 + 1e-12) {
                push(&mut violations, &mut count, MetricViolation::QuasiTriangle { x, y, z, ratio: c0_observed });
            }
        }
        QuasiMetricReport { c0_observed, worst_triple: worst, violations, violation_count: count }
    }

    /// Max over all centers and grid radii of `|B(x,2r)| / |B(x,r)|`.
    pub fn doubling_constant(&self, radius_grid: &[f64]) -> Result<f64> {
        if radius_grid.is_empty() {
            return Err(CoreError::EmptySet("radius grid".into()));
        }
        for &r in radius_grid {
            if !(r > 0.0 && r.is_finite()) {
                return Err(CoreError::InvalidValue(format!("radius {r} must be positive and finite")));
            }
        }
        let mut worst: f64 = 1.0;
        for x in 0..self.n {
            for &r in radius_grid {
                let small = self.ball_measure(Ball::new(x, r))?;
                let big = self.ball_measure(Ball::new(x, 2.0 * r))?;
                worst = worst.max(big / small);
            }
        }
        Ok(worst)
    }

    /// Default geometric radius battery from just under the minimum gap to
    /// just past the diameter (a single radius for one-point spaces). Shared
    /// by doubling scans, adjacency coverage batteries and maximal functions.
    pub fn default_radius_grid(&self) -> Vec<f64> {
        if !self.min_gap.is_finite() || self.diameter <= 0.0 {
            return vec![1.0];
        }
        geometric_grid(0.75 * self.min_gap, 1.02 * self.diameter, 2f64.powf(0.25))
    }

    /// Reads a point cloud from CSV: one row per point, `dim` coordinate
    /// columns; a column named `mass` (when a header is present) supplies
    /// masses, which default to 1. A header row is detected by its first
    /// field failing to parse as a number.
    pub fn from_points_csv(path: &Path, metric: Metric) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut coords: Vec<f64> = Vec::new();
        let mut masses: Vec<f64> = Vec::new();
        let mut mass_col: Option<usize> = None;
        let mut dim: Option<usize> = None;
        let mut first = true;
        for record in reader.records() {
            let record = record?;
            if record.is_empty() || (record.len() == 1 && record[0].is_empty()) {
                continue;
            }
            if first {
                first = false;
                if record[0].parse::<f64>().is_err() {
                    // Header row: locate an optional mass column.
                    mass_col = record.iter().position(|h| h.eq_ignore_ascii_case("mass"));
                    dim = Some(record.len() - usize::from(mass_col.is_some()));
                    continue;
                }
            }
            let d = *dim.get_or_insert(record.len());
            let expected = d + usize::from(mass_col.is_some());
            if record.len() != expected {
                return Err(CoreError::InvalidValue(format!(
                    "csv row {} has {} fields, expected {expected}",
                    coords.len() / d + 1,
                    record.len()
                )));
            }
            let mut mass = 1.0;
            let mut pushed = 0;
            for (idx, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    CoreError::InvalidValue(format!("csv field {field:?} is not a number"))
                })?;
                if Some(idx) == mass_col {
                    mass = v;
                } else {
                    coords.push(v);
                    pushed += 1;
                }
            }
            debug_assert_eq!(pushed, d);
            masses.push(mass);
        }
        let d = dim.ok_or_else(|| CoreError::EmptySet("csv contains no data rows".into()))?;
        Self::from_points(&coords, d, masses, metric)
    }

    /// Reads a dense n×n distance table from CSV (no header). Masses are 1;
    /// `c0` is taken as given or measured exhaustively when `None`.
    pub fn from_table_csv(path: &Path, c0: Option<f64>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rho: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for record in reader.records() {
            let record = record?;
            if record.is_empty() || (record.len() == 1 && record[0].is_empty()) {
                continue;
            }
            if n == 0 {
                n = record.len();
            } else if record.len() != n {
                return Err(CoreError::InvalidValue(format!(
                    "distance table row has {} fields, expected {n}",
                    record.len()
                )));
            }
            for field in record.iter() {
                rho.push(field.parse().map_err(|_| {
                    CoreError::InvalidValue(format!("csv field {field:?} is not a number"))
                })?);
            }
        }
        if rho.len() != n * n {
            return Err(CoreError::InvalidValue(format!(
                "distance table is {}×{n}, expected square",
                rho.len() / n.max(1)
            )));
        }
        let space = Self::from_table(rho, vec![1.0; n], c0.unwrap_or(1.0))?;
        match c0 {
            Some(_) => Ok(space),
            None => {
                let measured = space.validate_quasimetric().c0_observed.max(1.0);
                Self::from_table(space.rho, space.mass, measured)
            }
        }
    }
}

fn grid_masses(n: usize, mode: MassMode) -> Vec<f64> {
    match mode {
        MassMode::Unit => vec![1.0; n],
        MassMode::Normalized => vec![1.0 / n as f64; n],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_point_line() -> QuasiMetricSpace {
        // {0, 1/4, 2/4, 3/4, 1} with unit masses.
        let coords = [0.0, 0.25, 0.5, 0.75, 1.0];
        QuasiMetricSpace::from_points(&coords, 1, vec![1.0; 5], Metric::Euclidean).unwrap()
    }

    #[test]
    fn ball_members_on_line() {
        let space = five_point_line();
        let mut members = space.ball_members(Ball::new(2, 0.3)).unwrap().to_vec();
        members.sort_unstable();
        assert_eq!(members, vec![1, 2, 3]);
    }

    #[test]
    fn singleton_space_ball_is_the_point() {
        let space = QuasiMetricSpace::from_table(vec![0.0], vec![2.5], 1.0).unwrap();
        assert_eq!(space.ball_members(Ball::new(0, 123.0)).unwrap(), &[0]);
        assert_eq!(space.ball_measure(Ball::new(0, 123.0)).unwrap(), 2.5);
        assert_eq!(space.doubling_constant(&[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn ball_rejects_bad_inputs() {
        let space = five_point_line();
        assert!(space.ball_members(Ball::new(9, 0.5)).is_err());
        assert!(space.ball_members(Ball::new(0, 0.0)).is_err());
    }

    #[test]
    fn ball_members_match_brute_force_on_random_cloud() {
        // 50-point deterministic pseudo-random cloud in the plane.
        let mut coords = Vec::new();
        let mut state = 0x9d2c_5680u64;
        for _ in 0..100 {
            state = crate::util::mix64(state);
            coords.push((state >> 11) as f64 / (1u64 << 53) as f64);
        }
        let space =
            QuasiMetricSpace::from_points(&coords, 2, vec![1.0; 50], Metric::Euclidean).unwrap();
        for center in [0usize, 7, 23, 49] {
            for radius in [0.05, 0.2, 0.5, 1.0] {
                let mut got = space.ball_members(Ball::new(center, radius)).unwrap().to_vec();
                got.sort_unstable();
                let want: Vec<u32> = (0..50u32)
                    .filter(|&y| space.rho(center, y as usize) < radius)
                    .collect();
                assert_eq!(got, want, "center {center} radius {radius}");
                assert!(got.contains(&(center as u32)));
            }
        }
    }

    #[test]
    fn ball_members_monotone_in_radius() {
        let space = five_point_line();
        for center in 0..5 {
            let mut prev: Vec<u32> = vec![];
            for radius in [0.1, 0.3, 0.6, 1.2] {
                let mut cur = space.ball_members(Ball::new(center, radius)).unwrap().to_vec();
                cur.sort_unstable();
                assert!(prev.iter().all(|p| cur.contains(p)));
                prev = cur;
            }
        }
    }

    #[test]
    fn measure_is_additive_and_matches_shuffled_oracle() {
        let space = five_point_line();
        assert_eq!(space.measure(&[]), 0.0);
        assert_eq!(space.measure(&[0, 1, 2, 3, 4]), 5.0);
        let a = [0u32, 2];
        let b = [1u32, 4];
        let union = [0u32, 2, 1, 4];
        let direct = space.measure(&union);
        assert!((space.measure(&a) + space.measure(&b) - direct).abs() <= 1e-12 * direct.abs());
        // Arbitrary-order accumulation agrees.
        let reversed = [4u32, 1, 2, 0];
        assert!((space.measure(&reversed) - direct).abs() <= 1e-12 * direct.abs());
    }

    #[test]
    fn euclidean_grid_is_a_true_metric() {
        let space = QuasiMetricSpace::unit_grid_1d(17, Metric::Euclidean, MassMode::Unit).unwrap();
        let report = space.validate_quasimetric();
        assert!(report.pass(), "violations: {:?}", report.violations);
        assert!(report.c0_observed <= 1.0 + 1e-12);
    }

    #[test]
    fn squared_distance_quasi_constant_is_two() {
        // rho = |x-y|² on {0, 1/2, 1}: the triple (0, 1/2, 1) forces c0 = 2.
        let coords = [0.0, 0.5, 1.0];
        let space =
            QuasiMetricSpace::from_points(&coords, 1, vec![1.0; 3], Metric::Power(2.0)).unwrap();
        assert_eq!(space.c0(), 2.0);
        let report = space.validate_quasimetric();
        assert!(report.pass());
        assert!((report.c0_observed - 2.0).abs() <= 1e-12);
        let (x, _, z) = report.worst_triple.unwrap();
        assert!((x, z) == (0, 2) || (x, z) == (2, 0));
    }

    #[test]
    fn asymmetric_table_is_reported() {
        let mut rho = vec![0.0, 1.0, 1.0, 0.0];
        rho[1] = 1.5; // rho(0,1) ≠ rho(1,0)
        let space = QuasiMetricSpace::from_table(rho, vec![1.0; 2], 1.0).unwrap();
        let report = space.validate_quasimetric();
        assert!(!report.pass());
        assert!(matches!(report.violations[0], MetricViolation::Asymmetry { i: 0, j: 1, .. }));
    }

    #[test]
    fn doubling_constant_on_interior_radii() {
        let space = QuasiMetricSpace::unit_grid_1d(64, Metric::Euclidean, MassMode::Unit).unwrap();
        // Radii small enough that doubling stays interior-dominated.
        let grid: Vec<f64> = vec![2.0 / 64.0, 4.0 / 64.0, 8.0 / 64.0];
        let cd = space.doubling_constant(&grid).unwrap();
        assert!((1.0..=3.0).contains(&cd), "cd = {cd}");
        // And it agrees with an exhaustive ratio scan.
        let mut oracle: f64 = 1.0;
        for x in 0..64usize {
            for &r in &grid {
                let count = |rad: f64| {
                    (0..64usize).filter(|&y| space.rho(x, y) < rad).count() as f64
                };
                oracle = oracle.max(count(2.0 * r) / count(r));
            }
        }
        assert!((cd - oracle).abs() <= 1e-12);
    }

    #[test]
    fn snowflake_doubling_matches_brute_force() {
        let space =
            QuasiMetricSpace::unit_grid_1d(48, Metric::Snowflake(0.5), MassMode::Unit).unwrap();
        let grid = space.default_radius_grid();
        let cd = space.doubling_constant(&grid).unwrap();
        assert!(cd.is_finite() && cd >= 1.0);
        let mut oracle: f64 = 1.0;
        for x in 0..48usize {
            for &r in &grid {
                let count = |rad: f64| {
                    (0..48usize)
                        .map(|y| if space.rho(x, y) < rad { 1.0 } else { 0.0 })
                        .sum::<f64>()
                };
                oracle = oracle.max(count(2.0 * r) / count(r));
            }
        }
        assert!((cd - oracle).abs() <= 1e-12);
    }

    #[test]
    fn metric_descriptors_round_trip() {
        for desc in ["euclidean", "snowflake:0.5", "power:2"] {
            let m = Metric::parse(desc).unwrap();
            assert_eq!(Metric::parse(&m.descriptor()).unwrap(), m);
        }
        assert!(Metric::parse("snowflake:1.5").is_err());
        assert!(Metric::parse("power:0.5").is_err());
        assert!(Metric::parse("manhattan").is_err());
    }

    #[test]
    fn duplicate_points_rejected() {
        let coords = [0.3, 0.3];
        let err = QuasiMetricSpace::from_points(&coords, 1, vec![1.0; 2], Metric::Euclidean);
        assert!(err.is_err());
    }
}
