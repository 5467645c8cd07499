//! Strictly positive weights, power-law model weights and the A₂
//! characteristic over balls (exact or on a radius grid) and dyadic cubes.

use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicSystem;
use crate::error::{CoreError, Result};
use crate::space::QuasiMetricSpace;
use crate::util::CompensatedSum;

/// A strictly positive, finite weight sampled on the points of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    values: Vec<f64>,
}

impl Weight {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::InvalidValue("weight has no values".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(CoreError::InvalidValue(format!(
                    "weight value {v} at point {i} is not finite and positive"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The dual weight `w⁻¹` (pointwise reciprocal).
    pub fn inverse(&self) -> Weight {
        Weight { values: self.values.iter().map(|v| 1.0 / v).collect() }
    }

    /// `w(E) = Σ_{x∈E} w(x)·m(x)`, compensated, in the given order.
    pub fn set_mass(&self, space: &QuasiMetricSpace, points: &[u32]) -> f64 {
        let mut acc = CompensatedSum::new();
        for &p in points {
            acc.add(self.values[p as usize] * space.mass_of(p as usize));
        }
        acc.value()
    }
}

/// `w(x) = max(ρ(x, pole), min_gap/2)^α`. The clamp keeps the pole value
/// finite for negative exponents while preserving the power profile
/// elsewhere; α = 0 gives the constant weight 1.
pub fn power_weight(space: &QuasiMetricSpace, pole: usize, alpha: f64) -> Result<Weight> {
    if pole >= space.n() {
        return Err(CoreError::IndexOutOfRange { index: pole, n: space.n() });
    }
    if !alpha.is_finite() {
        return Err(CoreError::InvalidValue(format!("alpha = {alpha} is not finite")));
    }
    let floor = space.min_gap() / 2.0;
    let values = (0..space.n())
        .map(|x| space.rho(x, pole).max(floor).powf(alpha))
        .collect();
    Weight::new(values)
}

/// Averages of `w` and `w⁻¹` over the sorted-row prefix of length `cut`,
/// returned as their product. `cut ≥ 1`.
fn prefix_products(space: &QuasiMetricSpace, w: &Weight, center: usize) -> Vec<(usize, f64)> {
    let row = space.sorted_row(center);
    let n = row.len();
    let mut sm = CompensatedSum::new();
    let mut sw = CompensatedSum::new();
    let mut swi = CompensatedSum::new();
    let mut out = Vec::new();
    for t in 0..n {
        let p = row[t] as usize;
        let m = space.mass_of(p);
        sm.add(m);
        sw.add(w.value(p) * m);
        swi.add(m / w.value(p));
        let boundary = t + 1 == n
            || space.rho(center, row[t + 1] as usize) > space.rho(center, p);
        if boundary {
            let mass = sm.value();
            out.push((t + 1, (sw.value() / mass) * (swi.value() / mass)));
        }
    }
    out
}

/// The A₂ characteristic `sup_B (avg_B w)(avg_B w⁻¹)`.
///
/// With `radius_grid = None` the supremum is exact: every open ball is a
/// prefix of a sorted row cut at a distance-group boundary, so walking those
/// boundaries enumerates all distinct balls. With a grid, only balls with
/// the given radii (around every center) enter the supremum.
pub fn a2_characteristic(
    space: &QuasiMetricSpace,
    w: &Weight,
    radius_grid: Option<&[f64]>,
) -> Result<f64> {
    if w.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "weight has {} values for a space of {} points",
            w.len(),
            space.n()
        )));
    }
    let mut best: f64 = 0.0;
    match radius_grid {
        None => {
            for c in 0..space.n() {
                for (_, product) in prefix_products(space, w, c) {
                    best = best.max(product);
                }
            }
        }
        Some(grid) => {
            for &r in grid {
                if !(r > 0.0) {
                    return Err(CoreError::InvalidValue(format!(
                        "grid radius {r} must be > 0"
                    )));
                }
            }
            for c in 0..space.n() {
                let products = prefix_products(space, w, c);
                let row = space.sorted_row(c);
                for &r in grid {
                    let cut = row.partition_point(|&p| space.rho(c, p as usize) < r);
                    if cut == 0 {
                        continue;
                    }
                    // The open ball of radius r is the prefix through the last
                    // boundary at or before `cut`; boundaries are exactly the
                    // recorded positions.
                    if let Some(&(_, product)) =
                        products.iter().find(|&&(t, _)| t == cut)
                    {
                        best = best.max(product);
                    }
                }
            }
        }
    }
    Ok(best)
}

/// `max_Q (avg_Q w)(avg_Q w⁻¹)` over every cube of the system.
pub fn a2_dyadic(space: &QuasiMetricSpace, system: &DyadicSystem, w: &Weight) -> Result<f64> {
    if w.len() != space.n() {
        return Err(CoreError::InvalidValue(format!(
            "weight has {} values for a space of {} points",
            w.len(),
            space.n()
        )));
    }
    let mut best: f64 = 0.0;
    for id in 0..system.n_cubes() as u32 {
        let members = system.members(id);
        let mass = system.cube(id).mass;
        let sw = w.set_mass(space, members);
        let swi = w.inverse().set_mass(space, members);
        best = best.max((sw / mass) * (swi / mass));
    }
    Ok(best)
}
