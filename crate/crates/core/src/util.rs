//! Small numeric helpers shared across modules.

/// Neumaier-compensated accumulator. Deterministic for a fixed insertion
/// order; accurate enough that mass comparisons against rational thresholds
/// are exact whenever the masses themselves are exactly representable.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Geometric grid from `lo` to at least `hi` with the given ratio > 1.
/// Both endpoints are included (the last entry may overshoot `hi`).
pub fn geometric_grid(lo: f64, hi: f64, ratio: f64) -> Vec<f64> {
    assert!(lo > 0.0 && lo.is_finite(), "geometric grid needs lo > 0");
    assert!(ratio > 1.0, "geometric grid needs ratio > 1");
    let mut out = vec![lo];
    let mut r = lo;
    while r < hi {
        r *= ratio;
        out.push(r);
    }
    out
}

/// SplitMix64 finalizer; used to derive independent per-cell seeds from a
/// global seed and cell coordinates without pulling in hashing machinery
/// whose output could change between library versions.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed for a sweep cell identified by a label and numeric coordinates.
pub fn cell_seed(global: u64, label: &str, coords: &[u64]) -> u64 {
    let mut h = mix64(global);
    for &b in label.as_bytes() {
        h = mix64(h ^ b as u64);
    }
    for &c in coords {
        h = mix64(h ^ c);
    }
    h
}

/// Ordinary least squares fit y = slope·x + intercept.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope estimate; NaN with < 3 points.
    pub std_err: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(xs.len() >= 2, "line fit needs at least two points");
    let mx = compensated_sum(xs.iter().copied()) / n;
    let my = compensated_sum(ys.iter().copied()) / n;
    let sxx = compensated_sum(xs.iter().map(|&x| (x - mx) * (x - mx)));
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let std_err = if xs.len() >= 3 {
        let ss_res = compensated_sum(
            xs.iter()
                .zip(ys)
                .map(|(&x, &y)| {
                    let r = y - (slope * x + intercept);
                    r * r
                }),
        );
        (ss_res / ((n - 2.0) * sxx)).sqrt()
    } else {
        f64::NAN
    };
    LineFit { slope, intercept, std_err }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_handles_cancellation() {
        // 1 + 1e16 - 1e16 loses the 1 under naive f64 summation.
        let s = compensated_sum([1.0, 1e16, -1e16]);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn compensated_sum_of_units_is_exact() {
        let s = compensated_sum(std::iter::repeat(1.0).take(12345));
        assert_eq!(s, 12345.0);
    }

    #[test]
    fn geometric_grid_covers_range() {
        let g = geometric_grid(0.01, 1.0, 2.0_f64.sqrt());
        assert!(g.first().unwrap() <= &0.01);
        assert!(g.last().unwrap() >= &1.0);
        for w in g.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn fit_line_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let fit = fit_line(&xs, &ys);
        assert!((fit.slope - 2.5).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!(fit.std_err.abs() < 1e-9);
    }

    #[test]
    fn cell_seed_is_stable_and_sensitive() {
        let a = cell_seed(7, "a2", &[900, 3]);
        let b = cell_seed(7, "a2", &[900, 3]);
        let c = cell_seed(7, "a2", &[900, 4]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
