//! JSON-loadable experiment configuration and the builders that turn it
//! into concrete spaces, dyadic systems, kernels and weights.

use crate::adjacent::{build_adjacent_systems, AdjacentSystems};
use crate::dyadic::{build_dyadic_system, DyadicSystem, NetOrder, RawSystem};
use crate::error::{CoreError, Result};
use crate::operators::kernel::{Kernel, KernelForm};
use crate::operators::weight::{power_weight, Weight};
use crate::space::{MassMode, Metric, QuasiMetricSpace};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Point-cloud description: a uniform grid on `[0,1]^dim` with a metric
/// descriptor and a mass convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceSpec {
    /// Total point count; for `dim = 2` it must be a perfect square.
    pub n: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// `"euclidean"`, `"snowflake:<s>"` or `"power:<p>"`.
    #[serde(default = "default_metric")]
    pub metric: String,
    /// `"normalized"` (total mass 1) or `"unit"` (mass 1 per point).
    #[serde(default = "default_mass")]
    pub mass: String,
}

impl SpaceSpec {
    pub fn build(&self) -> Result<QuasiMetricSpace> {
        let metric = Metric::parse(&self.metric)?;
        let mode = parse_mass(&self.mass)?;
        match self.dim {
            1 => QuasiMetricSpace::unit_grid_1d(self.n, metric, mode),
            2 => {
                let side = (self.n as f64).sqrt().round() as usize;
                QuasiMetricSpace::unit_grid_2d(side, metric, mode)
            }
            d => Err(CoreError::InvalidValue(format!("space.dim = {d}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DyadicSpec {
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Seed for the randomized adjacent-family search.
    #[serde(default)]
    pub seed: u64,
    /// Number of seeded candidates tried when building adjacent systems.
    #[serde(default = "default_trials")]
    pub adjacency_trials: usize,
}

impl Default for DyadicSpec {
    fn default() -> Self {
        Self { delta: default_delta(), seed: 0, adjacency_trials: default_trials() }
    }
}

/// The power-weight family `w_α(x) = max(ρ(x, pole), min_gap/2)^α`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(default)]
    pub pole: usize,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FuzzSpec {
    /// Cases per median/quantile lemma row.
    #[serde(default = "default_lemma_cases")]
    pub lemma_cases: usize,
    /// Cases (random functions) for sparse-family and operator batteries.
    #[serde(default = "default_family_cases")]
    pub family_cases: usize,
}

impl Default for FuzzSpec {
    fn default() -> Self {
        Self { lemma_cases: default_lemma_cases(), family_cases: default_family_cases() }
    }
}

/// Everything the sweeps and batteries need; serde-JSON round-trippable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub space: SpaceSpec,
    #[serde(default)]
    pub dyadic: DyadicSpec,
    pub weights: WeightSpec,
    /// `"zero"`, `"hilbert"` or `"signed_inverse"`, optionally `":<eta>"`.
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_complexities")]
    pub complexities: Vec<u32>,
    #[serde(default)]
    pub fuzz: FuzzSpec,
    #[serde(default)]
    pub out_dir: Option<String>,
    /// Global seed; per-cell seeds are derived by stable hashing.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_dim() -> usize {
    1
}
fn default_metric() -> String {
    "euclidean".into()
}
fn default_mass() -> String {
    "normalized".into()
}
fn default_delta() -> f64 {
    0.5
}
fn default_trials() -> usize {
    40
}
fn default_lemma_cases() -> usize {
    10_000
}
fn default_family_cases() -> usize {
    1_000
}
fn default_kernel() -> String {
    "hilbert".into()
}
fn default_complexities() -> Vec<u32> {
    vec![1, 2, 3]
}
fn default_seed() -> u64 {
    2026
}

fn parse_mass(desc: &str) -> Result<MassMode> {
    match desc {
        "unit" => Ok(MassMode::Unit),
        "normalized" => Ok(MassMode::Normalized),
        other => {
            Err(CoreError::InvalidValue(format!("mass mode '{other}' (try unit | normalized)")))
        }
    }
}

/// Parses `"<form>"` or `"<form>:<eta>"` into a kernel.
pub fn parse_kernel(desc: &str) -> Result<Kernel> {
    let (name, eta) = match desc.split_once(':') {
        Some((name, eta_str)) => {
            let eta: f64 = eta_str
                .parse()
                .map_err(|_| CoreError::InvalidValue(format!("kernel eta '{eta_str}'")))?;
            (name, eta)
        }
        None => (desc, 1.0),
    };
    let form = match name {
        "zero" => KernelForm::Zero,
        "hilbert" => KernelForm::Hilbert,
        "signed_inverse" => KernelForm::SignedInverse,
        other => {
            return Err(CoreError::InvalidValue(format!(
                "kernel '{other}' (try zero | hilbert | signed_inverse)"
            )))
        }
    };
    Kernel::new(form, eta)
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.space;
        if s.n < 2 {
            return Err(CoreError::InvalidValue(format!("space.n = {} must be ≥ 2", s.n)));
        }
        match s.dim {
            1 => {}
            2 => {
                let side = (s.n as f64).sqrt().round() as usize;
                if side * side != s.n {
                    return Err(CoreError::InvalidValue(format!(
                        "space.n = {} is not a perfect square for dim = 2",
                        s.n
                    )));
                }
            }
            d => return Err(CoreError::InvalidValue(format!("space.dim = {d} (1 or 2)"))),
        }
        Metric::parse(&s.metric)?;
        parse_mass(&s.mass)?;
        if !(self.dyadic.delta > 0.0 && self.dyadic.delta < 1.0) {
            return Err(CoreError::InvalidValue(format!(
                "dyadic.delta = {} must lie in (0, 1)",
                self.dyadic.delta
            )));
        }
        if self.dyadic.adjacency_trials == 0 {
            return Err(CoreError::InvalidValue("dyadic.adjacency_trials = 0".into()));
        }
        if self.weights.pole >= s.n {
            return Err(CoreError::IndexOutOfRange { index: self.weights.pole, n: s.n });
        }
        if self.weights.alphas.is_empty() {
            return Err(CoreError::EmptySet("weights.alphas".into()));
        }
        for &alpha in &self.weights.alphas {
            if !alpha.is_finite() || alpha.abs() >= s.dim as f64 {
                return Err(CoreError::InvalidValue(format!(
                    "alpha = {alpha} must satisfy |alpha| < dim = {} to stay in the weight class",
                    s.dim
                )));
            }
        }
        parse_kernel(&self.kernel)?;
        if self.complexities.is_empty() {
            return Err(CoreError::EmptySet("complexities".into()));
        }
        if self.complexities.iter().any(|&k| k == 0 || k > 32) {
            return Err(CoreError::InvalidValue(
                "every complexity must lie in 1..=32".into(),
            ));
        }
        if self.fuzz.lemma_cases == 0 || self.fuzz.family_cases == 0 {
            return Err(CoreError::InvalidValue("fuzz counts must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn build_space(&self) -> Result<QuasiMetricSpace> {
        self.space.build()
    }

    /// The primary dyadic system: deterministic index-order nets.
    pub fn build_system(&self, space: &QuasiMetricSpace) -> Result<DyadicSystem> {
        build_dyadic_system(space, self.dyadic.delta, None, NetOrder::Index)
    }

    pub fn build_adjacent(&self, space: &QuasiMetricSpace) -> Result<AdjacentSystems> {
        build_adjacent_systems(space, self.dyadic.delta, self.dyadic.adjacency_trials, self.dyadic.seed)
    }

    pub fn build_kernel(&self) -> Result<Kernel> {
        parse_kernel(&self.kernel)
    }

    pub fn build_weight(&self, space: &QuasiMetricSpace, alpha: f64) -> Result<Weight> {
        power_weight(space, self.weights.pole, alpha)
    }

    /// Small deterministic configuration for unit tests.
    pub fn quick(n: usize) -> Self {
        Self {
            space: SpaceSpec {
                n,
                dim: 1,
                metric: "euclidean".into(),
                mass: "normalized".into(),
            },
            dyadic: DyadicSpec::default(),
            weights: WeightSpec { pole: n / 3, alphas: vec![0.0, 0.5] },
            kernel: "hilbert".into(),
            complexities: vec![1, 2],
            fuzz: FuzzSpec { lemma_cases: 50, family_cases: 8 },
            out_dir: None,
            seed: 2026,
        }
    }

    /// Desk-scale weight sweep: Hilbert kernel on a 2048-point line with
    /// power weights up to α = 0.95 (A₂ characteristic ≈ 1.7/(1 − α²)).
    pub fn a2_desk() -> Self {
        Self {
            space: SpaceSpec {
                n: 2048,
                dim: 1,
                metric: "euclidean".into(),
                mass: "normalized".into(),
            },
            dyadic: DyadicSpec::default(),
            weights: WeightSpec { pole: 2048 / 3, alphas: vec![0.0, 0.3, 0.5, 0.7, 0.9, 0.95] },
            kernel: "hilbert".into(),
            complexities: vec![3],
            fuzz: FuzzSpec::default(),
            out_dir: None,
            seed: 2026,
        }
    }

    /// Desk-scale complexity sweep on a 1024-point line, unweighted.
    pub fn complexity_desk() -> Self {
        Self {
            space: SpaceSpec {
                n: 1024,
                dim: 1,
                metric: "euclidean".into(),
                mass: "normalized".into(),
            },
            dyadic: DyadicSpec::default(),
            weights: WeightSpec { pole: 1024 / 3, alphas: vec![0.0] },
            kernel: "hilbert".into(),
            complexities: vec![1, 2, 3, 4, 5, 6],
            fuzz: FuzzSpec::default(),
            out_dir: None,
            seed: 2026,
        }
    }
}

/// A self-contained dyadic-system export: the space recipe together with
/// the raw cube data, so a verifier can rebuild the geometry and re-check
/// the defining properties without the original configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    pub space: SpaceSpec,
    pub system: RawSystem,
}

impl SystemFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("system file serializes")
    }
}
