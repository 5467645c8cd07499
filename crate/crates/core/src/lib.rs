//! Dyadic structures, medians, sparse domination and discrete operators on
//! finite spaces of homogeneous type.
//!
//! The crate builds verified dyadic cube systems on finite quasi-metric
//! measure spaces, computes medians / generalized medians / local mean
//! oscillations, runs the stopping-time sparse decomposition, and measures
//! operator norms (Calderón–Zygmund model kernels, maximal functions, the
//! discrete averaging operators `A_k` and `B_{j,k}`) under Muckenhoupt A₂
//! weights. The `experiments` module orchestrates the acceptance sweeps and
//! emits CSV tables and SVG charts; the `dyadic` binary in the companion CLI
//! crate drives it.

pub mod adjacent;
pub mod dyadic;
pub mod error;
pub mod experiments;
pub mod median;
pub mod operators;
pub mod space;
pub mod sparse;
mod util;

pub use adjacent::{build_adjacent_systems, cover_ball, AdjacentSystems};
pub use dyadic::{
    build_dyadic_system, verify_built, verify_system, Cube, CubeId, DyadicSystem, NetOrder,
    RawSystem, VerifyReport,
};
pub use error::{CoreError, Result};
pub use experiments::{
    run_a2_cell, run_a2_sweep, run_complexity_cell, run_complexity_sweep, run_lemma_battery,
    run_oscillation_battery, BatteryReport, RunConfig, SweepResult, SystemFile,
};
pub use median::{LocalMeasure, SampledFunction};
pub use operators::{
    a2_characteristic, a2_dyadic, apply_cz, apply_cz_adjoint, build_a_k, build_b, cz_decompose,
    cz_l2_norm, discretization_ratio, linear_l2_norm, maximal_function, median_term_norm,
    operator_l2_norm, oscillation_bound_ratio, power_weight, validate_kernel, weak_11_ratio,
    weighted_ball_maximal, weighted_dyadic_maximal, whitney_cover, CzParts, DiscreteOperator,
    Kernel, KernelForm, MeasuredConstants, NormEstimate, Weight,
};
pub use space::{Ball, MassMode, Metric, QuasiMetricReport, QuasiMetricSpace};
pub use sparse::{
    build_sparse_family, exclusive_sets, stopping_step, verify_domination, DominationReport,
    SparseFamily, StoppingReport,
};
