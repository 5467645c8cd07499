//! Operators on finite spaces of homogeneous type: singular kernels, A₂
//! weights, maximal functions, discrete averaging operators with their
//! adjoints, norm measurements and Calderón–Zygmund splittings.

pub mod constants;
pub mod discrete;
pub mod kernel;
pub mod maximal;
pub mod norms;
pub mod weight;

pub use constants::{
    cz_decompose, level_window_pairs, whitney_cover, CzParts, MeasuredConstants, WindowPair,
};
pub use discrete::{build_a_k, build_b, discretization_ratio, DiscreteOperator, OperatorTerm};
pub use kernel::{
    all_pairs, apply_cz, apply_cz_adjoint, validate_kernel, Kernel, KernelForm, KernelValidation,
};
pub use maximal::{maximal_function, weighted_ball_maximal, weighted_dyadic_maximal};
pub use norms::{
    cz_l2_norm, linear_l2_norm, median_term_norm, operator_l2_norm, oscillation_bound_ratio,
    weak_11_ratio, NormEstimate, OscillationBound,
};
pub use weight::{a2_characteristic, a2_dyadic, power_weight, Weight};
