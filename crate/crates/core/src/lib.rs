//! Transfer of squeezing from a squeezed-vacuum drive to the collective dipole
//! of a stack of two-dimensional atomic arrays.
//!
//! The crate covers the cooperative rates of a single layer, the beam-splitter
//! model of the collective mode, the linearized multilayer steady state, and a
//! stochastic cross-check of that steady state.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Reference values in the tests keep the digits of their high-precision source.
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod analytic;
pub mod error;
pub mod input;
pub mod kernel;
pub mod linalg;
pub mod mc;
pub mod rates;
pub mod special;
pub mod steady;

pub use analytic::{
    overlap_chi, reflectivity_complex, three_level_effective, xi2_analytic, xi2_min,
    xi2_min_vs_layers, xi2_mismatch, xi2_three_level, DetuningSpec, LayerScanRow,
    OptimalSqueezing, SqueezingResult, ThreeLevelParams, ThreeLevelSpec,
};
pub use error::{Error, Result};
pub use input::{field_moments, noise_diffusions, DiffusionSet, SqueezedVacuumSpec};
pub use kernel::{
    delta_prime, drift_matrix, interaction_kernel, DriftMatrix, KernelOptions, LayerKernel,
};
pub use rates::{
    compute_rates, validity_report, ArrayGeometry, BeamKind, BeamProfile, RateSet, ValidityReport,
};
pub use steady::{solve_moments, xi2_numeric, LinearModel, SolverMethod, SteadyStateMoments};
pub use mc::{simulate_xi2, Integrator, McEstimate, McParams};
