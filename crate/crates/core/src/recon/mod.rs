//! Reconstruction from CReLU features: shift matrices, pseudoinverse
//! inversion with and without max-pooling, frame bounds and the numerical
//! sweeps that check them.

pub mod frame;
pub mod invert;
pub mod ratio;
pub mod reconstruct;
pub mod shift;
pub mod subspace;
pub mod theory;

pub use frame::{frame_bounds, FrameBounds};
pub use invert::invert_conv_stack;
pub use ratio::{reconstruction_ratio_experiment, PooledConvLayer, RatioSummary};
pub use reconstruct::{
    conv_crelu_maxpool, crelu_features, crelu_inverse, invert_no_pool, invert_with_pool,
    reconstruct_no_pool, reconstruct_with_pool, sample_assumption_input, ReconReport,
    SelectionMatrices, SparseCombination,
};
pub use shift::{build_shift_matrix, FilterBank, ShiftMatrix};
pub use subspace::{random_subspace_expectation, SubspaceEstimate};
pub use theory::{verify_theory, PropertyResult};
