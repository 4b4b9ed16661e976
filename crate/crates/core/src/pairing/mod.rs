//! Filter-pairing statistics, outgoing-weight correlations across the two
//! CReLU phases, and invariance scores.

pub mod correlation;
pub mod invariance;
pub mod mu;
pub mod shift_test;

pub use correlation::{outgoing_vectors, outgoing_weight_correlation, CorrelationReport};
pub use invariance::{firing_thresholds, invariance_score, rotate, rotate_15, InvarianceReport, Transform};
pub use mu::{histogram_svg, mu_histogram, normalize_rows, pairing_baseline, pairing_mu, PairingReport, HISTOGRAM_BINS};
pub use shift_test::{pairing_shift_test, ShiftTest, PERMUTATION_RESAMPLES};
