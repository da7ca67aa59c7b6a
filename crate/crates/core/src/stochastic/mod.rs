//! Assumption distributions, reproducible uniforms and rank-correlation induction.

mod correlation;
mod distribution;
mod rng;

pub use correlation::{
    induce_rank_correlation, CorrelationError, CorrelationMatrix, InductionError,
    MIN_ROWS_PER_COLUMN, PSD_TOLERANCE,
};
pub use distribution::{standard_normal_inverse, Distribution, DistributionError};
pub use rng::{RandomSource, Stream};
