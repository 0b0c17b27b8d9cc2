//! Dense linear algebra, least squares, seeded sampling and percentile
//! statistics shared by the rest of the crate. Everything is `f64`.

mod lstsq;
mod matrix;
mod rng;
mod stats;

pub use lstsq::solve_least_squares;
pub use matrix::{dot, infinity_norm, matrix_power_apply, norm2, Matrix};
pub(crate) use matrix::gemm;
pub use rng::{derive_seed, derive_seed_str, Rng};
pub use stats::{mean, percentile_sorted, percentiles, std_dev, PercentileSummary};
