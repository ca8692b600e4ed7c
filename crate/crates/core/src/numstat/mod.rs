//! Numerical building blocks: least squares, the F-distribution tail,
//! descriptive statistics and reproducible random streams.

mod ols;
mod rng;
mod special;
mod stats;

pub use ols::{ols, Design, OlsFit};
pub use rng::RandomSource;
pub use special::{f_sf, ln_beta, regularized_incomplete_beta};
pub use stats::{mean, pearson_corr, sample_sd, sample_variance};
