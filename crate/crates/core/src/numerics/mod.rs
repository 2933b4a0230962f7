//! Shared numerical kernels: Hermitian eigendecomposition, Gaussian and F
//! distribution functions, a one-sample KS test and seeded RNG streams.

pub mod dist;
pub mod empirical;
pub mod ks;
pub mod linalg;
pub mod rng;

pub use dist::{
    chi_square_cdf, f_cdf, f_quantile, f_sf, f_upper_quantile, gaussian_q, gaussian_q_inv,
    noncentral_f_sf,
};
pub use empirical::{binomial_stderr, exceedance, upper_quantile};
pub use ks::{ks_statistic, KsResult};
pub use linalg::{hermitian_eig, EigenSystem};
pub use rng::{complex_normal, stream, SimRng};
