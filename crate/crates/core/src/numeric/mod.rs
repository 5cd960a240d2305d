//! Deterministic statistical kernels: Halton draws, standard normal, chi-square.

mod chi2;
mod halton;
mod normal;

pub use chi2::{chi_square_cdf, chi_square_quantile};
pub use halton::{halton_element, make_draws, DrawMatrix, HALTON_PRIMES};
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile, std_normal_sf, two_tailed_p};
