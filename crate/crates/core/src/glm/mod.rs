//! Binary-response regression of the augmented indicator and the likelihood-ratio test for the
//! outcome-dependent terms.

pub mod chi2;
mod fit;

pub use chi2::{central_chi2_cdf, central_chi2_quantile, central_chi2_sf, noncentral_chi2_cdf};
pub use fit::{fit, fit_binary, lrt_mnar, GlmFit, LrtResult, MAX_ITERATIONS, SEPARATION_BOUND};
