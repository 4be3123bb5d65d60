//! Design and analysis of follow-up (recovery) samples for testing whether an outcome is
//! missing not at random.
//!
//! The crate covers the whole workflow: the selection-model specification ([`model`]), the
//! deterministic expectation engine ([`quadrature`]), the law of the augmented data
//! ([`augmentation`]), binary-response fitting and the likelihood-ratio test ([`glm`]), the
//! analytic design criteria ([`power`]), the region optimizer ([`design`]) and the Monte Carlo
//! studies ([`sim`]).

pub mod augmentation;
pub mod design;
pub mod error;
pub mod exec;
pub mod glm;
pub mod model;
pub mod power;
pub mod presets;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};
