//! Search for the recovery region: a single cuboid chosen to maximise the noncentrality or to
//! minimise the asymptotic variance of the outcome coefficient.

pub mod nelder_mead;
mod search;

pub use search::{
    compare_to_random, evaluate_design, optimize_region, Criterion, DesignEvaluation, DesignSearchResult, LinkMode,
    SearchOptions,
};
