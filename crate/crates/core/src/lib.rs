//! Constrained smooth interpolation and selection over finite point sets.
//!
//! The crate is organised bottom-up:
//!
//! * [`multi_index`] and [`jet`]: multi-index orders, jets, jet arithmetic,
//!   Taylor transport and Whitney seminorms.
//! * [`lp`] and [`polytope`]: an in-house simplex (float and exact rational),
//!   H-polytopes affine in a scale parameter, projection and Helly checks.
//! * [`field`] and [`nonneg`]: shape fields, refinements, finiteness sets and
//!   certified nonnegativity tests.
//! * [`basis`]: basis certificates and the rescaling, relabeling, control and
//!   transport constructions, each re-verified on output.
//! * [`cz`]: dyadic cubes, stopping-time decompositions, partitions of unity
//!   and gluing.
//! * [`solver`] and [`instance`]: minimal-scale Whitney field LPs, global
//!   solutions, vector selection via lifting and finiteness experiments.

pub mod basis;
pub mod checks;
pub mod cz;
pub mod field;
pub mod instance;
pub mod jet;
pub mod linalg;
pub mod lp;
pub mod multi_index;
pub mod nonneg;
pub mod polytope;
pub mod scalar;
pub mod solver;
pub mod util;
pub mod whitney;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("guard exceeded: {0}")]
    Guard(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("verification failed at {stage}: {detail}")]
    Verification { stage: String, detail: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub use jet::{Jet, WhitneyField};
pub use multi_index::{IndexSet, JetSpace, MultiIndex};
pub use polytope::HPolytope;

/// Worker count from `WHITSEL_THREADS`, if set to a positive integer.
pub fn configured_threads() -> Option<usize> {
    std::env::var("WHITSEL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}
