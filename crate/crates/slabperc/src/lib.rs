//! Percolation laboratory on slab graphs Z^2 x {0,..,k}: geometry and
//! orderings, reproducible edge labelings, connectivity and crossing
//! queries, invasion percolation and minimal spanning forests, local
//! surgery machinery, and a Monte Carlo experiment harness.

pub mod connectivity;
pub mod error;
pub mod geometry;
pub mod gluing;
pub mod harness;
pub mod invasion;
pub mod labels;
pub mod oracle;
pub mod plan;
pub mod plot;
pub mod stats;

pub use error::{Result, SlabError};

/// Version tag recorded in result files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
