//! Exact design-based variances, variance bounds and bound estimators for
//! linear estimators under enumerable randomization designs.
//!
//! Vectors of length `k·n` stack the arms: arm `r`, unit `i` (0-based) sits at
//! `r·n + i`. Files use 1-based arms, units and flat indices.

pub mod bound_estimation;
pub mod bounds;
pub mod design;
pub mod error;
pub mod estimators;
pub mod io;
pub mod layout;
pub mod linalg;
pub mod montecarlo;
pub mod prob;
pub mod spectral;

pub use error::{Error, NeymanViolation, Result};
pub use layout::{Assignment, IndexLayout};
