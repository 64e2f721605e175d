//! Quantifying how often random allocation yields non-comparable treatment and
//! control groups, and comparing it with matching, minimization and systematic
//! balancing.

pub mod allocation;
pub mod cohort;
pub mod error;
pub mod exact;
pub mod metrics;
pub mod normal;
pub mod simulation;

pub use cohort::{Allocation, Arm, Attribute, AttributeKind, Cohort, Schema, Unit, Value};
pub use error::{Error, Result};
