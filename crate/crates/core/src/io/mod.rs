//! File formats and problem generators.

pub mod bal;
pub mod metrics;
pub mod ply;
pub mod synthetic;
