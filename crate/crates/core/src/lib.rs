//! Decentralized bundle adjustment.
//!
//! The solver splits a bundle-adjustment problem across simulated devices.
//! Each device minimizes a local majorizer of the global objective, with
//! Nesterov extrapolation and a restart test that only uses local and
//! neighbour information.
//!
//! Module map:
//! - [`geometry`]: camera/point states, the ray-space reprojection error,
//!   robust losses, objective and gradients.
//! - [`surrogate`]: per-pair majorizer coefficients and per-device objectives.
//! - [`solver`]: Levenberg-Marquardt on one device's surrogate.
//! - [`acceleration`]: momentum schedule, extrapolation and restart metrics.
//! - [`runtime`]: partitioning, message exchange and the superstep loop.
//! - [`io`]: BAL files, synthetic problems, PLY export and metrics records.

pub mod acceleration;
pub mod error;
pub mod geometry;
pub mod io;
pub mod profile;
pub mod runtime;
pub mod solver;
pub mod surrogate;
pub mod tolerances;

pub use error::{Error, Result};
pub use geometry::{
    BaState, CameraState, GeometryPolicy, LossFunction, Observation, PointState, ProblemInstance,
    RotationMatrix,
};
