//! Numerical thresholds shared across modules.

/// Default minimum camera-to-point distance (world units) below which a pair
/// is treated as degenerate.
pub const DEFAULT_GEOMETRY_EPSILON: f64 = 1e-8;

/// Rotation matrices must satisfy ‖RᵀR − I‖_F and |det R − 1| below this.
pub const ROTATION_ORTHONORMALITY: f64 = 1e-9;

/// Angles below this use the series expansion of the SO(3) exponential.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Two smallest singular values closer than this make the SO(3) projection
/// ambiguous.
pub const PROJECTION_SINGULAR_GAP: f64 = 1e-12;

/// Default proximal weight ξ.
pub const DEFAULT_XI: f64 = 1e-4;

/// Default smoothing factor η of the restart average.
pub const DEFAULT_ETA: f64 = 0.1;

/// Default Huber threshold δ, in units of ‖e‖.
pub const DEFAULT_HUBER_DELTA: f64 = 1.0;
