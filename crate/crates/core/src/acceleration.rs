//! Nesterov extrapolation on the product manifold and the per-device restart
//! metrics.
//!
//! Each device carries its own [`NesterovState`] and [`RestartState`]; nothing
//! here needs a global view of the problem.

use crate::error::{Error, Result};
use crate::geometry::{BaState, CameraState, RotationMatrix};
use crate::surrogate::SurrogateSpec;
use crate::tolerances::PROJECTION_SINGULAR_GAP;
use nalgebra::{Matrix3, SVD};

/// Momentum schedule and the previous iterate of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct NesterovState {
    pub s: f64,
    pub gamma: f64,
    pub previous: BaState,
}

impl NesterovState {
    /// Starts at `s = 1` with the previous iterate equal to `x0`.
    pub fn new(x0: BaState) -> Self {
        Self {
            s: 1.0,
            gamma: 0.0,
            previous: x0,
        }
    }

    /// Replaces `s` by its successor and sets `gamma = (s - 1) / s_next`.
    pub fn advance(&mut self) {
        let next = next_s(self.s);
        self.gamma = (self.s - 1.0) / next;
        self.s = next;
    }
}

fn next_s(s: f64) -> f64 {
    ((4.0 * s * s + 1.0).sqrt() + 1.0) / 2.0
}

pub fn advance_schedule(mut state: NesterovState) -> NesterovState {
    state.advance();
    state
}

/// Closest rotation in Frobenius norm, plus whether the choice was ambiguous.
///
/// When the minimizer is not unique the sign flip lands on the direction of
/// the smallest singular value, which makes the choice reproducible.
pub fn proj_rot3d_flagged(m: &Matrix3<f64>) -> (RotationMatrix, bool) {
    let svd = SVD::new(*m, true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    let sv = svd.singular_values;
    let det = (u * vt).determinant();
    let scale = sv[0].max(1.0);
    let mut flip = Matrix3::identity();
    let ambiguous = if det < 0.0 {
        flip[(2, 2)] = -1.0;
        sv[1] - sv[2] <= PROJECTION_SINGULAR_GAP * scale
    } else {
        sv[1] + sv[2] <= PROJECTION_SINGULAR_GAP * scale
    };
    (RotationMatrix::from_matrix_unchecked(u * flip * vt), ambiguous)
}

/// Closest rotation to `m` in Frobenius norm.
///
/// Returns [`Error::NearSingularProjection`] carrying the singular values when
/// the minimizer is not unique; [`proj_rot3d_flagged`] returns the
/// deterministic choice instead.
pub fn proj_rot3d(m: &Matrix3<f64>) -> Result<RotationMatrix> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("cannot project a non-finite matrix".into()));
    }
    let (r, ambiguous) = proj_rot3d_flagged(m);
    if ambiguous {
        let sv = m.singular_values();
        return Err(Error::NearSingularProjection([sv[0], sv[1], sv[2]]));
    }
    Ok(r)
}

/// `x + γ(x − x_prev)`, with rotations projected back onto SO(3).
///
/// Ambiguous projections take the deterministic choice and are logged.
pub fn extrapolate(current: &BaState, nesterov: &NesterovState) -> BaState {
    let g = nesterov.gamma;
    if g == 0.0 {
        return current.clone();
    }
    let cameras = current
        .cameras
        .iter()
        .zip(&nesterov.previous.cameras)
        .map(|(c, p)| {
            let rotation = if c.rotation == p.rotation {
                // A rotation is its own projection; skip the SVD round-off.
                c.rotation
            } else {
                let m = c.rotation.matrix() + (c.rotation.matrix() - p.rotation.matrix()) * g;
                let (r, ambiguous) = proj_rot3d_flagged(&m);
                if ambiguous {
                    log::warn!("rotation extrapolation hit a near-singular projection");
                }
                r
            };
            CameraState {
                rotation,
                center: c.center + (c.center - p.center) * g,
                intrinsics: c.intrinsics + (c.intrinsics - p.intrinsics) * g,
            }
        })
        .collect();
    let points = current
        .points
        .iter()
        .zip(&nesterov.previous.points)
        .map(|(l, p)| l + (l - p) * g)
        .collect();
    BaState { cameras, points }
}

/// Local restart metrics of one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartState {
    pub f_alpha: f64,
    pub fbar_alpha: f64,
    pub e_alpha: f64,
    pub eta: f64,
}

impl RestartState {
    /// Recomputes only the tentative metric, as after a restart re-solve.
    pub fn refresh_tentative(&mut self, e_new_at_xkp1: f64, e_new_at_xk: f64) {
        self.e_alpha = self.f_alpha + (e_new_at_xkp1 - e_new_at_xk);
    }
}

/// All three metrics start at the surrogate value at the initial iterate.
pub fn init_restart(spec: &SurrogateSpec, x0_alpha: &BaState, eta: f64) -> Result<RestartState> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
    }
    let f = spec.evaluate(x0_alpha)?;
    Ok(RestartState {
        f_alpha: f,
        fbar_alpha: f,
        e_alpha: f,
        eta,
    })
}

/// One step of the metric recursion. The smoothing and tentative updates are
/// written in difference form so that a stationary device stays bit-exact.
pub fn update_restart_metrics(
    state: RestartState,
    delta_e_k: f64,
    e_new_at_xkp1: f64,
    e_new_at_xk: f64,
) -> RestartState {
    let f = state.e_alpha + delta_e_k;
    let mut next = RestartState {
        f_alpha: f,
        fbar_alpha: state.fbar_alpha + state.eta * (f - state.fbar_alpha),
        e_alpha: 0.0,
        eta: state.eta,
    };
    next.refresh_tentative(e_new_at_xkp1, e_new_at_xk);
    next
}

pub fn should_restart(state: &RestartState) -> bool {
    state.e_alpha > state.fbar_alpha
}
