use super::{ray_intrinsics_row, BaState, CameraState, LossFunction, PairGeometry, ProblemInstance};
use crate::error::Result;
use nalgebra::{Matrix3, Vector2, Vector3};

/// Gradient blocks of one camera: ambient 3×3 rotation block, center and
/// intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraGradient {
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
    pub intrinsics: Vector3<f64>,
}

impl Default for CameraGradient {
    fn default() -> Self {
        Self {
            rotation: Matrix3::zeros(),
            center: Vector3::zeros(),
            intrinsics: Vector3::zeros(),
        }
    }
}

impl CameraGradient {
    pub fn norm_squared(&self) -> f64 {
        self.rotation.norm_squared() + self.center.norm_squared() + self.intrinsics.norm_squared()
    }

    pub(crate) fn accumulate(&mut self, other: &CameraGradient) {
        self.rotation += other.rotation;
        self.center += other.center;
        self.intrinsics += other.intrinsics;
    }
}

/// Euclidean gradient of one penalty `F_ij` with respect to `(R, t, d, l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyGradient {
    pub camera: CameraGradient,
    pub point: Vector3<f64>,
}

/// Gradient blocks for every camera and point.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGradient {
    pub cameras: Vec<CameraGradient>,
    pub points: Vec<Vector3<f64>>,
}

impl StateGradient {
    pub fn zeros(num_cameras: usize, num_points: usize) -> Self {
        Self {
            cameras: vec![CameraGradient::default(); num_cameras],
            points: vec![Vector3::zeros(); num_points],
        }
    }

    /// ℓ² norm of all blocks stacked.
    pub fn norm(&self) -> f64 {
        let cams: f64 = self.cameras.iter().map(CameraGradient::norm_squared).sum();
        let pts: f64 = self.points.iter().map(|g| g.norm_squared()).sum();
        (cams + pts).sqrt()
    }
}

pub(crate) fn penalty_gradient_from(
    g: &PairGeometry,
    u: &Vector2<f64>,
    loss: &LossFunction,
) -> PenaltyGradient {
    let (_, drho) = loss.eval(g.squared_error());
    let e_cam = g.e_cam;
    let scaled = g.e_world * (drho * g.lambda);
    PenaltyGradient {
        camera: CameraGradient {
            rotation: g.v * e_cam.transpose() * (-drho * g.lambda),
            center: scaled,
            intrinsics: ray_intrinsics_row(u) * (drho * e_cam.z),
        },
        point: -scaled,
    }
}

/// Euclidean gradient of `F_ij = ½ρ(‖e‖²)`, treating `R` as an unconstrained
/// 3×3 matrix.
pub fn euclidean_gradient_penalty(
    c: &CameraState,
    l: &Vector3<f64>,
    u: &Vector2<f64>,
    loss: &LossFunction,
) -> Result<PenaltyGradient> {
    let g = PairGeometry::new(c, l, u)?;
    Ok(penalty_gradient_from(&g, u, loss))
}

/// Tangent-space projection `½G − ½R Gᵀ R` of an ambient rotation gradient.
pub fn riemannian_project_rotation(r: &Matrix3<f64>, g: &Matrix3<f64>) -> Matrix3<f64> {
    (g - r * g.transpose() * r) * 0.5
}

/// Projects the rotation block onto the tangent space at `camera`; the
/// Euclidean blocks pass through.
pub fn riemannian_project(camera: &CameraState, grad: &CameraGradient) -> CameraGradient {
    CameraGradient {
        rotation: riemannian_project_rotation(camera.rotation.matrix(), &grad.rotation),
        ..*grad
    }
}

/// Euclidean gradient of the total objective.
pub fn objective_gradient(problem: &ProblemInstance, state: &BaState) -> Result<StateGradient> {
    let mut out = StateGradient::zeros(state.cameras.len(), state.points.len());
    for (k, obs) in problem.observations.iter().enumerate() {
        let c = &state.cameras[obs.camera];
        let r = PairGeometry::with_epsilon(
            c,
            &state.points[obs.point],
            &obs.pixel,
            problem.geometry.epsilon,
        );
        if let Some(g) = problem.geometry.filter(k, r)? {
            let pg = penalty_gradient_from(&g, &obs.pixel, &problem.loss);
            out.cameras[obs.camera].accumulate(&pg.camera);
            out.points[obs.point] += pg.point;
        }
    }
    Ok(out)
}

/// Riemannian gradient of the total objective.
pub fn riemannian_gradient(problem: &ProblemInstance, state: &BaState) -> Result<StateGradient> {
    let mut grad = objective_gradient(problem, state)?;
    for (g, c) in grad.cameras.iter_mut().zip(&state.cameras) {
        *g = riemannian_project(c, g);
    }
    Ok(grad)
}

/// ℓ² norm of the stacked Riemannian gradient of the total objective.
pub fn criticality_norm(problem: &ProblemInstance, state: &BaState) -> Result<f64> {
    Ok(riemannian_gradient(problem, state)?.norm())
}
