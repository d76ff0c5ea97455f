//! Camera and point states, the ray-space reprojection error and the global
//! objective.
//!
//! A camera is `c = (R, t, d)` where `R` maps camera-frame directions to the
//! world frame, `t` is the camera center and `d = (f, f·k1, f·k2)`. An
//! observation `u` (centered pixels) defines the undistorted ray
//! `p = (u_x, u_y, d1 + d2‖u‖² + d3‖u‖⁴)`. The residual is the component of
//! `p` orthogonal to the camera-frame direction `Rᵀ(l − t)` of the point.

mod gradient;
mod loss;
mod rotation;

pub use gradient::{
    criticality_norm, euclidean_gradient_penalty, objective_gradient, riemannian_gradient,
    riemannian_project, riemannian_project_rotation, CameraGradient, PenaltyGradient,
    StateGradient,
};
pub(crate) use gradient::penalty_gradient_from;
pub use loss::{robust_loss, LossFunction};
pub use rotation::{hat, RotationMatrix};

use crate::error::{Error, Result};
use crate::tolerances::DEFAULT_GEOMETRY_EPSILON;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub type PointState = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraState {
    pub rotation: RotationMatrix,
    pub center: Vector3<f64>,
    pub intrinsics: Vector3<f64>,
}

impl CameraState {
    pub fn new(rotation: RotationMatrix, center: Vector3<f64>, intrinsics: Vector3<f64>) -> Self {
        if intrinsics.x <= 0.0 {
            log::warn!("camera with non-positive focal length {}", intrinsics.x);
        }
        Self {
            rotation,
            center,
            intrinsics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub camera: usize,
    pub point: usize,
    pub pixel: Vector2<f64>,
}

/// How pairs violating `‖l − t‖ > ε` are handled by aggregate evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryPolicy {
    pub epsilon: f64,
    /// Raise [`Error::DegenerateGeometry`] instead of dropping the pair.
    pub strict: bool,
}

impl Default for GeometryPolicy {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_GEOMETRY_EPSILON,
            strict: false,
        }
    }
}

impl GeometryPolicy {
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::default()
        }
    }

    /// Decides what to do with a failed pair evaluation: `Ok(None)` drops it.
    pub(crate) fn filter<T>(&self, k: usize, r: Result<T>) -> Result<Option<T>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(e @ Error::DegenerateGeometry { .. }) => {
                let e = e.at_observation(k);
                if self.strict {
                    Err(e)
                } else {
                    log::warn!("dropping pair: {e}");
                    Ok(None)
                }
            }
            Err(e) => Err(e),
        }
    }
}

/// Camera and point variables of a whole problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaState {
    pub cameras: Vec<CameraState>,
    pub points: Vec<PointState>,
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub cameras: Vec<CameraState>,
    pub points: Vec<PointState>,
    pub observations: Vec<Observation>,
    pub loss: LossFunction,
    pub geometry: GeometryPolicy,
}

impl ProblemInstance {
    /// Builds a problem, checking index ranges and pair uniqueness.
    pub fn new(
        cameras: Vec<CameraState>,
        points: Vec<PointState>,
        observations: Vec<Observation>,
        loss: LossFunction,
    ) -> Result<Self> {
        let problem = Self {
            cameras,
            points,
            observations,
            loss,
            geometry: GeometryPolicy::default(),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn num_cameras(&self) -> usize {
        self.cameras.len()
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn state(&self) -> BaState {
        BaState {
            cameras: self.cameras.clone(),
            points: self.points.clone(),
        }
    }

    pub fn with_state(mut self, state: BaState) -> Self {
        self.cameras = state.cameras;
        self.points = state.points;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.cameras.len(), self.points.len());
        let mut seen = std::collections::HashSet::with_capacity(self.observations.len());
        let mut cam_used = vec![false; m];
        let mut pt_used = vec![false; n];
        for (k, obs) in self.observations.iter().enumerate() {
            if obs.camera >= m || obs.point >= n {
                return Err(Error::InvalidArgument(format!(
                    "observation {k} references camera {} / point {} out of range",
                    obs.camera, obs.point
                )));
            }
            if !seen.insert((obs.camera, obs.point)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate observation of point {} by camera {}",
                    obs.point, obs.camera
                )));
            }
            if !(obs.pixel.x.is_finite() && obs.pixel.y.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "observation {k} has a non-finite pixel"
                )));
            }
            cam_used[obs.camera] = true;
            pt_used[obs.point] = true;
        }
        let idle_cams = cam_used.iter().filter(|u| !**u).count();
        let idle_pts = pt_used.iter().filter(|u| !**u).count();
        if idle_cams + idle_pts > 0 {
            log::warn!("{idle_cams} cameras and {idle_pts} points have no observations");
        }
        Ok(())
    }

    /// Checks `‖l_j − t_i‖ > ε` for every observation of `state`.
    pub fn check_separation(&self, state: &BaState) -> Result<()> {
        for (k, obs) in self.observations.iter().enumerate() {
            let dist = (state.points[obs.point] - state.cameras[obs.camera].center).norm();
            if dist <= self.geometry.epsilon {
                return Err(Error::DegenerateGeometry {
                    observation: Some(k),
                    distance: dist,
                });
            }
        }
        Ok(())
    }
}

/// Returns `p = (u_x, u_y, d1 + d2‖u‖² + d3‖u‖⁴)`.
pub fn undistorted_ray(d: &Vector3<f64>, u: &Vector2<f64>) -> Vector3<f64> {
    let r2 = u.norm_squared();
    Vector3::new(u.x, u.y, d.x + r2 * (d.y + r2 * d.z))
}

/// Partial derivative of the third ray component with respect to `d`.
pub(crate) fn ray_intrinsics_row(u: &Vector2<f64>) -> Vector3<f64> {
    let r2 = u.norm_squared();
    Vector3::new(1.0, r2, r2 * r2)
}

fn separation(t: &Vector3<f64>, l: &Vector3<f64>, epsilon: f64) -> Result<Vector3<f64>> {
    let v = l - t;
    let dist = v.norm();
    if dist <= epsilon || !dist.is_finite() {
        return Err(Error::DegenerateGeometry {
            observation: None,
            distance: dist,
        });
    }
    Ok(v)
}

/// Least-squares scale `λ = (l−t)ᵀRp / ‖l−t‖²` aligning `λRᵀ(l−t)` with `p`.
pub fn optimal_scale(
    r: &RotationMatrix,
    t: &Vector3<f64>,
    l: &Vector3<f64>,
    p: &Vector3<f64>,
) -> Result<f64> {
    let v = separation(t, l, DEFAULT_GEOMETRY_EPSILON)?;
    Ok(v.dot(&(r.matrix() * p)) / v.norm_squared())
}

/// Ray-space quantities of one observation.
///
/// The residual is formed in the camera frame, `e = p − λRᵀv`, so that the
/// value is the literal formula even for a non-orthogonal `R`; `e_world = Re`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairGeometry {
    /// `R p`.
    pub m: Vector3<f64>,
    /// `l − t`.
    pub v: Vector3<f64>,
    pub lambda: f64,
    pub e_cam: Vector3<f64>,
    pub e_world: Vector3<f64>,
}

impl PairGeometry {
    pub fn new(c: &CameraState, l: &Vector3<f64>, u: &Vector2<f64>) -> Result<Self> {
        Self::with_epsilon(c, l, u, DEFAULT_GEOMETRY_EPSILON)
    }

    pub fn with_epsilon(
        c: &CameraState,
        l: &Vector3<f64>,
        u: &Vector2<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let v = separation(&c.center, l, epsilon)?;
        let r = c.rotation.matrix();
        let p = undistorted_ray(&c.intrinsics, u);
        let m = r * p;
        let lambda = v.dot(&m) / v.norm_squared();
        let e_cam = p - r.tr_mul(&v) * lambda;
        Ok(Self {
            m,
            v,
            lambda,
            e_cam,
            e_world: r * e_cam,
        })
    }

    pub fn squared_error(&self) -> f64 {
        self.e_cam.norm_squared()
    }
}

/// `e = (I − Rᵀvvᵀ R/‖v‖²) p` with `v = l − t`, in the camera frame.
pub fn reprojection_error(
    c: &CameraState,
    l: &Vector3<f64>,
    u: &Vector2<f64>,
) -> Result<Vector3<f64>> {
    Ok(PairGeometry::new(c, l, u)?.e_cam)
}

/// `F_ij = ½ ρ(‖e‖²)`.
pub fn penalty(
    c: &CameraState,
    l: &Vector3<f64>,
    u: &Vector2<f64>,
    loss: &LossFunction,
) -> Result<f64> {
    let s = PairGeometry::new(c, l, u)?.squared_error();
    Ok(0.5 * loss.rho(s))
}

/// `F(x) = Σ F_ij` over all observations.
pub fn total_objective(problem: &ProblemInstance, state: &BaState) -> Result<f64> {
    let mut total = 0.0;
    for (k, obs) in problem.observations.iter().enumerate() {
        let r = PairGeometry::with_epsilon(
            &state.cameras[obs.camera],
            &state.points[obs.point],
            &obs.pixel,
            problem.geometry.epsilon,
        );
        if let Some(g) = problem.geometry.filter(k, r)? {
            total += 0.5 * problem.loss.rho(g.squared_error());
        }
    }
    Ok(total)
}

/// Summary of conventional pixel residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelErrorStats {
    pub mean: f64,
    pub counted: usize,
    pub behind_camera: usize,
}

/// Pinhole projection with radial distortion `1 + k1 r² + k2 r⁴`, where
/// `k1 = d2/d1` and `k2 = d3/d1`. Returns `None` for points behind the camera.
pub fn project_pixel(c: &CameraState, l: &Vector3<f64>) -> Option<Vector2<f64>> {
    let q = c.rotation.matrix().transpose() * (l - c.center);
    if q.z <= 0.0 {
        return None;
    }
    let d = &c.intrinsics;
    let n = Vector2::new(q.x / q.z, q.y / q.z);
    let r2 = n.norm_squared();
    let (k1, k2) = (d.y / d.x, d.z / d.x);
    Some(n * (d.x * (1.0 + r2 * (k1 + r2 * k2))))
}

/// Mean pixel distance between projected points and observations.
///
/// Points behind their camera are counted separately; in strict mode they
/// raise [`Error::PointBehindCamera`], otherwise they are excluded.
pub fn pixel_error_stats(problem: &ProblemInstance, state: &BaState) -> Result<PixelErrorStats> {
    let mut sum = 0.0;
    let mut counted = 0;
    let mut behind = 0;
    for obs in &problem.observations {
        match project_pixel(&state.cameras[obs.camera], &state.points[obs.point]) {
            Some(px) => {
                sum += (px - obs.pixel).norm();
                counted += 1;
            }
            None if problem.geometry.strict => {
                return Err(Error::PointBehindCamera {
                    camera: obs.camera,
                    point: obs.point,
                })
            }
            None => behind += 1,
        }
    }
    let mean = if counted == 0 { 0.0 } else { sum / counted as f64 };
    Ok(PixelErrorStats {
        mean,
        counted,
        behind_camera: behind,
    })
}

pub fn mean_pixel_reprojection_error(problem: &ProblemInstance, state: &BaState) -> Result<f64> {
    pixel_error_stats(problem, state).map(|s| s.mean)
}

/// Mean of `‖e_ij‖` in ray space.
pub fn mean_ray_error(problem: &ProblemInstance, state: &BaState) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, obs) in problem.observations.iter().enumerate() {
        let r = PairGeometry::with_epsilon(
            &state.cameras[obs.camera],
            &state.points[obs.point],
            &obs.pixel,
            problem.geometry.epsilon,
        );
        if let Some(g) = problem.geometry.filter(k, r)? {
            sum += g.e_cam.norm();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_camera(rng: &mut ChaCha8Rng) -> CameraState {
        let w = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        CameraState {
            rotation: RotationMatrix::exp(&w),
            center: Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ),
            intrinsics: Vector3::new(
                rng.random_range(0.5..2.0),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.1..0.1),
            ),
        }
    }

    fn random_vec3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-s..s),
            rng.random_range(-s..s),
            rng.random_range(-s..s),
        )
    }

    fn random_pixel(rng: &mut ChaCha8Rng) -> Vector2<f64> {
        Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    #[test]
    fn ray_examples() {
        let p = undistorted_ray(&Vector3::new(1.0, 0.0, 0.0), &Vector2::zeros());
        assert_eq!(p, Vector3::new(0.0, 0.0, 1.0));
        let p = undistorted_ray(&Vector3::new(2.0, 1.0, 0.0), &Vector2::new(1.0, 1.0));
        assert_eq!(p, Vector3::new(1.0, 1.0, 4.0));
    }

    #[test]
    fn ray_matches_power_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d = random_vec3(&mut rng, 5.0);
            let u = random_pixel(&mut rng) * 3.0;
            let n2 = u.x * u.x + u.y * u.y;
            let expected = d.x + d.y * n2 + d.z * n2.powi(2);
            let got = undistorted_ray(&d, &u).z;
            assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn scale_examples() {
        let r = RotationMatrix::identity();
        let t = Vector3::zeros();
        let l = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(optimal_scale(&r, &t, &l, &Vector3::new(0.0, 0.0, 2.0)).unwrap(), 2.0);
        assert_eq!(optimal_scale(&r, &t, &l, &Vector3::new(1.0, 0.0, 0.0)).unwrap(), 0.0);
        assert!(matches!(
            optimal_scale(&r, &t, &t, &l),
            Err(Error::DegenerateGeometry { .. })
        ));
    }

    /// Minimizes a strictly convex 1-D function with a coarse grid followed by
    /// golden-section refinement.
    fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 200;
        let step = (hi - lo) / n as f64;
        let best = (0..=n)
            .map(|i| lo + step * i as f64)
            .min_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
            .unwrap();
        let (mut a, mut b) = (best - step, best + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn scale_matches_line_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let c = random_camera(&mut rng);
            let l = random_vec3(&mut rng, 3.0) + Vector3::new(0.0, 0.0, 7.0);
            let p = undistorted_ray(&c.intrinsics, &random_pixel(&mut rng));
            let dir = c.rotation.matrix().transpose() * (l - c.center);
            let lam = optimal_scale(&c.rotation, &c.center, &l, &p).unwrap();
            let bound = 2.0 * p.norm() / dir.norm() + 1.0;
            let oracle = golden_section(|x| (p - dir * x).norm_squared(), -bound, bound);
            assert!(
                (lam - oracle).abs() <= 1e-6 * lam.abs().max(1e-3),
                "{lam} vs {oracle}"
            );
        }
    }

    #[test]
    fn error_examples() {
        let c = CameraState {
            rotation: RotationMatrix::identity(),
            center: Vector3::zeros(),
            intrinsics: Vector3::new(1.0, 0.0, 0.0),
        };
        let e = reprojection_error(&c, &Vector3::new(0.0, 0.0, 3.0), &Vector2::zeros()).unwrap();
        assert_eq!(e, Vector3::zeros());
        // p = (1, 0, 1) is orthogonal to the direction (-1, 0, 1).
        let e =
            reprojection_error(&c, &Vector3::new(-1.0, 0.0, 1.0), &Vector2::new(1.0, 0.0)).unwrap();
        assert!((e - Vector3::new(1.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn error_composes_from_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let c = random_camera(&mut rng);
            let l = random_vec3(&mut rng, 5.0);
            let u = random_pixel(&mut rng);
            let p = undistorted_ray(&c.intrinsics, &u);
            let lam = optimal_scale(&c.rotation, &c.center, &l, &p).unwrap();
            let oracle = p - c.rotation.matrix().transpose() * (l - c.center) * lam;
            let e = reprojection_error(&c, &l, &u).unwrap();
            assert!((e - oracle).norm() <= 1e-10 * (1.0 + oracle.norm()));
            assert!(e.norm() <= p.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn penalty_examples() {
        let c = CameraState {
            rotation: RotationMatrix::identity(),
            center: Vector3::zeros(),
            intrinsics: Vector3::new(1.0, 0.0, 0.0),
        };
        let loss = LossFunction::Trivial;
        assert_eq!(
            penalty(&c, &Vector3::new(0.0, 0.0, 2.0), &Vector2::zeros(), &loss).unwrap(),
            0.0
        );
        // p = (1, 0, 1) ⟂ (-1, 0, 1): e = p, ‖e‖² = 2.
        let f = penalty(&c, &Vector3::new(-1.0, 0.0, 1.0), &Vector2::new(1.0, 0.0), &loss).unwrap();
        assert!((f - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let huber = LossFunction::Huber { delta: 0.3 };
        for _ in 0..100 {
            let c = random_camera(&mut rng);
            let l = random_vec3(&mut rng, 5.0);
            let u = random_pixel(&mut rng);
            let e = reprojection_error(&c, &l, &u).unwrap();
            let (rho, _) = robust_loss(&huber, e.norm_squared()).unwrap();
            let f = penalty(&c, &l, &u, &huber).unwrap();
            assert!((f - 0.5 * rho).abs() <= 1e-12 * (1.0 + rho));
        }
    }

    fn small_problem(rng: &mut ChaCha8Rng) -> ProblemInstance {
        let cameras: Vec<_> = (0..3).map(|_| random_camera(rng)).collect();
        let points: Vec<_> = (0..5)
            .map(|_| random_vec3(rng, 2.0) + Vector3::new(0.0, 0.0, 9.0))
            .collect();
        let mut observations = Vec::new();
        for i in 0..3 {
            for j in 0..5 {
                if (i + j) % 4 != 3 {
                    observations.push(Observation {
                        camera: i,
                        point: j,
                        pixel: random_pixel(rng),
                    });
                }
            }
        }
        ProblemInstance::new(cameras, points, observations, LossFunction::Trivial).unwrap()
    }

    #[test]
    fn objective_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut problem = small_problem(&mut rng);
        let state = problem.state();
        let total = total_objective(&problem, &state).unwrap();
        // Brute force: recompute each residual from scratch.
        let mut oracle = 0.0;
        for o in &problem.observations {
            let c = &state.cameras[o.camera];
            let p = undistorted_ray(&c.intrinsics, &o.pixel);
            let dir = c.rotation.matrix().transpose() * (state.points[o.point] - c.center);
            let e = p - dir * (dir.dot(&p) / dir.norm_squared());
            oracle += 0.5 * e.norm_squared();
        }
        assert!((total - oracle).abs() <= 1e-12 * oracle);

        problem.observations.clear();
        assert_eq!(total_objective(&problem, &state).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_pairs_follow_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut problem = small_problem(&mut rng);
        let mut state = problem.state();
        let o = problem.observations[0];
        state.points[o.point] = state.cameras[o.camera].center;
        let lenient = total_objective(&problem, &state).unwrap();
        assert!(lenient.is_finite());
        problem.geometry.strict = true;
        match total_objective(&problem, &state) {
            Err(Error::DegenerateGeometry { observation, .. }) => assert_eq!(observation, Some(0)),
            other => panic!("expected degenerate geometry, got {other:?}"),
        }
    }

    #[test]
    fn projector_property_and_gauge_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let c = random_camera(&mut rng);
            let l = random_vec3(&mut rng, 5.0);
            let u = random_pixel(&mut rng);
            let p = undistorted_ray(&c.intrinsics, &u);
            let dir = c.rotation.matrix().transpose() * (l - c.center);
            let e = reprojection_error(&c, &l, &u).unwrap();
            assert!(e.dot(&dir).abs() <= 1e-9 * p.norm() * (l - c.center).norm());
            for _ in 0..20 {
                let other: f64 = rng.random_range(-10.0..10.0);
                assert!(e.norm_squared() <= (p - dir * other).norm_squared() * (1.0 + 1e-12));
            }
        }
        for _ in 0..100 {
            let c = random_camera(&mut rng);
            let l = random_vec3(&mut rng, 5.0);
            let u = random_pixel(&mut rng);
            let g = RotationMatrix::exp(&random_vec3(&mut rng, 3.0));
            let shift = random_vec3(&mut rng, 10.0);
            let moved = CameraState {
                rotation: g.compose(&c.rotation),
                center: g.matrix() * c.center + shift,
                intrinsics: c.intrinsics,
            };
            let l2 = g.matrix() * l + shift;
            let a = reprojection_error(&c, &l, &u).unwrap().norm();
            let b = reprojection_error(&moved, &l2, &u).unwrap().norm();
            assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }

    #[test]
    fn pixel_error_of_exact_projection_is_zero() {
        let c = CameraState {
            rotation: RotationMatrix::identity(),
            center: Vector3::zeros(),
            intrinsics: Vector3::new(500.0, 0.0, 0.0),
        };
        let l = Vector3::new(0.2, -0.1, 4.0);
        let px = project_pixel(&c, &l).unwrap();
        let problem = ProblemInstance::new(
            vec![c],
            vec![l],
            vec![Observation {
                camera: 0,
                point: 0,
                pixel: px,
            }],
            LossFunction::Trivial,
        )
        .unwrap();
        let stats = pixel_error_stats(&problem, &problem.state()).unwrap();
        assert_eq!(stats.mean, 0.0);
        // Without distortion the ray residual is zero too.
        assert!(reprojection_error(&c, &l, &px).unwrap().norm() < 1e-12);
        let behind = problem.clone().with_state(BaState {
            cameras: vec![c],
            points: vec![-l],
        });
        let stats = pixel_error_stats(&behind, &behind.state()).unwrap();
        assert_eq!((stats.counted, stats.behind_camera), (0, 1));
    }
}
