//! Per-device majorizers of the global objective.
//!
//! A pair whose camera and point live on different devices is split into a
//! camera-only term `P` and a point-only term `Q` with `F ≤ P + Q` and
//! equality at the anchor. Each device then minimizes
//!
//! `E^α(x) = Σ_intra F + Σ_camera-side P + Σ_point-side Q + ½ξ‖x − x_anchor‖²`
//!
//! over its own variables, without looking at other devices.

use crate::error::{Error, Result, VariableKind};
use crate::geometry::{
    BaState, CameraGradient, CameraState, GeometryPolicy, LossFunction, PointState,
    ProblemInstance, StateGradient,
};
use crate::geometry::{penalty_gradient_from, undistorted_ray, PairGeometry};
use crate::runtime::partition::{DevicePlan, Partition, PlannedPair};
use nalgebra::{Vector2, Vector3};
use std::collections::BTreeMap;

/// Frozen coefficients of one crossing pair, computed at the anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCoefficients {
    /// `½ρ(s) − ½ρ'(s)s`.
    pub a: f64,
    /// `ρ'(s)`.
    pub w: f64,
    pub lambda: f64,
    /// `½Rp + ½λt + ½λl`.
    pub g: Vector3<f64>,
}

pub fn compute_pair_coefficients(
    c: &CameraState,
    l: &PointState,
    u: &Vector2<f64>,
    loss: &LossFunction,
) -> Result<PairCoefficients> {
    coefficients_with_epsilon(c, l, u, loss, crate::tolerances::DEFAULT_GEOMETRY_EPSILON)
}

fn coefficients_with_epsilon(
    c: &CameraState,
    l: &PointState,
    u: &Vector2<f64>,
    loss: &LossFunction,
    epsilon: f64,
) -> Result<PairCoefficients> {
    let geo = PairGeometry::with_epsilon(c, l, u, epsilon)?;
    let s = geo.squared_error();
    let (rho, w) = loss.eval(s);
    Ok(PairCoefficients {
        a: 0.5 * rho - 0.5 * w * s,
        w,
        lambda: geo.lambda,
        g: (geo.m + (c.center + l) * geo.lambda) * 0.5,
    })
}

/// `Rp + λt − g`, the residual inside `P`.
fn p_residual(coeff: &PairCoefficients, c: &CameraState, u: &Vector2<f64>) -> Vector3<f64> {
    let p = undistorted_ray(&c.intrinsics, u);
    c.rotation.matrix() * p + c.center * coeff.lambda - coeff.g
}

/// `P = w‖Rp + λt − g‖² + ½a`.
pub fn p_term(coeff: &PairCoefficients, c: &CameraState, u: &Vector2<f64>) -> f64 {
    coeff.w * p_residual(coeff, c, u).norm_squared() + 0.5 * coeff.a
}

/// `Q = w‖λl − g‖² + ½a`.
pub fn q_term(coeff: &PairCoefficients, l: &PointState) -> f64 {
    coeff.w * (l * coeff.lambda - coeff.g).norm_squared() + 0.5 * coeff.a
}

/// Euclidean gradient of `P` with respect to `(R, t, d)`.
pub fn p_term_gradient(coeff: &PairCoefficients, c: &CameraState, u: &Vector2<f64>) -> CameraGradient {
    let p = undistorted_ray(&c.intrinsics, u);
    let r = p_residual(coeff, c, u) * (2.0 * coeff.w);
    let r_cam = c.rotation.matrix().transpose() * r;
    CameraGradient {
        rotation: r * p.transpose(),
        center: r * coeff.lambda,
        intrinsics: crate::geometry::ray_intrinsics_row(u) * r_cam.z,
    }
}

/// Euclidean gradient of `Q` with respect to `l`.
pub fn q_term_gradient(coeff: &PairCoefficients, l: &PointState) -> Vector3<f64> {
    (l * coeff.lambda - coeff.g) * (2.0 * coeff.w * coeff.lambda)
}

/// Read access to camera and point values by global id.
pub trait VariableSource {
    fn camera(&self, id: usize) -> Option<&CameraState>;
    fn point(&self, id: usize) -> Option<&PointState>;
}

impl VariableSource for BaState {
    fn camera(&self, id: usize) -> Option<&CameraState> {
        self.cameras.get(id)
    }

    fn point(&self, id: usize) -> Option<&PointState> {
        self.points.get(id)
    }
}

/// Partial snapshot holding only some variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSnapshot {
    pub cameras: BTreeMap<usize, CameraState>,
    pub points: BTreeMap<usize, PointState>,
}

impl VariableSource for SparseSnapshot {
    fn camera(&self, id: usize) -> Option<&CameraState> {
        self.cameras.get(&id)
    }

    fn point(&self, id: usize) -> Option<&PointState> {
        self.points.get(&id)
    }
}

/// Copies of the foreign variables a device needs, aligned with
/// [`DevicePlan::foreign_cameras`] and [`DevicePlan::foreign_points`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForeignState {
    pub cameras: Vec<CameraState>,
    pub points: Vec<PointState>,
}

/// Extracts a device's owned and foreign variables from a snapshot.
pub fn gather(plan: &DevicePlan, snapshot: &impl VariableSource) -> Result<(BaState, ForeignState)> {
    let missing = |kind, id| Error::MissingNeighborState {
        device: plan.id,
        kind,
        id,
    };
    let cam = |id: &usize| snapshot.camera(*id).copied().ok_or(missing(VariableKind::Camera, *id));
    let pt = |id: &usize| snapshot.point(*id).copied().ok_or(missing(VariableKind::Point, *id));
    let owned = BaState {
        cameras: plan.cameras.iter().map(cam).collect::<Result<_>>()?,
        points: plan.points.iter().map(pt).collect::<Result<_>>()?,
    };
    let foreign = ForeignState {
        cameras: plan.foreign_cameras.iter().map(cam).collect::<Result<_>>()?,
        points: plan.foreign_points.iter().map(pt).collect::<Result<_>>()?,
    };
    Ok((owned, foreign))
}

/// Squared distance between two states of the same layout, rotations by
/// Frobenius norm.
pub fn state_distance_squared(a: &BaState, b: &BaState) -> f64 {
    let cams: f64 = a
        .cameras
        .iter()
        .zip(&b.cameras)
        .map(|(x, y)| {
            (x.rotation.matrix() - y.rotation.matrix()).norm_squared()
                + (x.center - y.center).norm_squared()
                + (x.intrinsics - y.intrinsics).norm_squared()
        })
        .sum();
    let pts: f64 = a.points.iter().zip(&b.points).map(|(x, y)| (x - y).norm_squared()).sum();
    cams + pts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingTerm {
    pub pair: PlannedPair,
    pub coeff: PairCoefficients,
}

/// One device's surrogate, frozen at an anchor snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSpec {
    pub device: usize,
    pub intra: Vec<PlannedPair>,
    pub camera_side: Vec<CrossingTerm>,
    pub point_side: Vec<CrossingTerm>,
    pub anchor: BaState,
    pub xi: f64,
    pub loss: LossFunction,
    pub geometry: GeometryPolicy,
}

impl SurrogateSpec {
    /// Freezes coefficients at `(owned, foreign)`. In lenient mode crossing
    /// pairs that are degenerate at the anchor are dropped.
    pub fn build(
        plan: &DevicePlan,
        owned: &BaState,
        foreign: &ForeignState,
        loss: LossFunction,
        geometry: GeometryPolicy,
        xi: f64,
    ) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::InvalidArgument(format!("xi must be nonnegative, got {xi}")));
        }
        let mut camera_side = Vec::with_capacity(plan.camera_side.len());
        for pair in &plan.camera_side {
            let c = &owned.cameras[pair.camera_slot];
            let l = &foreign.points[pair.point_slot];
            let r = coefficients_with_epsilon(c, l, &pair.pixel, &loss, geometry.epsilon);
            if let Some(coeff) = geometry.filter(pair.observation, r)? {
                camera_side.push(CrossingTerm { pair: *pair, coeff });
            }
        }
        let mut point_side = Vec::with_capacity(plan.point_side.len());
        for pair in &plan.point_side {
            let c = &foreign.cameras[pair.camera_slot];
            let l = &owned.points[pair.point_slot];
            let r = coefficients_with_epsilon(c, l, &pair.pixel, &loss, geometry.epsilon);
            if let Some(coeff) = geometry.filter(pair.observation, r)? {
                point_side.push(CrossingTerm { pair: *pair, coeff });
            }
        }
        Ok(Self {
            device: plan.id,
            intra: plan.intra.clone(),
            camera_side,
            point_side,
            anchor: owned.clone(),
            xi,
            loss,
            geometry,
        })
    }

    fn intra_geometry(&self, x: &BaState, pair: &PlannedPair) -> Result<Option<PairGeometry>> {
        let r = PairGeometry::with_epsilon(
            &x.cameras[pair.camera_slot],
            &x.points[pair.point_slot],
            &pair.pixel,
            self.geometry.epsilon,
        );
        self.geometry.filter(pair.observation, r)
    }

    /// Sum of intra-device penalties.
    pub fn intra_value(&self, x: &BaState) -> Result<f64> {
        let mut total = 0.0;
        for pair in &self.intra {
            if let Some(g) = self.intra_geometry(x, pair)? {
                total += 0.5 * self.loss.rho(g.squared_error());
            }
        }
        Ok(total)
    }

    pub fn crossing_value(&self, x: &BaState) -> f64 {
        let p: f64 = self
            .camera_side
            .iter()
            .map(|t| p_term(&t.coeff, &x.cameras[t.pair.camera_slot], &t.pair.pixel))
            .sum();
        let q: f64 = self
            .point_side
            .iter()
            .map(|t| q_term(&t.coeff, &x.points[t.pair.point_slot]))
            .sum();
        p + q
    }

    pub fn proximal_value(&self, x: &BaState) -> f64 {
        0.5 * self.xi * state_distance_squared(x, &self.anchor)
    }

    /// `E^α(x)`.
    pub fn evaluate(&self, x: &BaState) -> Result<f64> {
        Ok(self.intra_value(x)? + self.crossing_value(x) + self.proximal_value(x))
    }

    /// Euclidean gradient of `E^α` with respect to the owned variables.
    pub fn gradient(&self, x: &BaState) -> Result<StateGradient> {
        let mut out = StateGradient::zeros(x.cameras.len(), x.points.len());
        for pair in &self.intra {
            if let Some(g) = self.intra_geometry(x, pair)? {
                let pg = penalty_gradient_from(&g, &pair.pixel, &self.loss);
                out.cameras[pair.camera_slot].accumulate(&pg.camera);
                out.points[pair.point_slot] += pg.point;
            }
        }
        for t in &self.camera_side {
            let c = &x.cameras[t.pair.camera_slot];
            out.cameras[t.pair.camera_slot].accumulate(&p_term_gradient(&t.coeff, c, &t.pair.pixel));
        }
        for t in &self.point_side {
            out.points[t.pair.point_slot] += q_term_gradient(&t.coeff, &x.points[t.pair.point_slot]);
        }
        for ((g, c), c0) in out.cameras.iter_mut().zip(&x.cameras).zip(&self.anchor.cameras) {
            g.rotation += (c.rotation.matrix() - c0.rotation.matrix()) * self.xi;
            g.center += (c.center - c0.center) * self.xi;
            g.intrinsics += (c.intrinsics - c0.intrinsics) * self.xi;
        }
        for ((g, l), l0) in out.points.iter_mut().zip(&x.points).zip(&self.anchor.points) {
            *g += (l - l0) * self.xi;
        }
        Ok(out)
    }

    /// Surrogate gap `ΔE^α(x | anchor) = −½ξ‖x − anchor‖² + ½Σ(F − P − Q)` over
    /// crossing pairs, with `foreign` holding the neighbours' current values.
    pub fn delta(&self, x: &BaState, foreign: &ForeignState) -> Result<f64> {
        let mut gap = 0.0;
        for t in &self.camera_side {
            let c = &x.cameras[t.pair.camera_slot];
            let l = &foreign.points[t.pair.point_slot];
            gap += self.crossing_gap(t, c, l)?;
        }
        for t in &self.point_side {
            let c = &foreign.cameras[t.pair.camera_slot];
            let l = &x.points[t.pair.point_slot];
            gap += self.crossing_gap(t, c, l)?;
        }
        Ok(0.5 * gap - self.proximal_value(x))
    }

    fn crossing_gap(&self, t: &CrossingTerm, c: &CameraState, l: &PointState) -> Result<f64> {
        let r = PairGeometry::with_epsilon(c, l, &t.pair.pixel, self.geometry.epsilon);
        let f = match self.geometry.filter(t.pair.observation, r)? {
            Some(g) => 0.5 * self.loss.rho(g.squared_error()),
            None => return Ok(0.0),
        };
        // Majorization makes the gap non-positive; a positive value is rounding.
        Ok((f - p_term(&t.coeff, c, &t.pair.pixel) - q_term(&t.coeff, l)).min(0.0))
    }

    /// Number of scalars held for crossing-pair coefficients.
    pub fn coefficient_floats(&self) -> usize {
        6 * (self.camera_side.len() + self.point_side.len())
    }
}

/// Builds device `device`'s surrogate anchored at `snapshot`.
pub fn build_surrogate(
    problem: &ProblemInstance,
    partition: &Partition,
    snapshot: &impl VariableSource,
    device: usize,
    xi: f64,
) -> Result<SurrogateSpec> {
    let plan = &partition.devices[device];
    let (owned, foreign) = gather(plan, snapshot)?;
    SurrogateSpec::build(plan, &owned, &foreign, problem.loss, problem.geometry, xi)
}

pub fn evaluate_surrogate(spec: &SurrogateSpec, x_alpha: &BaState) -> Result<f64> {
    spec.evaluate(x_alpha)
}

pub fn surrogate_gradient(spec: &SurrogateSpec, x_alpha: &BaState) -> Result<StateGradient> {
    spec.gradient(x_alpha)
}

/// `ΔE^α(x | anchor)` evaluated from global snapshots.
pub fn delta_e(
    problem: &ProblemInstance,
    partition: &Partition,
    device: usize,
    x: &impl VariableSource,
    anchor: &impl VariableSource,
    xi: f64,
) -> Result<f64> {
    let spec = build_surrogate(problem, partition, anchor, device, xi)?;
    let (owned, foreign) = gather(&partition.devices[device], x)?;
    spec.delta(&owned, &foreign)
}
