//! Gauss-Newton normal equations of a device surrogate and their damped
//! Schur-complement solve.

use crate::error::{Error, Result};
use crate::geometry::{hat, ray_intrinsics_row, undistorted_ray, BaState, PairGeometry};
use crate::surrogate::SurrogateSpec;
use nalgebra::{Cholesky, DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Matrix9x3 = SMatrix<f64, 9, 3>;
pub type Matrix3x9 = SMatrix<f64, 3, 9>;
pub type Vector9 = SVector<f64, 9>;

/// Tangent step: per camera `(ω, δt, δd)`, per point `δl`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub cameras: Vec<Vector9>,
    pub points: Vec<Vector3<f64>>,
}

impl Tangent {
    pub fn zeros(num_cameras: usize, num_points: usize) -> Self {
        Self {
            cameras: vec![Vector9::zeros(); num_cameras],
            points: vec![Vector3::zeros(); num_points],
        }
    }

    pub fn norm(&self) -> f64 {
        let c: f64 = self.cameras.iter().map(|v| v.norm_squared()).sum();
        let p: f64 = self.points.iter().map(|v| v.norm_squared()).sum();
        (c + p).sqrt()
    }

    pub fn amax(&self) -> f64 {
        let c = self.cameras.iter().fold(0.0f64, |m, v| m.max(v.amax()));
        self.points.iter().fold(c, |m, v| m.max(v.amax()))
    }
}

/// Camera-point coupling block `J_cᵀ J_p` of one intra-device pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub camera: usize,
    pub point: usize,
    pub block: Matrix9x3,
}

/// `JᵀJ` and `Jᵀr` of the IRLS-weighted residual vector, in block form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub camera_blocks: Vec<Matrix9>,
    pub point_blocks: Vec<Matrix3<f64>>,
    pub couplings: Vec<Coupling>,
    pub camera_gradient: Vec<Vector9>,
    pub point_gradient: Vec<Vector3<f64>>,
}

impl NormalEquations {
    fn zeros(nc: usize, np: usize) -> Self {
        Self {
            camera_blocks: vec![Matrix9::zeros(); nc],
            point_blocks: vec![Matrix3::zeros(); np],
            couplings: Vec::new(),
            camera_gradient: vec![Vector9::zeros(); nc],
            point_gradient: vec![Vector3::zeros(); np],
        }
    }

    /// Largest absolute entry of `Jᵀr`.
    pub fn gradient_amax(&self) -> f64 {
        let c = self.camera_gradient.iter().fold(0.0f64, |m, v| m.max(v.amax()));
        self.point_gradient.iter().fold(c, |m, v| m.max(v.amax()))
    }

    fn add_camera(&mut self, i: usize, j: &Matrix3x9, r: &Vector3<f64>) {
        self.camera_blocks[i] += j.transpose() * j;
        self.camera_gradient[i] += j.transpose() * r;
    }

    fn add_point(&mut self, k: usize, j: &Matrix3<f64>, r: &Vector3<f64>) {
        self.point_blocks[k] += j.transpose() * j;
        self.point_gradient[k] += j.transpose() * r;
    }

    /// Dense `(JᵀJ, Jᵀr)` in the variable order cameras then points.
    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let nc = self.camera_blocks.len();
        let n = 9 * nc + 3 * self.point_blocks.len();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for (i, b) in self.camera_blocks.iter().enumerate() {
            h.fixed_view_mut::<9, 9>(9 * i, 9 * i).copy_from(b);
            g.fixed_rows_mut::<9>(9 * i).copy_from(&self.camera_gradient[i]);
        }
        for (k, b) in self.point_blocks.iter().enumerate() {
            let o = 9 * nc + 3 * k;
            h.fixed_view_mut::<3, 3>(o, o).copy_from(b);
            g.fixed_rows_mut::<3>(o).copy_from(&self.point_gradient[k]);
        }
        for c in &self.couplings {
            let (a, b) = (9 * c.camera, 9 * nc + 3 * c.point);
            let mut v = h.fixed_view_mut::<9, 3>(a, b);
            v += c.block;
            let mut vt = h.fixed_view_mut::<3, 9>(b, a);
            vt += c.block.transpose();
        }
        (h, g)
    }
}

/// Jacobian of `Π_v m` with respect to `v`, where `Π_v = I − vvᵀ/‖v‖²`.
fn projector_jacobian_v(v: &Vector3<f64>, m: &Vector3<f64>) -> Matrix3<f64> {
    let n2 = v.norm_squared();
    let vm = v.dot(m);
    -(Matrix3::identity() * vm + v * m.transpose()) / n2 + v * v.transpose() * (2.0 * vm / (n2 * n2))
}

fn projector(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() - v * v.transpose() / v.norm_squared()
}

/// Camera-block Jacobian of a world-frame vector `y = R p(d)` passed through
/// `a`: columns for `ω` (left perturbation), `t` (zero here) and `d`.
fn rotation_and_intrinsics_columns(
    a: &Matrix3<f64>,
    m: &Vector3<f64>,
    r: &Matrix3<f64>,
    row: &Vector3<f64>,
) -> (Matrix3<f64>, Matrix3<f64>) {
    let d_omega = -(a * hat(m));
    let d_d = (a * r.column(2)) * row.transpose();
    (d_omega, d_d)
}

fn camera_jacobian(omega: Matrix3<f64>, center: Matrix3<f64>, intrinsics: Matrix3<f64>) -> Matrix3x9 {
    let mut j = Matrix3x9::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&omega);
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&center);
    j.fixed_view_mut::<3, 3>(0, 6).copy_from(&intrinsics);
    j
}

/// Assembles the normal equations of `E^α` at `x`. Intra pairs use the
/// world-frame residual `√w·Re` with IRLS weight `w = ρ'(‖e‖²)`.
pub fn linearize_surrogate(spec: &SurrogateSpec, x: &BaState) -> Result<NormalEquations> {
    let mut neq = NormalEquations::zeros(x.cameras.len(), x.points.len());

    for pair in &spec.intra {
        let c = &x.cameras[pair.camera_slot];
        let l = &x.points[pair.point_slot];
        let r = PairGeometry::with_epsilon(c, l, &pair.pixel, spec.geometry.epsilon);
        let Some(geo) = spec.geometry.filter(pair.observation, r)? else {
            continue;
        };
        let (_, w) = spec.loss.eval(geo.squared_error());
        let sw = w.sqrt();
        let res = geo.e_world * sw;
        let pi = projector(&geo.v) * sw;
        let dv = projector_jacobian_v(&geo.v, &geo.m) * sw;
        let (d_omega, d_d) =
            rotation_and_intrinsics_columns(&pi, &geo.m, c.rotation.matrix(), &ray_intrinsics_row(&pair.pixel));
        let jc = camera_jacobian(d_omega, -dv, d_d);
        neq.add_camera(pair.camera_slot, &jc, &res);
        neq.add_point(pair.point_slot, &dv, &res);
        neq.couplings.push(Coupling {
            camera: pair.camera_slot,
            point: pair.point_slot,
            block: jc.transpose() * dv,
        });
    }

    for t in &spec.camera_side {
        let c = &x.cameras[t.pair.camera_slot];
        let s = (2.0 * t.coeff.w).sqrt();
        let rot = c.rotation.matrix();
        let m = rot * undistorted_ray(&c.intrinsics, &t.pair.pixel);
        let res = (m + c.center * t.coeff.lambda - t.coeff.g) * s;
        let a = Matrix3::identity() * s;
        let (d_omega, d_d) =
            rotation_and_intrinsics_columns(&a, &m, rot, &ray_intrinsics_row(&t.pair.pixel));
        let jc = camera_jacobian(d_omega, a * t.coeff.lambda, d_d);
        neq.add_camera(t.pair.camera_slot, &jc, &res);
    }

    for t in &spec.point_side {
        let l = &x.points[t.pair.point_slot];
        let s = (2.0 * t.coeff.w).sqrt();
        let res = (l * t.coeff.lambda - t.coeff.g) * s;
        let j = Matrix3::identity() * (s * t.coeff.lambda);
        neq.add_point(t.pair.point_slot, &j, &res);
    }

    if spec.xi > 0.0 {
        let sx = spec.xi.sqrt();
        for (i, (c, c0)) in x.cameras.iter().zip(&spec.anchor.cameras).enumerate() {
            let rot = c.rotation.matrix();
            let diff = (rot - c0.rotation.matrix()) * sx;
            // Column k of the rotation Jacobian is vec(hat(e_k) R).
            let mut block = Matrix9::zeros();
            let mut grad = Vector9::zeros();
            let cols: [Matrix3<f64>; 3] =
                std::array::from_fn(|k| hat(&Vector3::ith(k, 1.0)) * rot * sx);
            for a in 0..3 {
                grad[a] = cols[a].component_mul(&diff).sum();
                for b in 0..3 {
                    block[(a, b)] = cols[a].component_mul(&cols[b]).sum();
                }
            }
            for k in 3..9 {
                block[(k, k)] = spec.xi;
            }
            grad.fixed_rows_mut::<3>(3).copy_from(&((c.center - c0.center) * spec.xi));
            grad.fixed_rows_mut::<3>(6).copy_from(&((c.intrinsics - c0.intrinsics) * spec.xi));
            neq.camera_blocks[i] += block;
            neq.camera_gradient[i] += grad;
        }
        for (k, (l, l0)) in x.points.iter().zip(&spec.anchor.points).enumerate() {
            neq.point_blocks[k] += Matrix3::identity() * spec.xi;
            neq.point_gradient[k] += (l - l0) * spec.xi;
        }
    }
    Ok(neq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DampingMode {
    /// `μ` added to the diagonal of the column-scaled system.
    #[default]
    Levenberg,
    /// Diagonal of the column-scaled system multiplied by `1 + μ`.
    Marquardt,
}

/// Column scales `1/(1 + √H_kk)`.
fn column_scales<const N: usize>(block: &SMatrix<f64, N, N>) -> SVector<f64, N> {
    SVector::from_fn(|k, _| 1.0 / (1.0 + block[(k, k)].max(0.0).sqrt()))
}

fn damp<const N: usize>(block: &mut SMatrix<f64, N, N>, mu: f64, mode: DampingMode) {
    for k in 0..N {
        match mode {
            DampingMode::Levenberg => block[(k, k)] += mu,
            DampingMode::Marquardt => block[(k, k)] *= 1.0 + mu,
        }
    }
}

/// Column-scaled, damped system ready for elimination.
struct ScaledSystem {
    cam_scale: Vec<Vector9>,
    pt_scale: Vec<Vector3<f64>>,
    cam_blocks: Vec<Matrix9>,
    pt_blocks: Vec<Matrix3<f64>>,
    couplings: Vec<Matrix9x3>,
    cam_rhs: Vec<Vector9>,
    pt_rhs: Vec<Vector3<f64>>,
}

fn scale_and_damp(neq: &NormalEquations, mu: f64, mode: DampingMode) -> ScaledSystem {
    let cam_scale: Vec<Vector9> = neq.camera_blocks.iter().map(column_scales).collect();
    let pt_scale: Vec<Vector3<f64>> = neq.point_blocks.iter().map(column_scales).collect();
    let cam_blocks = neq
        .camera_blocks
        .iter()
        .zip(&cam_scale)
        .map(|(b, s)| {
            let mut m = Matrix9::from_fn(|i, j| b[(i, j)] * s[i] * s[j]);
            damp(&mut m, mu, mode);
            m
        })
        .collect();
    let pt_blocks = neq
        .point_blocks
        .iter()
        .zip(&pt_scale)
        .map(|(b, s)| {
            let mut m = Matrix3::from_fn(|i, j| b[(i, j)] * s[i] * s[j]);
            damp(&mut m, mu, mode);
            m
        })
        .collect();
    let couplings = neq
        .couplings
        .iter()
        .map(|c| {
            let (sc, sp) = (&cam_scale[c.camera], &pt_scale[c.point]);
            Matrix9x3::from_fn(|i, j| c.block[(i, j)] * sc[i] * sp[j])
        })
        .collect();
    let cam_rhs = neq
        .camera_gradient
        .iter()
        .zip(&cam_scale)
        .map(|(g, s)| -g.component_mul(s))
        .collect();
    let pt_rhs = neq
        .point_gradient
        .iter()
        .zip(&pt_scale)
        .map(|(g, s)| -g.component_mul(s))
        .collect();
    ScaledSystem {
        cam_scale,
        pt_scale,
        cam_blocks,
        pt_blocks,
        couplings,
        cam_rhs,
        pt_rhs,
    }
}

/// Solves `(C H C + damping) y = −C g` by eliminating points, factorizing
/// the reduced camera system densely, and back-substituting; returns
/// `δ = C y`.
pub fn solve_damped(neq: &NormalEquations, mu: f64, mode: DampingMode) -> Result<Tangent> {
    let sys = scale_and_damp(neq, mu, mode);
    let nc = sys.cam_blocks.len();
    let np = sys.pt_blocks.len();

    let mut pt_inv = Vec::with_capacity(np);
    for b in &sys.pt_blocks {
        pt_inv.push(b.try_inverse().filter(|m| m.iter().all(|v| v.is_finite())).ok_or(Error::LinearSolveFailure)?);
    }
    let mut by_point: Vec<Vec<usize>> = vec![Vec::new(); np];
    for (k, c) in neq.couplings.iter().enumerate() {
        by_point[c.point].push(k);
    }

    let n = 9 * nc;
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, b) in sys.cam_blocks.iter().enumerate() {
        s.fixed_view_mut::<9, 9>(9 * i, 9 * i).copy_from(b);
        rhs.fixed_rows_mut::<9>(9 * i).copy_from(&sys.cam_rhs[i]);
    }
    for (j, list) in by_point.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        let ainv = &pt_inv[j];
        let wa: Vec<Matrix9x3> = list.iter().map(|&k| sys.couplings[k] * ainv).collect();
        for (a, &ka) in list.iter().enumerate() {
            let ia = neq.couplings[ka].camera;
            let mut r = rhs.fixed_rows_mut::<9>(9 * ia);
            r -= wa[a] * sys.pt_rhs[j];
            for &kb in list {
                let ib = neq.couplings[kb].camera;
                let mut blk = s.fixed_view_mut::<9, 9>(9 * ia, 9 * ib);
                blk -= wa[a] * sys.couplings[kb].transpose();
            }
        }
    }
    let chol = Cholesky::new(s).ok_or(Error::LinearSolveFailure)?;
    let yc = chol.solve(&rhs);
    if yc.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolveFailure);
    }

    let mut step = Tangent::zeros(nc, np);
    for i in 0..nc {
        step.cameras[i] = yc.fixed_rows::<9>(9 * i).component_mul(&sys.cam_scale[i]);
    }
    for j in 0..np {
        let mut b = sys.pt_rhs[j];
        for &k in &by_point[j] {
            let i = neq.couplings[k].camera;
            b -= sys.couplings[k].transpose() * yc.fixed_rows::<9>(9 * i);
        }
        step.points[j] = (pt_inv[j] * b).component_mul(&sys.pt_scale[j]);
    }
    Ok(step)
}

/// Dense reference for [`solve_damped`] on small systems.
pub fn solve_damped_dense(neq: &NormalEquations, mu: f64, mode: DampingMode) -> Result<Tangent> {
    let (h, g) = neq.to_dense();
    let nc = neq.camera_blocks.len();
    let np = neq.point_blocks.len();
    let n = h.nrows();
    let diag_scale: Vec<f64> = (0..n).map(|k| 1.0 / (1.0 + h[(k, k)].max(0.0).sqrt())).collect();
    let mut a = DMatrix::from_fn(n, n, |i, j| h[(i, j)] * diag_scale[i] * diag_scale[j]);
    for k in 0..n {
        match mode {
            DampingMode::Levenberg => a[(k, k)] += mu,
            DampingMode::Marquardt => a[(k, k)] *= 1.0 + mu,
        }
    }
    let b = DVector::from_fn(n, |k, _| -g[k] * diag_scale[k]);
    let y = a.lu().solve(&b).ok_or(Error::LinearSolveFailure)?;
    let mut step = Tangent::zeros(nc, np);
    for i in 0..nc {
        step.cameras[i] = Vector9::from_fn(|k, _| y[9 * i + k] * diag_scale[9 * i + k]);
    }
    for j in 0..np {
        let o = 9 * nc + 3 * j;
        step.points[j] = Vector3::from_fn(|k, _| y[o + k] * diag_scale[o + k]);
    }
    Ok(step)
}
