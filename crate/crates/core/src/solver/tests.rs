use super::*;
use crate::geometry::{criticality_norm, hat, undistorted_ray, LossFunction, ProblemInstance};
use crate::io::synthetic::{synthesize_problem, SyntheticConfig};
use crate::runtime::partition::{partition_problem, PartitionStrategy};
use crate::surrogate::build_surrogate;
use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(cameras: usize, points: usize, noise: f64, seed: u64) -> ProblemInstance {
    synthesize_problem(&SyntheticConfig {
        cameras,
        points,
        pixel_noise: noise,
        visibility: 0.6,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
    .problem
}

fn random_tangent(rng: &mut ChaCha8Rng, x: &BaState, s: f64) -> Tangent {
    let mut t = Tangent::zeros(x.cameras.len(), x.points.len());
    for c in &mut t.cameras {
        *c = Vector9::from_fn(|_, _| rng.random_range(-s..s));
    }
    for p in &mut t.points {
        *p = Vector3::from_fn(|_, _| rng.random_range(-s..s));
    }
    t
}

#[test]
fn retract_examples() {
    let problem = small(3, 5, 0.0, 1);
    let x = problem.state();
    assert_eq!(retract(&x, &Tangent::zeros(3, 5)), x);

    let one = BaState {
        cameras: vec![CameraState {
            rotation: RotationMatrix::identity(),
            center: Vector3::zeros(),
            intrinsics: Vector3::new(1.0, 0.0, 0.0),
        }],
        points: vec![],
    };
    let mut step = Tangent::zeros(1, 0);
    step.cameras[0][0] = std::f64::consts::PI;
    let r = retract(&one, &step).cameras[0].rotation;
    let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    assert!((r.matrix() - expected).amax() < 1e-15);
}

/// First-order model of the retraction in ambient coordinates.
fn linear_move(x: &BaState, h: &Tangent) -> Vec<f64> {
    let mut out = Vec::new();
    for (c, v) in x.cameras.iter().zip(&h.cameras) {
        let w = Vector3::new(v[0], v[1], v[2]);
        let r = c.rotation.matrix() + hat(&w) * c.rotation.matrix();
        out.extend(r.iter());
        out.extend((c.center + Vector3::new(v[3], v[4], v[5])).iter());
        out.extend((c.intrinsics + Vector3::new(v[6], v[7], v[8])).iter());
    }
    for (l, v) in x.points.iter().zip(&h.points) {
        out.extend((l + v).iter());
    }
    out
}

fn ambient(x: &BaState) -> Vec<f64> {
    let mut out = Vec::new();
    for c in &x.cameras {
        out.extend(c.rotation.matrix().iter());
        out.extend(c.center.iter());
        out.extend(c.intrinsics.iter());
    }
    for l in &x.points {
        out.extend(l.iter());
    }
    out
}

#[test]
fn retract_is_second_order_accurate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let problem = small(4, 6, 0.0, 2);
    let x = problem.state();
    let h = random_tangent(&mut rng, &x, 1.0);
    let gap = |s: f64| {
        let mut hs = h.clone();
        hs.cameras.iter_mut().for_each(|v| *v *= s);
        hs.points.iter_mut().for_each(|v| *v *= s);
        let a = ambient(&retract(&x, &hs));
        let b = linear_move(&x, &hs);
        a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
    };
    let (e1, e2) = (gap(1e-2), gap(5e-3));
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    for c in &retract(&x, &h).cameras {
        assert!(c.rotation.orthonormality_defect() < 1e-12);
    }
}

fn device_specs(problem: &ProblemInstance, s: usize, xi: f64) -> Vec<SurrogateSpec> {
    let part = partition_problem(problem, s, &PartitionStrategy::default()).unwrap();
    let x = problem.state();
    (0..s).map(|d| build_surrogate(problem, &part, &x, d, xi).unwrap()).collect()
}

#[test]
fn structure_of_normal_equations() {
    // Device without intra pairs: every point sits on the other device.
    let problem = small(4, 6, 1.0, 3);
    let camera_owner = vec![0, 0, 1, 1];
    let part = partition_problem(
        &problem,
        2,
        &PartitionStrategy::Explicit {
            camera_owner,
            point_owner: Some(vec![1; 6]),
        },
    )
    .unwrap();
    let spec = build_surrogate(&problem, &part, &problem.state(), 0, 1e-4).unwrap();
    assert!(spec.intra.is_empty());
    let neq = linearize_surrogate(&spec, &spec.anchor).unwrap();
    assert!(neq.couplings.is_empty());

    let single = ProblemInstance::new(
        problem.cameras[..1].to_vec(),
        problem.points[..1].to_vec(),
        vec![crate::geometry::Observation {
            camera: 0,
            point: 0,
            pixel: nalgebra::Vector2::new(3.0, -2.0),
        }],
        LossFunction::Trivial,
    )
    .unwrap();
    let spec = &device_specs(&single, 1, 1e-4)[0];
    let neq = linearize_surrogate(spec, &spec.anchor).unwrap();
    assert_eq!(neq.camera_blocks.len(), 1);
    assert_eq!(neq.point_blocks.len(), 1);
    assert_eq!(neq.couplings.len(), 1);
}

/// Stacked residual vector whose half squared norm is the Gauss-Newton model,
/// with IRLS weights frozen at `base`.
fn residual_vector(spec: &SurrogateSpec, base: &BaState, x: &BaState) -> DVector<f64> {
    let mut r = Vec::new();
    for pair in &spec.intra {
        let c0 = &base.cameras[pair.camera_slot];
        let e0 = crate::geometry::reprojection_error(c0, &base.points[pair.point_slot], &pair.pixel).unwrap();
        let w = spec.loss.eval(e0.norm_squared()).1.sqrt();
        let c = &x.cameras[pair.camera_slot];
        let v = x.points[pair.point_slot] - c.center;
        let m = c.rotation.matrix() * undistorted_ray(&c.intrinsics, &pair.pixel);
        let e = m - v * (v.dot(&m) / v.norm_squared());
        r.extend((e * w).iter());
    }
    for t in &spec.camera_side {
        let c = &x.cameras[t.pair.camera_slot];
        let m = c.rotation.matrix() * undistorted_ray(&c.intrinsics, &t.pair.pixel);
        r.extend(((m + c.center * t.coeff.lambda - t.coeff.g) * (2.0 * t.coeff.w).sqrt()).iter());
    }
    for t in &spec.point_side {
        let l = &x.points[t.pair.point_slot];
        r.extend(((l * t.coeff.lambda - t.coeff.g) * (2.0 * t.coeff.w).sqrt()).iter());
    }
    let sx = spec.xi.sqrt();
    for (c, c0) in x.cameras.iter().zip(&spec.anchor.cameras) {
        r.extend(((c.rotation.matrix() - c0.rotation.matrix()) * sx).iter());
        r.extend(((c.center - c0.center) * sx).iter());
        r.extend(((c.intrinsics - c0.intrinsics) * sx).iter());
    }
    for (l, l0) in x.points.iter().zip(&spec.anchor.points) {
        r.extend(((l - l0) * sx).iter());
    }
    DVector::from_vec(r)
}

#[test]
fn normal_equations_match_dense_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut problem = small(2, 3, 2.0, 4);
    problem.loss = LossFunction::Huber { delta: 1.0 };
    for xi in [0.0, 0.5] {
        // A device with intra and crossing pairs: split 2 cameras over 2 devices.
        for s in [1, 2] {
            for spec in device_specs(&problem, s, xi) {
                let base = retract(&spec.anchor, &random_tangent(&mut rng, &spec.anchor, 0.01));
                let neq = linearize_surrogate(&spec, &base).unwrap();
                let (h, g) = neq.to_dense();
                let n = h.nrows();
                let r0 = residual_vector(&spec, &base, &base);
                let mut jac = DMatrix::zeros(r0.len(), n);
                let step = 1e-6;
                for k in 0..n {
                    let mut tp = Tangent::zeros(base.cameras.len(), base.points.len());
                    let nc = base.cameras.len();
                    let set = |t: &mut Tangent, v: f64| {
                        if k < 9 * nc {
                            t.cameras[k / 9][k % 9] = v;
                        } else {
                            t.points[(k - 9 * nc) / 3][(k - 9 * nc) % 3] = v;
                        }
                    };
                    let mut tm = tp.clone();
                    set(&mut tp, step);
                    set(&mut tm, -step);
                    let rp = residual_vector(&spec, &base, &retract(&base, &tp));
                    let rm = residual_vector(&spec, &base, &retract(&base, &tm));
                    jac.set_column(k, &((rp - rm) / (2.0 * step)));
                }
                let h_fd = jac.transpose() * &jac;
                let g_fd = jac.transpose() * &r0;
                let hs = h_fd.amax().max(1e-12);
                let gs = g_fd.amax().max(1e-12);
                assert!((&h - &h_fd).amax() <= 1e-6 * hs, "JtJ gap {}", (&h - &h_fd).amax() / hs);
                assert!((&g - &g_fd).amax() <= 1e-6 * gs, "Jtr gap {}", (&g - &g_fd).amax() / gs);
            }
        }
    }
}

#[test]
fn schur_solve_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let problem = small(3, 6, 1.0, 5);
    for s in [1, 2] {
        for spec in device_specs(&problem, s, 1e-2) {
            let base = retract(&spec.anchor, &random_tangent(&mut rng, &spec.anchor, 0.01));
            let neq = linearize_surrogate(&spec, &base).unwrap();
            let vars = 9 * neq.camera_blocks.len() + 3 * neq.point_blocks.len();
            assert!(vars <= 50);
            for mode in [DampingMode::Levenberg, DampingMode::Marquardt] {
                for mu in [1e-3, 1e-1, 1.0] {
                    let a = solve_damped(&neq, mu, mode).unwrap();
                    let b = solve_damped_dense(&neq, mu, mode).unwrap();
                    let scale = b.amax().max(1e-300);
                    for (u, v) in a.cameras.iter().zip(&b.cameras) {
                        assert!((u - v).amax() <= 1e-8 * scale, "mu {mu} {mode:?} gap {}", (u - v).amax() / scale);
                    }
                    for (u, v) in a.points.iter().zip(&b.points) {
                        assert!((u - v).amax() <= 1e-8 * scale);
                    }
                }
            }
        }
    }
}

#[test]
fn critical_start_is_returned_unchanged() {
    let synth = synthesize_problem(&SyntheticConfig {
        cameras: 4,
        points: 20,
        pixel_noise: 0.0,
        seed: 6,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let problem = synth.problem.clone().with_state(synth.ground_truth.clone());
    let spec = &device_specs(&problem, 1, 1e-4)[0];
    let res = solve_subproblem(spec, &spec.anchor, &LMConfig::default()).unwrap();
    assert!(res.converged);
    assert_eq!(res.successful_steps, 0);
    assert_eq!(res.new_state, spec.anchor);
}

#[test]
fn noiseless_single_device_converges() {
    let synth = synthesize_problem(&SyntheticConfig {
        cameras: 6,
        points: 40,
        pixel_noise: 0.0,
        seed: 7,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let problem = synth.problem.clone();
    let spec = &device_specs(&problem, 1, 0.0)[0];
    let config = LMConfig {
        max_inner_iterations: 1,
        min_successful_steps: 1,
        ..LMConfig::default()
    };
    let mut x = spec.anchor.clone();
    let mut value = spec.evaluate(&x).unwrap();
    let mut mu = config.initial_damping;
    for _ in 0..200 {
        let res = solve_subproblem(spec, &x, &LMConfig { initial_damping: mu, ..config }).unwrap();
        assert!(res.final_value <= value);
        assert_eq!(res.initial_value, value);
        if res.successful_steps > 0 {
            assert!(res.final_value < value);
        }
        value = res.final_value;
        mu = res.final_damping;
        x = res.new_state;
        if res.converged {
            break;
        }
    }
    let crit = criticality_norm(&problem, &x).unwrap();
    assert!(crit < 1e-6, "criticality {crit}");
}

#[test]
fn config_validation() {
    assert!(LMConfig::default().validate().is_ok());
    let bad = LMConfig {
        min_successful_steps: 0,
        ..LMConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = LMConfig {
        damping_up: 0.5,
        ..LMConfig::default()
    };
    assert!(bad.validate().is_err());
}
