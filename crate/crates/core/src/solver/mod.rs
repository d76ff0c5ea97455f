//! Levenberg-Marquardt on one device's surrogate.
//!
//! Cameras move on SO(3) × ℝ³ × ℝ³ through [`retract`], points additively.
//! A step is accepted only if it strictly lowers the true surrogate value, so
//! the result never increases `E^α`.

mod linear;

pub use linear::{
    linearize_surrogate, solve_damped, solve_damped_dense, Coupling, DampingMode, Matrix9,
    Matrix9x3, NormalEquations, Tangent, Vector9,
};

use crate::error::{Error, Result};
use crate::geometry::{BaState, CameraState, RotationMatrix};
use crate::surrogate::SurrogateSpec;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LMConfig {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_inner_iterations: usize,
    pub min_successful_steps: usize,
    /// Stop when every entry of the tangent gradient is below this.
    pub gradient_tolerance: f64,
    /// Stop when `‖δ‖ ≤ step_tolerance · (‖x‖ + step_tolerance)`.
    pub step_tolerance: f64,
    pub damping_mode: DampingMode,
    pub min_damping: f64,
    pub max_damping: f64,
}

impl Default for LMConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 1.0 / 3.0,
            max_inner_iterations: 5,
            min_successful_steps: 1,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            damping_mode: DampingMode::Levenberg,
            min_damping: 1e-12,
            max_damping: 1e12,
        }
    }
}

impl LMConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_damping", self.initial_damping),
            ("damping_up", self.damping_up),
            ("damping_down", self.damping_down),
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("min_damping", self.min_damping),
            ("max_damping", self.max_damping),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.damping_up <= 1.0 || self.damping_down >= 1.0 {
            return Err(Error::InvalidArgument(
                "damping_up must exceed 1 and damping_down must be below 1".into(),
            ));
        }
        if self.min_successful_steps < 1 || self.max_inner_iterations < 1 {
            return Err(Error::InvalidArgument(
                "min_successful_steps and max_inner_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub new_state: BaState,
    pub initial_value: f64,
    pub final_value: f64,
    pub successful_steps: usize,
    pub converged: bool,
    /// Damping to seed the next solve with.
    pub final_damping: f64,
    pub inner_iterations: usize,
}

/// Moves a state along a tangent step: `R ← exp(ω)R`, others additively.
pub fn retract(state: &BaState, step: &Tangent) -> BaState {
    let cameras = state
        .cameras
        .iter()
        .zip(&step.cameras)
        .map(|(c, h)| {
            let omega = Vector3::new(h[0], h[1], h[2]);
            CameraState {
                rotation: RotationMatrix::exp(&omega).compose(&c.rotation),
                center: c.center + Vector3::new(h[3], h[4], h[5]),
                intrinsics: c.intrinsics + Vector3::new(h[6], h[7], h[8]),
            }
        })
        .collect();
    let points = state.points.iter().zip(&step.points).map(|(l, h)| l + h).collect();
    BaState { cameras, points }
}

fn state_scale(x: &BaState) -> f64 {
    let c: f64 = x
        .cameras
        .iter()
        .map(|c| 3.0 + c.center.norm_squared() + c.intrinsics.norm_squared())
        .sum();
    let p: f64 = x.points.iter().map(|l| l.norm_squared()).sum();
    (c + p).sqrt()
}

/// Approximately minimizes `E^α` starting from `x_start`.
///
/// Returns [`Error::LinearSolveFailure`] only when no step could be computed
/// at any damping level tried; callers keep `x_start` in that case.
pub fn solve_subproblem(spec: &SurrogateSpec, x_start: &BaState, config: &LMConfig) -> Result<SubproblemResult> {
    let mut x = x_start.clone();
    let initial_value = spec.evaluate(&x)?;
    let mut value = initial_value;
    let mut mu = config.initial_damping.clamp(config.min_damping, config.max_damping);
    let mut successful = 0;
    let mut converged = false;
    let mut factorized = false;
    let mut iterations = 0;
    let mut neq = linearize_surrogate(spec, &x)?;

    while iterations < config.max_inner_iterations {
        if neq.gradient_amax() <= config.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let step = match solve_damped(&neq, mu, config.damping_mode) {
            Ok(step) => step,
            Err(Error::LinearSolveFailure) => {
                mu *= config.damping_up;
                if mu > config.max_damping {
                    break;
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        factorized = true;
        if step.norm() <= config.step_tolerance * (state_scale(&x) + config.step_tolerance) {
            converged = true;
            break;
        }
        let candidate = retract(&x, &step);
        let candidate_value = spec.evaluate(&candidate)?;
        if candidate_value.is_finite() && candidate_value < value {
            x = candidate;
            value = candidate_value;
            successful += 1;
            mu = (mu * config.damping_down).max(config.min_damping);
            if successful >= config.min_successful_steps {
                break;
            }
            neq = linearize_surrogate(spec, &x)?;
        } else {
            mu *= config.damping_up;
            if mu > config.max_damping {
                mu = config.max_damping;
                break;
            }
        }
    }
    if !factorized && !converged && successful == 0 {
        return Err(Error::LinearSolveFailure);
    }
    Ok(SubproblemResult {
        new_state: x,
        initial_value,
        final_value: value,
        successful_steps: successful,
        converged,
        final_damping: mu,
        inner_iterations: iterations,
    })
}

#[cfg(test)]
mod tests;
