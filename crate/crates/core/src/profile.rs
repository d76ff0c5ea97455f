//! Iteration-count performance profiles.

use crate::error::{Error, Result};

/// `F_ref + Δ·(F_init − F_ref)`.
pub fn target_objective(f_ref: f64, f_init: f64, delta: f64) -> f64 {
    f_ref + delta * (f_init - f_ref)
}

/// One problem's objective history, `objectives[k] = F(x^(k))` with `k = 0`
/// the initial state, and its reference value.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileInput {
    pub name: String,
    pub objectives: Vec<f64>,
    pub f_ref: f64,
}

impl ProfileInput {
    pub fn target(&self, delta: f64) -> Result<f64> {
        let f_init = *self
            .objectives
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("problem {:?} has no objective history", self.name)))?;
        Ok(target_objective(self.f_ref, f_init, delta))
    }

    /// First iteration whose objective reaches the target.
    pub fn solved_at(&self, delta: f64) -> Result<Option<usize>> {
        let t = self.target(delta)?;
        Ok(self.objectives.iter().position(|&f| f <= t))
    }
}

/// Fraction of problems solved by each iteration `k = 0..=max_iteration`.
pub fn performance_profile(problems: &[ProfileInput], delta: f64, max_iteration: usize) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1], got {delta}")));
    }
    if problems.is_empty() {
        return Err(Error::InvalidArgument("no problems to profile".into()));
    }
    let solved = problems.iter().map(|p| p.solved_at(delta)).collect::<Result<Vec<_>>>()?;
    let n = problems.len() as f64;
    Ok((0..=max_iteration)
        .map(|k| solved.iter().filter(|s| matches!(s, Some(i) if *i <= k)).count() as f64 / n)
        .collect())
}
