//! One device's share of an outer iteration.
//!
//! A device sees only its owned variables, the neighbour copies delivered in
//! its inbox and its own restart metrics. Nothing in this file touches the
//! global problem.

use super::message::{Entry, Message};
use super::partition::DevicePlan;
use crate::acceleration::{extrapolate, init_restart, should_restart, update_restart_metrics, NesterovState, RestartState};
use crate::error::{Error, Result, VariableKind};
use crate::geometry::{BaState, CameraState, GeometryPolicy, LossFunction, PointState};
use crate::solver::{solve_subproblem, LMConfig};
use crate::surrogate::{ForeignState, SurrogateSpec, VariableSource};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceConfig {
    pub xi: f64,
    pub eta: f64,
    pub accelerate: bool,
    pub lm: LMConfig,
    pub loss: LossFunction,
    pub geometry: GeometryPolicy,
}

/// Neighbour copies of `x^(k)` and `x̄^(k)`, aligned with the plan's foreign
/// lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Inbox {
    pub current: ForeignState,
    pub extrapolated: ForeignState,
}

/// What a device reports after one outer iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub device: usize,
    pub restarted: bool,
    /// `F^α(k)`.
    pub f_alpha: f64,
    /// `F̄^α(k)`.
    pub fbar_alpha: f64,
    /// `E^α(k+1)`.
    pub e_alpha: f64,
    /// `ΔE^α(x^(k) | x^(k-1))`.
    pub delta_e: f64,
    /// `E^α(x^α(k) | x^(k))`.
    pub surrogate_at_current: f64,
    /// `E^α(x^α(k+1) | x^(k))`.
    pub surrogate_at_next: f64,
    pub gamma: f64,
    pub lm_iterations: usize,
    pub solve_failures: usize,
}

#[derive(Debug, Clone)]
pub struct DeviceContext {
    pub id: usize,
    /// `x^α(k)`.
    pub owned: BaState,
    /// `x̄^α(k)`, valid after [`DeviceContext::prepare`].
    pub extrapolated: BaState,
    pub iteration: u64,
    nesterov: NesterovState,
    restart: Option<RestartState>,
    previous_spec: Option<SurrogateSpec>,
    damping: f64,
}

fn state_of(plan: &DevicePlan, source: &impl VariableSource) -> Result<BaState> {
    let missing = |kind, id| Error::MissingNeighborState {
        device: plan.id,
        kind,
        id,
    };
    Ok(BaState {
        cameras: plan
            .cameras
            .iter()
            .map(|&i| source.camera(i).copied().ok_or(missing(VariableKind::Camera, i)))
            .collect::<Result<_>>()?,
        points: plan
            .points
            .iter()
            .map(|&j| source.point(j).copied().ok_or(missing(VariableKind::Point, j)))
            .collect::<Result<_>>()?,
    })
}

fn is_geometry_failure(e: &Error) -> bool {
    matches!(e, Error::DegenerateGeometry { .. } | Error::PointBehindCamera { .. })
}

impl DeviceContext {
    /// Takes the owned part of `initial`.
    pub fn new(plan: &DevicePlan, initial: &impl VariableSource, config: &DeviceConfig) -> Result<Self> {
        let owned = state_of(plan, initial)?;
        Ok(Self {
            id: plan.id,
            extrapolated: owned.clone(),
            nesterov: NesterovState::new(owned.clone()),
            owned,
            iteration: 0,
            restart: None,
            previous_spec: None,
            damping: config.lm.initial_damping,
        })
    }

    pub fn restart_state(&self) -> Option<&RestartState> {
        self.restart.as_ref()
    }

    pub fn nesterov(&self) -> &NesterovState {
        &self.nesterov
    }

    /// Advances the momentum schedule and forms `x̄^α(k)`.
    pub fn prepare(&mut self, config: &DeviceConfig) {
        if config.accelerate {
            self.nesterov.advance();
            self.extrapolated = extrapolate(&self.owned, &self.nesterov);
        } else {
            self.extrapolated = self.owned.clone();
        }
    }

    /// One message per neighbour carrying `x^(k)` and `x̄^(k)` of the
    /// variables it needs.
    pub fn outgoing(&self, plan: &DevicePlan) -> Vec<Message> {
        plan.sends
            .iter()
            .map(|(&receiver, transfer)| {
                let entries = transfer
                    .cameras
                    .iter()
                    .map(|&(id, slot)| Entry::Camera {
                        id,
                        x: self.owned.cameras[slot],
                        x_bar: self.extrapolated.cameras[slot],
                    })
                    .chain(transfer.points.iter().map(|&(id, slot)| Entry::Point {
                        id,
                        x: self.owned.points[slot],
                        x_bar: self.extrapolated.points[slot],
                    }))
                    .collect();
                Message {
                    sender: self.id,
                    receiver,
                    iteration: self.iteration,
                    entries,
                }
            })
            .collect()
    }

    /// Checks delivered messages against the plan and assembles the inbox.
    pub fn receive(&self, plan: &DevicePlan, messages: &[Message]) -> Result<Inbox> {
        let violation = |m: String| Error::ProtocolViolation(format!("device {}: {m}", self.id));
        let mut cams: Vec<Option<(CameraState, CameraState)>> = vec![None; plan.foreign_cameras.len()];
        let mut pts: Vec<Option<(PointState, PointState)>> = vec![None; plan.foreign_points.len()];
        let mut seen = Vec::new();
        for msg in messages {
            if msg.receiver != self.id {
                return Err(violation(format!("message addressed to device {}", msg.receiver)));
            }
            if msg.iteration != self.iteration {
                return Err(violation(format!(
                    "message for iteration {} during iteration {}",
                    msg.iteration, self.iteration
                )));
            }
            let transfer = plan
                .receives
                .get(&msg.sender)
                .ok_or_else(|| violation(format!("unexpected sender {}", msg.sender)))?;
            if seen.contains(&msg.sender) {
                return Err(violation(format!("duplicate message from {}", msg.sender)));
            }
            seen.push(msg.sender);
            let mut expected_cams = transfer.cameras.iter();
            let mut expected_pts = transfer.points.iter();
            for e in &msg.entries {
                match *e {
                    Entry::Camera { id, x, x_bar } => match expected_cams.next() {
                        Some(&(want, slot)) if want == id => cams[slot] = Some((x, x_bar)),
                        _ => return Err(violation(format!("unexpected camera {id} from {}", msg.sender))),
                    },
                    Entry::Point { id, x, x_bar } => match expected_pts.next() {
                        Some(&(want, slot)) if want == id => pts[slot] = Some((x, x_bar)),
                        _ => return Err(violation(format!("unexpected point {id} from {}", msg.sender))),
                    },
                }
            }
            if expected_cams.next().is_some() || expected_pts.next().is_some() {
                return Err(violation(format!("incomplete message from {}", msg.sender)));
            }
        }
        if let Some(slot) = cams.iter().position(Option::is_none) {
            return Err(Error::MissingNeighborState {
                device: self.id,
                kind: VariableKind::Camera,
                id: plan.foreign_cameras[slot],
            });
        }
        if let Some(slot) = pts.iter().position(Option::is_none) {
            return Err(Error::MissingNeighborState {
                device: self.id,
                kind: VariableKind::Point,
                id: plan.foreign_points[slot],
            });
        }
        let (cx, cb): (Vec<_>, Vec<_>) = cams.into_iter().flatten().unzip();
        let (px, pb): (Vec<_>, Vec<_>) = pts.into_iter().flatten().unzip();
        Ok(Inbox {
            current: ForeignState { cameras: cx, points: px },
            extrapolated: ForeignState { cameras: cb, points: pb },
        })
    }

    fn solve(&mut self, spec: &SurrogateSpec, start: &BaState, lm: &LMConfig) -> Result<(Option<BaState>, usize)> {
        let config = LMConfig {
            initial_damping: self.damping,
            ..*lm
        };
        match solve_subproblem(spec, start, &config) {
            Ok(res) => {
                self.damping = res.final_damping;
                Ok((Some(res.new_state), res.inner_iterations))
            }
            Err(Error::LinearSolveFailure) => Ok((None, config.max_inner_iterations)),
            Err(e) => Err(e),
        }
    }

    /// Runs outer iteration `k`: majorize at `x^(k)` and `x̄^(k)`, solve, and
    /// apply the restart test. Must follow [`DeviceContext::prepare`].
    pub fn step(&mut self, plan: &DevicePlan, inbox: &Inbox, config: &DeviceConfig) -> Result<DeviceReport> {
        let spec = SurrogateSpec::build(plan, &self.owned, &inbox.current, config.loss, config.geometry, config.xi)?;
        let at_current = spec.evaluate(&self.owned)?;
        let metrics = match self.restart {
            Some(m) => m,
            None => init_restart(&spec, &self.owned, config.eta)?,
        };
        let delta_e = match &self.previous_spec {
            Some(prev) => prev.delta(&self.owned, &inbox.current)?,
            None => 0.0,
        };
        let mut failures = 0;
        let mut iterations = 0;
        let evaluate = |x: &BaState| match spec.evaluate(x) {
            Err(e) if is_geometry_failure(&e) => Ok(f64::INFINITY),
            r => r,
        };

        let mut restarted = false;
        let first = if config.accelerate {
            let spec_bar = SurrogateSpec::build(
                plan,
                &self.extrapolated,
                &inbox.extrapolated,
                config.loss,
                config.geometry,
                config.xi,
            )?;
            let start = self.extrapolated.clone();
            self.solve(&spec_bar, &start, &config.lm)?
        } else {
            let start = self.owned.clone();
            self.solve(&spec, &start, &config.lm)?
        };
        iterations += first.1;
        let mut next = first.0.unwrap_or_else(|| {
            failures += 1;
            self.owned.clone()
        });
        let mut at_next = evaluate(&next)?;
        let mut metrics = update_restart_metrics(metrics, delta_e, at_next, at_current);
        if config.accelerate && should_restart(&metrics) {
            restarted = true;
            let start = self.owned.clone();
            let (x, it) = self.solve(&spec, &start, &config.lm)?;
            iterations += it;
            next = x.unwrap_or_else(|| {
                failures += 1;
                start
            });
            at_next = evaluate(&next)?;
            metrics.refresh_tentative(at_next, at_current);
        }

        let report = DeviceReport {
            device: self.id,
            restarted,
            f_alpha: metrics.f_alpha,
            fbar_alpha: metrics.fbar_alpha,
            e_alpha: metrics.e_alpha,
            delta_e,
            surrogate_at_current: at_current,
            surrogate_at_next: at_next,
            gamma: self.nesterov.gamma,
            lm_iterations: iterations,
            solve_failures: failures,
        };
        self.nesterov.previous = std::mem::replace(&mut self.owned, next);
        self.previous_spec = Some(spec);
        self.restart = Some(metrics);
        self.iteration += 1;
        Ok(report)
    }
}
