//! Whole-problem reporting. This is the only place that evaluates the global
//! objective during a run; none of it feeds back into device decisions.

use super::device::DeviceReport;
use super::partition::Partition;
use super::RunConfig;
use crate::error::Result;
use crate::geometry::{criticality_norm, pixel_error_stats, total_objective, BaState, ProblemInstance};
use crate::surrogate::state_distance_squared;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Global measurements after outer iteration `k`, taken at `x^(k+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub objective: f64,
    pub mean_pixel_error: f64,
    pub criticality: Option<f64>,
    /// `‖x^(k+1) − x^(k)‖`.
    pub step_norm: f64,
    /// `‖x^(k+1) − x̄^(k)‖`.
    pub extrapolation_gap: f64,
    pub messages: usize,
    pub floats_sent: usize,
    pub restarts: usize,
    pub devices: Vec<DeviceReport>,
}

/// Scalars held by one device: owned variables, one copy of each foreign
/// variable and the frozen crossing-pair coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryAccount {
    pub device: usize,
    pub owned: usize,
    pub copies: usize,
    pub coefficients: usize,
    pub total: usize,
}

pub const CAMERA_SCALARS: usize = 15;
pub const POINT_SCALARS: usize = 3;
pub const COEFFICIENT_SCALARS: usize = 6;

pub fn account_memory(partition: &Partition) -> Vec<MemoryAccount> {
    partition
        .devices
        .iter()
        .map(|d| {
            let owned = CAMERA_SCALARS * d.cameras.len() + POINT_SCALARS * d.points.len();
            let copies = CAMERA_SCALARS * d.foreign_cameras.len() + POINT_SCALARS * d.foreign_points.len();
            let coefficients = COEFFICIENT_SCALARS * (d.camera_side.len() + d.point_side.len());
            MemoryAccount {
                device: d.id,
                owned,
                copies,
                coefficients,
                total: owned + copies + coefficients,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub config: RunConfig,
    pub initial_objective: f64,
    pub initial_pixel_error: f64,
    pub initial_criticality: f64,
    pub reports: Vec<IterationReport>,
    pub final_state: BaState,
    pub memory: Vec<MemoryAccount>,
    pub crossing_pairs: usize,
}

impl RunTrace {
    /// `F(x^(k))` for `k = 0..=reports.len()`.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(self.reports.iter().map(|r| r.objective))
            .collect()
    }

    /// The global smoothed objective `F̄^(k)` for each recorded iteration,
    /// `F̄^(k) = (1 − η)F̄^(k−1) + ηF(x^(k))` with `F̄^(−1) = F(x^(0))`.
    pub fn smoothed_objectives(&self) -> Vec<f64> {
        let eta = self.config.eta;
        let f = self.objectives();
        let mut fbar = self.initial_objective;
        f[..self.reports.len()]
            .iter()
            .map(|fk| {
                fbar = (1.0 - eta) * fbar + eta * fk;
                fbar
            })
            .collect()
    }

    pub fn final_objective(&self) -> f64 {
        self.reports.last().map_or(self.initial_objective, |r| r.objective)
    }

    pub fn digest(&self) -> String {
        trace_digest(&self.reports)
    }
}

/// Places every device's owned variables at their global indices.
pub fn assemble_state<'a>(
    partition: &Partition,
    template: &BaState,
    owned: impl IntoIterator<Item = &'a BaState>,
) -> BaState {
    let mut out = template.clone();
    for (plan, x) in partition.devices.iter().zip(owned) {
        for (&i, c) in plan.cameras.iter().zip(&x.cameras) {
            out.cameras[i] = *c;
        }
        for (&j, l) in plan.points.iter().zip(&x.points) {
            out.points[j] = *l;
        }
    }
    out
}

pub(super) struct Snapshot {
    pub objective: f64,
    pub pixel_error: f64,
    pub criticality: Option<f64>,
}

pub(super) fn measure(problem: &ProblemInstance, x: &BaState, with_criticality: bool) -> Result<Snapshot> {
    Ok(Snapshot {
        objective: total_objective(problem, x)?,
        pixel_error: pixel_error_stats(problem, x)?.mean,
        criticality: if with_criticality {
            Some(criticality_norm(problem, x)?)
        } else {
            None
        },
    })
}

pub fn state_distance(a: &BaState, b: &BaState) -> f64 {
    state_distance_squared(a, b).sqrt()
}

/// SHA-256 over the little-endian bytes of every scalar, cameras first.
pub fn state_digest(state: &BaState) -> String {
    let mut h = Sha256::new();
    for c in &state.cameras {
        for v in c.rotation.to_row_major().iter().chain(c.center.iter()).chain(c.intrinsics.iter()) {
            h.update(v.to_le_bytes());
        }
    }
    for l in &state.points {
        for v in l.iter() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// SHA-256 of the JSON encoding of a report sequence. Floats are written in
/// shortest round-trip form, so equal digests mean bitwise-equal values.
pub fn trace_digest(reports: &[IterationReport]) -> String {
    let bytes = serde_json::to_vec(reports).expect("reports serialize");
    hex(&Sha256::digest(&bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
