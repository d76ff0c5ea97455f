//! Simulated peer-to-peer execution.
//!
//! Each outer iteration is a superstep with two phases separated by a
//! barrier. Devices first advance their momentum and publish `x^(k)` and
//! `x̄^(k)` to neighbours as encoded [`message`]s; after delivery each device
//! majorizes, solves and runs its restart test. Devices are isolated between
//! barriers, so the parallel mode produces bitwise the same results as the
//! sequential one.

pub mod device;
pub mod diagnostics;
pub mod message;
pub mod partition;

pub use device::{DeviceConfig, DeviceContext, DeviceReport, Inbox};
pub use diagnostics::{
    account_memory, assemble_state, state_digest, trace_digest, IterationReport, MemoryAccount, RunTrace,
};
pub use message::{decode, encode, Entry, Message};
pub use partition::{partition_problem, Partition, PartitionStrategy};

use crate::error::{Error, Result};
use crate::geometry::ProblemInstance;
use crate::solver::LMConfig;
use crate::tolerances::{DEFAULT_ETA, DEFAULT_XI};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const THREADS_ENV: &str = "DABA_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub devices: usize,
    pub iterations: usize,
    pub xi: f64,
    pub eta: f64,
    pub accelerate: bool,
    pub mode: ExecutionMode,
    pub lm: LMConfig,
    pub partition: PartitionStrategy,
    /// Evaluate the criticality norm every this many iterations and at the
    /// last one; 0 disables it apart from the final iteration.
    pub criticality_every: usize,
    /// Stop early once a measured criticality norm falls below this.
    pub criticality_tolerance: Option<f64>,
    /// Worker threads in parallel mode; falls back to `DABA_THREADS`.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            devices: 1,
            iterations: 1000,
            xi: DEFAULT_XI,
            eta: DEFAULT_ETA,
            accelerate: true,
            mode: ExecutionMode::Sequential,
            lm: LMConfig::default(),
            partition: PartitionStrategy::default(),
            criticality_every: 10,
            criticality_tolerance: None,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidArgument(format!("xi must be non-negative, got {}", self.xi)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("threads must be positive".into()));
        }
        self.lm.validate()
    }
}

/// Settings for [`run_centralized_reference`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub iterations: usize,
    pub lm: LMConfig,
    pub criticality_every: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            iterations: 40,
            lm: LMConfig::default(),
            criticality_every: 10,
        }
    }
}

fn thread_count(config: &RunConfig) -> Result<Option<usize>> {
    if let Some(n) = config.threads {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

enum Executor {
    Sequential,
    Parallel(rayon::ThreadPool),
}

impl Executor {
    fn new(config: &RunConfig) -> Result<Self> {
        match config.mode {
            ExecutionMode::Sequential => Ok(Self::Sequential),
            ExecutionMode::Parallel => {
                let mut builder = rayon::ThreadPoolBuilder::new();
                if let Some(n) = thread_count(config)? {
                    builder = builder.num_threads(n);
                }
                let pool = builder
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
                Ok(Self::Parallel(pool))
            }
        }
    }

    /// Applies `f` to every device, returning results in device order.
    fn map<T, F>(&self, devices: &mut [DeviceContext], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &mut DeviceContext) -> T + Sync + Send,
    {
        match self {
            Executor::Sequential => devices.iter_mut().enumerate().map(|(i, d)| f(i, d)).collect(),
            Executor::Parallel(pool) => {
                pool.install(|| devices.par_iter_mut().enumerate().map(|(i, d)| f(i, d)).collect())
            }
        }
    }
}

fn device_error(device: usize, iteration: usize, source: Error) -> Error {
    Error::Device {
        device,
        iteration,
        source: Box::new(source),
    }
}

/// Runs the decentralized method and records one report per outer iteration.
pub fn run(problem: &ProblemInstance, config: &RunConfig) -> Result<RunTrace> {
    run_with(problem, config, |_| {})
}

/// Like [`run`], calling `observe` after each outer iteration.
pub fn run_with(
    problem: &ProblemInstance,
    config: &RunConfig,
    mut observe: impl FnMut(&IterationReport),
) -> Result<RunTrace> {
    config.validate()?;
    let partition = partition_problem(problem, config.devices, &config.partition)?;
    let executor = Executor::new(config)?;
    let device_config = DeviceConfig {
        xi: config.xi,
        eta: config.eta,
        accelerate: config.accelerate,
        lm: config.lm,
        loss: problem.loss,
        geometry: problem.geometry,
    };
    let initial = problem.state();
    let mut devices = partition
        .devices
        .iter()
        .map(|plan| DeviceContext::new(plan, &initial, &device_config))
        .collect::<Result<Vec<_>>>()?;

    let start = diagnostics::measure(problem, &initial, true)?;
    let mut current = initial;
    let mut reports = Vec::with_capacity(config.iterations);
    for k in 0..config.iterations {
        // Phase one: momentum, extrapolation and publication.
        let outboxes = executor.map(&mut devices, |i, d| {
            d.prepare(&device_config);
            d.outgoing(&partition.devices[i])
                .iter()
                .map(|m| Ok((m.receiver, encode(m)?)))
                .collect::<Result<Vec<_>>>()
        });
        let mut inboxes: Vec<Vec<Vec<u8>>> = vec![Vec::new(); devices.len()];
        for (sender, outbox) in outboxes.into_iter().enumerate() {
            for (receiver, bytes) in outbox.map_err(|e| device_error(sender, k, e))? {
                let slot = inboxes.get_mut(receiver).ok_or_else(|| {
                    Error::ProtocolViolation(format!("device {sender} addressed unknown device {receiver}"))
                })?;
                slot.push(bytes);
            }
        }
        let messages = inboxes.iter().map(Vec::len).sum();
        let extrapolated = assemble_state(&partition, &current, devices.iter().map(|d| &d.extrapolated));

        // Phase two: decode, majorize, minimize, restart test.
        let results = executor.map(&mut devices, |i, d| -> Result<(DeviceReport, usize)> {
            let plan = &partition.devices[i];
            let msgs = inboxes[i].iter().map(|b| decode(b)).collect::<Result<Vec<_>>>()?;
            let floats = msgs.iter().map(Message::payload_floats).sum();
            let inbox = d.receive(plan, &msgs)?;
            Ok((d.step(plan, &inbox, &device_config)?, floats))
        });
        let mut device_reports = Vec::with_capacity(devices.len());
        let mut floats_sent = 0;
        for (i, r) in results.into_iter().enumerate() {
            let (report, floats) = r.map_err(|e| device_error(i, k, e))?;
            floats_sent += floats;
            device_reports.push(report);
        }

        let next = assemble_state(&partition, &current, devices.iter().map(|d| &d.owned));
        let last = k + 1 == config.iterations;
        let due = config.criticality_every > 0 && (k + 1) % config.criticality_every == 0;
        let snap = diagnostics::measure(problem, &next, due || last)?;
        let report = IterationReport {
            iteration: k,
            objective: snap.objective,
            mean_pixel_error: snap.pixel_error,
            criticality: snap.criticality,
            step_norm: diagnostics::state_distance(&next, &current),
            extrapolation_gap: diagnostics::state_distance(&next, &extrapolated),
            messages,
            floats_sent,
            restarts: device_reports.iter().filter(|r| r.restarted).count(),
            devices: device_reports,
        };
        log::debug!(
            "iteration {k}: F = {:.6e}, pixel error = {:.4}, restarts = {}",
            report.objective,
            report.mean_pixel_error,
            report.restarts
        );
        observe(&report);
        let stop = matches!((report.criticality, config.criticality_tolerance), (Some(c), Some(t)) if c < t);
        reports.push(report);
        current = next;
        if stop {
            break;
        }
    }

    Ok(RunTrace {
        config: config.clone(),
        initial_objective: start.objective,
        initial_pixel_error: start.pixel_error,
        initial_criticality: start.criticality.unwrap_or(f64::NAN),
        reports,
        final_state: current,
        memory: account_memory(&partition),
        crossing_pairs: partition.crossing_pairs(),
    })
}

/// Plain Levenberg-Marquardt on the whole problem: a single device with no
/// proximal term, so the surrogate is the objective itself.
pub fn run_centralized_reference(problem: &ProblemInstance, config: &ReferenceConfig) -> Result<RunTrace> {
    let run_config = RunConfig {
        devices: 1,
        iterations: config.iterations,
        xi: 0.0,
        accelerate: false,
        lm: config.lm,
        criticality_every: config.criticality_every,
        ..RunConfig::default()
    };
    run(problem, &run_config)
}
