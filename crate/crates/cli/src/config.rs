use daba::runtime::{ExecutionMode, RunConfig};
use daba::tolerances::{DEFAULT_ETA, DEFAULT_XI};
use daba::LossFunction;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Trivial,
    Huber,
}

/// Scene generated when no input file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSettings {
    pub cameras: usize,
    pub points: usize,
    pub pixel_noise: f64,
    /// Start from the ground truth instead of the perturbed state.
    pub ground_truth: bool,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        Self {
            cameras: 20,
            points: 500,
            pixel_noise: 0.01,
            ground_truth: false,
        }
    }
}

/// Everything needed to reproduce a run. Written verbatim into the metrics
/// header; also the schema of `--config` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub input: Option<PathBuf>,
    pub synthetic: SyntheticSettings,
    pub devices: usize,
    pub loss: LossKind,
    pub huber_scale: f64,
    pub iterations: usize,
    pub xi: f64,
    pub eta: f64,
    pub seed: u64,
    pub mode: ExecutionMode,
    pub accelerate: bool,
    pub strict_geometry: bool,
    pub criticality_every: usize,
    pub metrics: Option<PathBuf>,
    pub export_ply: Option<PathBuf>,
    pub binary_ply: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            input: None,
            synthetic: SyntheticSettings::default(),
            devices: 1,
            loss: LossKind::Trivial,
            huber_scale: 1.0,
            iterations: 1000,
            xi: DEFAULT_XI,
            eta: DEFAULT_ETA,
            seed: 0,
            mode: ExecutionMode::Sequential,
            accelerate: true,
            strict_geometry: false,
            criticality_every: 10,
            metrics: None,
            export_ply: None,
            binary_ply: false,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.devices == 0 {
            return Err("--devices must be at least 1".into());
        }
        if self.iterations == 0 {
            return Err("--iterations must be at least 1".into());
        }
        if self.input.is_none() && (self.synthetic.cameras < 2 || self.synthetic.points == 0) {
            return Err("synthetic scenes need at least 2 cameras and 1 point".into());
        }
        self.loss_function().map(|_| ()).map_err(|e| e.to_string())?;
        self.run_config().validate().map_err(|e| e.to_string())
    }

    pub fn loss_function(&self) -> daba::Result<LossFunction> {
        match self.loss {
            LossKind::Trivial => Ok(LossFunction::Trivial),
            LossKind::Huber => LossFunction::huber(self.huber_scale),
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            devices: self.devices,
            iterations: self.iterations,
            xi: self.xi,
            eta: self.eta,
            accelerate: self.accelerate,
            mode: self.mode,
            criticality_every: self.criticality_every,
            ..RunConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = SolveConfig {
            input: Some("scene.bal".into()),
            devices: 4,
            loss: LossKind::Huber,
            mode: ExecutionMode::Parallel,
            ..SolveConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<SolveConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg: SolveConfig = toml::from_str("devices = 3\n[synthetic]\ncameras = 6\n").unwrap();
        assert_eq!(cfg.devices, 3);
        assert_eq!(cfg.synthetic.cameras, 6);
        assert_eq!(cfg.synthetic.points, 500);
        assert_eq!(cfg.iterations, 1000);
        assert!(toml::from_str::<SolveConfig>("device = 3\n").is_err());
    }

    #[test]
    fn defaults_match_library() {
        let run = SolveConfig::default().run_config();
        let lib = RunConfig::default();
        assert_eq!((run.xi, run.eta, run.iterations, run.accelerate), (lib.xi, lib.eta, lib.iterations, lib.accelerate));
        assert_eq!(run.mode, ExecutionMode::Sequential);
    }

    #[test]
    fn validation() {
        assert!(SolveConfig::default().validate().is_ok());
        assert!(SolveConfig { devices: 0, ..SolveConfig::default() }.validate().is_err());
        assert!(SolveConfig { eta: 2.0, ..SolveConfig::default() }.validate().is_err());
        let huber = SolveConfig {
            loss: LossKind::Huber,
            huber_scale: -1.0,
            ..SolveConfig::default()
        };
        assert!(huber.validate().is_err());
    }
}
