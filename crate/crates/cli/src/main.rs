//! `daba` command-line driver.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when the solver
//! degraded (failed linear solves, degenerate geometry, non-finite objective).

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::{LossKind, SolveConfig};
use daba::runtime::ExecutionMode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "daba", version, about = "Decentralized bundle adjustment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the decentralized solver.
    Solve(SolveArgs),
    /// Print the mean pixel reprojection error of a problem's initial state.
    Eval(ProblemArgs),
    /// Performance profile over metrics files.
    Profile(ProfileArgs),
    /// Summarize how a problem splits across devices.
    PartitionInspect(ProblemArgs),
    /// Write a synthetic scene as a BAL file.
    Synthesize(SynthesizeArgs),
}

/// Where the problem comes from. Without `--input` a synthetic scene is
/// generated from the remaining flags.
#[derive(Args, Debug, Default)]
struct ProblemArgs {
    /// TOML file with solve settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// BAL problem file.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long, value_enum)]
    loss: Option<LossKind>,
    #[arg(long)]
    huber_scale: Option<f64>,
    /// Seed of the synthetic scene.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cameras: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    pixel_noise: Option<f64>,
    /// Use the synthetic ground truth as the initial state.
    #[arg(long)]
    ground_truth: bool,
    /// Fail on degenerate camera/point pairs instead of dropping them.
    #[arg(long)]
    strict_geometry: bool,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    no_accelerate: bool,
    /// Evaluate the criticality norm every N iterations (0: last only).
    #[arg(long)]
    criticality_every: Option<usize>,
    /// Line-delimited JSON metrics output.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    export_ply: Option<PathBuf>,
    /// Write the PLY file in binary little-endian form.
    #[arg(long)]
    binary_ply: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Sequential,
    Parallel,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    /// Metrics files, one per problem.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Reference objective per trace, or one value for all of them.
    #[arg(long = "f-ref", required = true)]
    f_ref: Vec<f64>,
    /// Suboptimality tolerance.
    #[arg(long, default_value_t = 1e-4)]
    delta: f64,
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    output: PathBuf,
}

impl ProblemArgs {
    fn resolve(&self) -> Result<SolveConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?
            }
            None => SolveConfig::default(),
        };
        if self.input.is_some() {
            cfg.input.clone_from(&self.input);
        }
        set(&mut cfg.devices, self.devices);
        set(&mut cfg.loss, self.loss);
        set(&mut cfg.huber_scale, self.huber_scale);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.synthetic.cameras, self.cameras);
        set(&mut cfg.synthetic.points, self.points);
        set(&mut cfg.synthetic.pixel_noise, self.pixel_noise);
        cfg.synthetic.ground_truth |= self.ground_truth;
        cfg.strict_geometry |= self.strict_geometry;
        Ok(cfg)
    }
}

impl SolveArgs {
    fn resolve(&self) -> Result<SolveConfig, String> {
        let mut cfg = self.problem.resolve()?;
        set(&mut cfg.iterations, self.iterations);
        set(&mut cfg.xi, self.xi);
        set(&mut cfg.eta, self.eta);
        set(&mut cfg.criticality_every, self.criticality_every);
        if let Some(m) = self.mode {
            cfg.mode = match m {
                ModeArg::Sequential => ExecutionMode::Sequential,
                ModeArg::Parallel => ExecutionMode::Parallel,
            };
        }
        cfg.accelerate &= !self.no_accelerate;
        if self.metrics.is_some() {
            cfg.metrics.clone_from(&self.metrics);
        }
        if self.export_ply.is_some() {
            cfg.export_ply.clone_from(&self.export_ply);
        }
        cfg.binary_ply |= self.binary_ply;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => args.resolve().map_err(commands::Failure::Usage).and_then(|c| commands::solve(&c)),
        Command::Eval(args) => args.resolve().map_err(commands::Failure::Usage).and_then(|c| commands::eval(&c)),
        Command::PartitionInspect(args) => args
            .resolve()
            .map_err(commands::Failure::Usage)
            .and_then(|c| commands::partition_inspect(&c)),
        Command::Synthesize(args) => args
            .problem
            .resolve()
            .map_err(commands::Failure::Usage)
            .and_then(|c| commands::synthesize(&c, &args.output)),
        Command::Profile(args) => commands::profile(&args.traces, &args.f_ref, args.delta),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
