use crate::config::SolveConfig;
use daba::geometry::{mean_pixel_reprojection_error, total_objective, GeometryPolicy};
use daba::io::bal::{from_problem, read_bal_file, to_problem, write_bal};
use daba::io::metrics::{read_metrics_file, write_metrics_file, MetricsHeader};
use daba::io::ply::{export_ply, PlyFormat};
use daba::io::synthetic::{synthesize_problem, SyntheticConfig};
use daba::profile::{performance_profile, ProfileInput};
use daba::runtime::{account_memory, partition_problem, run_with, PartitionStrategy};
use daba::{Error, ProblemInstance};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Degraded(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Degraded(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Degraded(m) => m,
        }
    }
}

fn is_degradation(e: &Error) -> bool {
    match e {
        Error::Device { source, .. } => is_degradation(source),
        Error::LinearSolveFailure
        | Error::NearSingularProjection(_)
        | Error::DegenerateGeometry { .. }
        | Error::PointBehindCamera { .. }
        | Error::ProtocolViolation(_)
        | Error::MissingNeighborState { .. } => true,
        _ => false,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_degradation(&e) {
            Failure::Degraded(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn with_path(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| {
        let f = Failure::from(e);
        match f {
            Failure::Usage(m) => Failure::Usage(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}

pub fn load_problem(cfg: &SolveConfig) -> Result<ProblemInstance, Failure> {
    let loss = cfg.loss_function()?;
    let mut problem = match &cfg.input {
        Some(path) => {
            let bal = read_bal_file(path).map_err(with_path(path))?;
            to_problem(&bal, loss).map_err(with_path(path))?
        }
        None => {
            let s = synthesize_problem(&SyntheticConfig {
                cameras: cfg.synthetic.cameras,
                points: cfg.synthetic.points,
                pixel_noise: cfg.synthetic.pixel_noise,
                seed: cfg.seed,
                ..SyntheticConfig::default()
            })?;
            let mut p = s.problem;
            p.loss = loss;
            if cfg.synthetic.ground_truth {
                p = p.with_state(s.ground_truth);
            }
            p
        }
    };
    if cfg.strict_geometry {
        problem.geometry = GeometryPolicy::strict();
    }
    Ok(problem)
}

pub fn solve(cfg: &SolveConfig) -> Result<(), Failure> {
    cfg.validate().map_err(Failure::Usage)?;
    let problem = load_problem(cfg)?;
    let trace = run_with(&problem, &cfg.run_config(), |r| {
        log::info!("iteration {}: objective {:.6e}, pixel error {:.4}", r.iteration, r.objective, r.mean_pixel_error);
    })?;

    if let Some(path) = &cfg.metrics {
        let config = serde_json::to_value(cfg).map_err(|e| Failure::Usage(e.to_string()))?;
        let header = MetricsHeader::from_trace(&trace, config);
        write_metrics_file(Some(&header), &trace.reports, path).map_err(with_path(path))?;
    }
    if let Some(path) = &cfg.export_ply {
        let format = if cfg.binary_ply {
            PlyFormat::BinaryLittleEndian
        } else {
            PlyFormat::Ascii
        };
        export_ply(&trace.final_state, path, format).map_err(with_path(path))?;
    }

    let last = trace.reports.last();
    let restarts: usize = trace.reports.iter().map(|r| r.restarts).sum();
    let failures: usize = trace.reports.iter().flat_map(|r| &r.devices).map(|d| d.solve_failures).sum();
    println!("iterations          {}", trace.reports.len());
    println!("restarts            {restarts}");
    println!("initial objective   {:.6e}", trace.initial_objective);
    println!("final objective     {:.6e}", trace.final_objective());
    println!("initial pixel error {:.4}", trace.initial_pixel_error);
    if let Some(r) = last {
        println!("final pixel error   {:.4}", r.mean_pixel_error);
        if let Some(c) = r.criticality {
            println!("criticality         {c:.3e}");
        }
    }
    if !trace.final_objective().is_finite() {
        return Err(Failure::Degraded("objective is not finite".into()));
    }
    if failures > 0 {
        return Err(Failure::Degraded(format!("{failures} local solves failed")));
    }
    Ok(())
}

pub fn eval(cfg: &SolveConfig) -> Result<(), Failure> {
    let problem = load_problem(cfg)?;
    let state = problem.state();
    let pixel = mean_pixel_reprojection_error(&problem, &state)?;
    let objective = total_objective(&problem, &state)?;
    println!("mean pixel reprojection error {pixel:.3}");
    println!("objective {objective:.6e}");
    println!(
        "cameras {} points {} observations {}",
        problem.num_cameras(),
        problem.num_points(),
        problem.observations.len()
    );
    Ok(())
}

pub fn partition_inspect(cfg: &SolveConfig) -> Result<(), Failure> {
    if cfg.devices == 0 {
        return Err(Failure::Usage("--devices must be at least 1".into()));
    }
    let problem = load_problem(cfg)?;
    let part = partition_problem(&problem, cfg.devices, &PartitionStrategy::default())?;
    let memory = account_memory(&part);
    println!("device cameras points foreign_cameras foreign_points intra camera_side point_side neighbors memory");
    for (d, m) in part.devices.iter().zip(&memory) {
        println!(
            "{} {} {} {} {} {} {} {} {} {}",
            d.id,
            d.cameras.len(),
            d.points.len(),
            d.foreign_cameras.len(),
            d.foreign_points.len(),
            d.intra.len(),
            d.camera_side.len(),
            d.point_side.len(),
            d.neighbors().count(),
            m.total
        );
    }
    println!("crossing pairs {}", part.crossing_pairs());
    Ok(())
}

pub fn synthesize(cfg: &SolveConfig, output: &Path) -> Result<(), Failure> {
    let problem = load_problem(cfg)?;
    let bal = from_problem(&problem)?;
    let file = std::fs::File::create(output).map_err(|e| Failure::Usage(format!("{}: {e}", output.display())))?;
    write_bal(&bal, std::io::BufWriter::new(file)).map_err(with_path(output))?;
    Ok(())
}

pub fn profile(traces: &[PathBuf], f_ref: &[f64], delta: f64) -> Result<(), Failure> {
    if f_ref.len() != 1 && f_ref.len() != traces.len() {
        return Err(Failure::Usage(format!(
            "expected 1 or {} --f-ref values, got {}",
            traces.len(),
            f_ref.len()
        )));
    }
    let mut inputs = Vec::with_capacity(traces.len());
    for (i, path) in traces.iter().enumerate() {
        let trace = read_metrics_file(path).map_err(with_path(path))?;
        let objectives = trace
            .objectives()
            .ok_or_else(|| Failure::Usage(format!("{}: metrics file has no header", path.display())))?;
        inputs.push(ProfileInput {
            name: path.display().to_string(),
            objectives,
            f_ref: f_ref[if f_ref.len() == 1 { 0 } else { i }],
        });
    }
    let max_iteration = inputs.iter().map(|p| p.objectives.len() - 1).max().unwrap_or(0);
    let fractions = performance_profile(&inputs, delta, max_iteration)?;
    for p in &inputs {
        let target = p.target(delta)?;
        match p.solved_at(delta)? {
            Some(k) => println!("# {} target {target:.6e} solved at {k}", p.name),
            None => println!("# {} target {target:.6e} not solved", p.name),
        }
    }
    // Step table: first row, every change, last row.
    println!("iteration solved");
    for (k, f) in fractions.iter().enumerate() {
        if k == 0 || k == max_iteration || fractions[k - 1] != *f {
            println!("{k} {f:.4}");
        }
    }
    Ok(())
}
