use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use hzd3d::config::Config;
use hzd3d::optimizer::{self, Criterion};
use hzd3d::simulator::{self, ControllerKind, Perturbation, WalkSummary};
use hzd3d::stability::{self, ZdState};
use hzd3d::{diagnostics, published, Error, GaitDesign};

const LOG_ENV: &str = "HZD3D_LOG";
const MANIFEST_SCHEMA: &str = "hzd3d.manifest.v1";

#[derive(Parser)]
#[command(name = "hzd3d", version, about = "Gait design, simulation and stability analysis for a 3D point-foot biped")]
struct Cli {
    /// TOML configuration; defaults are used for anything missing.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "hzd3d-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Torque,
    Stability,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Torque => Criterion::TorquePerStep,
            CriterionArg::Stability => Criterion::SpectralRadius,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Model property checks.
    Check,
    /// Local gait optimization.
    Optimize {
        /// Initial gait (file or bundled name); defaults to the torque-optimal gait.
        #[arg(long)]
        gait: Option<String>,
        #[arg(long, value_enum)]
        criterion: Option<CriterionArg>,
    },
    /// Multi-step simulation with CSV and JSON output.
    Simulate {
        /// Gait file or bundled gait name.
        #[arg(long)]
        gait: String,
        /// fixed, hzd, hzd+dlqr or reselected.
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// Number of steps to walk.
        #[arg(long)]
        steps: Option<usize>,
        /// Offset added to every joint angle [deg].
        #[arg(long, allow_hyphen_values = true)]
        perturb_pos: Option<f64>,
        /// Offset added to every joint rate [deg/s].
        #[arg(long, allow_hyphen_values = true)]
        perturb_vel: Option<f64>,
    },
    /// Restricted Poincaré map linearization.
    Analyze {
        /// Gait file or bundled gait name.
        #[arg(long)]
        gait: String,
    },
    /// Stride-to-stride LQR gain, stored into a copy of the gait.
    Dlqr {
        /// Gait file or bundled gait name.
        #[arg(long)]
        gait: String,
        /// Input weight, `R = r I`.
        #[arg(long)]
        r: Option<f64>,
    },
    /// Writes the bundled gait files.
    Bundle,
}

#[derive(Serialize)]
struct RunManifest {
    schema: &'static str,
    version: &'static str,
    command: String,
    args: Vec<String>,
    config: Option<PathBuf>,
    gait: Option<String>,
    out: PathBuf,
    /// Effective configuration, including defaults.
    settings: Config,
    artifacts: Vec<String>,
}

struct Run {
    cli_args: Vec<String>,
    config_path: Option<PathBuf>,
    config: Config,
    out: PathBuf,
    artifacts: Vec<String>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), Error> {
        std::fs::write(self.out.join(name), contents)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Error> {
        let s = serde_json::to_string_pretty(value)?;
        self.write(name, &s)
    }

    fn finish(mut self, command: &str, gait: Option<&str>) -> Result<(), Error> {
        self.artifacts.push("manifest.json".into());
        let m = RunManifest {
            schema: MANIFEST_SCHEMA,
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            args: self.cli_args.clone(),
            config: self.config_path.clone(),
            gait: gait.map(String::from),
            out: self.out.clone(),
            settings: self.config.clone(),
            artifacts: self.artifacts.clone(),
        };
        std::fs::write(self.out.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }
}

fn bundled(name: &str) -> Option<GaitDesign> {
    match name {
        "torque-optimal" => Some(published::torque_optimal()),
        "stability-optimal" => Some(published::stability_optimal()),
        "torque-optimal-y4" => Some(published::torque_optimal_y4()),
        _ => None,
    }
}

/// Loads a gait file, or a bundled gait by name when no such file exists.
fn load_gait(source: &str) -> Result<GaitDesign, Error> {
    let path = Path::new(source);
    if path.exists() {
        return GaitDesign::load(path);
    }
    bundled(source).ok_or_else(|| Error::Config(format!("no gait file or bundled gait named `{source}`")))
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::Io(_) | Error::Json(_) => 4,
        Error::FallDetected(_)
        | Error::NoImpact { .. }
        | Error::OffSurface { .. }
        | Error::InvalidChain
        | Error::DegeneratePhaseInterval(_)
        | Error::ZeroPhaseRate
        | Error::SingularOutputSelection
        | Error::SingularDecoupling { .. } => 2,
        _ => 3,
    }
}

fn check(mut run: Run) -> Result<u8, Error> {
    let design = GaitDesign { params: run.config.robot, ..published::torque_optimal() };
    let results = diagnostics::run(&design);
    for d in &results {
        println!(
            "{} {:<45} {:>11.3e} (threshold {:.0e})",
            if d.pass { "PASS" } else { "FAIL" },
            d.name,
            d.value,
            d.threshold
        );
    }
    run.write_json("check.json", &results)?;
    run.finish("check", None)?;
    Ok(if results.iter().all(|d| d.pass) { 0 } else { 1 })
}

fn optimize(mut run: Run, gait: Option<&str>, criterion: Option<CriterionArg>) -> Result<u8, Error> {
    let mut problem = run.config.optimizer.clone();
    if let Some(c) = criterion {
        problem.criterion = c.into();
    }
    let initial = match gait {
        Some(g) => load_gait(g)?,
        None => GaitDesign { params: run.config.robot, ..published::torque_optimal() },
    };
    let outcome = optimizer::optimize(&initial, &problem)?;
    let e = &outcome.evaluation;
    let feasible = e.max_equality() <= problem.settings.equality_tolerance
        && e.min_inequality() >= -problem.settings.inequality_tolerance;
    println!(
        "criterion {:.6} (initial {:.6}), {} iterations, converged {}, periodicity residual {:.2e}, min margin {:.2e}",
        e.criterion,
        outcome.initial_criterion,
        outcome.iterations,
        outcome.converged,
        e.max_equality(),
        e.min_inequality()
    );
    if let Some(d) = &outcome.design {
        let mut d = d.clone();
        d.name = match problem.criterion {
            Criterion::TorquePerStep => "optimized-torque".into(),
            Criterion::SpectralRadius => "optimized-stability".into(),
        };
        d.save(run.out.join("gait.json"))?;
        run.artifacts.push("gait.json".into());
    }
    run.write_json("optimization.json", &outcome)?;
    run.finish("optimize", gait)?;
    if !feasible {
        warn!("no feasible point found");
        return Ok(2);
    }
    Ok(0)
}

fn simulate(
    mut run: Run,
    gait: &str,
    controller: Option<ControllerKind>,
    steps: Option<usize>,
    pos: Option<f64>,
    vel: Option<f64>,
) -> Result<u8, Error> {
    let design = load_gait(gait)?;
    let mut cfg = run.config.sim_config();
    if let Some(c) = controller {
        cfg.controller = c;
    }
    if let Some(n) = steps {
        cfg.steps = n;
    }
    cfg.perturbation = Perturbation {
        position_deg: pos.unwrap_or(cfg.perturbation.position_deg),
        velocity_deg_s: vel.unwrap_or(cfg.perturbation.velocity_deg_s),
    };
    cfg.validate()?;
    run.config.simulation = cfg.clone();
    let walk = simulator::simulate_walk(&design, &simulator::initial_state(&design, &cfg), cfg.steps, &cfg);
    simulator::write_csv(&walk.steps, &design.params, &run.out)?;
    run.artifacts.extend(["positions.csv", "velocities.csv", "torques.csv", "forces.csv"].map(String::from));
    let summary = WalkSummary::new(&design, cfg.controller, &walk);
    run.write_json("summary.json", &summary)?;
    if let Ok(x_star) = stability::find_fixed_point(&design, &ZdState::from_array(design.final_zd_state())) {
        for (i, e) in simulator::convergence_series(&walk.steps, &x_star).iter().enumerate() {
            info!("step {:>3}: end-of-step error {e:.3e}", i + 1);
        }
    }
    println!("{} of {} steps completed with controller {}", walk.steps.len(), cfg.steps, cfg.controller);
    run.finish("simulate", Some(gait))?;
    match walk.failure {
        Some(e) => {
            eprintln!("error: {e}");
            Ok(exit_code(&e))
        }
        None => Ok(0),
    }
}

fn print_report(rep: &stability::StabilityReport) {
    let fmt = |ev: &[(f64, f64)]| {
        ev.iter().map(|(r, i)| format!("{r:.4}{i:+.4}i")).collect::<Vec<_>>().join(", ")
    };
    println!("open loop eigenvalues: {}", fmt(&rep.eigenvalues));
    if let Some(cl) = &rep.closed_loop_eigenvalues {
        println!("closed loop eigenvalues: {}", fmt(cl));
    }
    let rho = rep.closed_loop_spectral_radius.unwrap_or(rep.spectral_radius);
    println!("verdict: {} (spectral radius {rho:.4})", if rep.stable { "STABLE" } else { "UNSTABLE" });
}

fn analyze(mut run: Run, gait: &str) -> Result<u8, Error> {
    let design = load_gait(gait)?;
    let rep = stability::analyze(&design, &run.config.stability.perturbations)?;
    print_report(&rep);
    run.write_json("stability.json", &rep)?;
    run.finish("analyze", Some(gait))?;
    Ok(0)
}

fn dlqr(mut run: Run, gait: &str, r: Option<f64>) -> Result<u8, Error> {
    if let Some(r) = r {
        run.config.stability.r = r;
    }
    run.config.validate()?;
    let r = run.config.stability.r;
    let mut design = load_gait(gait)?;
    let rep = stability::linearize(&design, &run.config.stability.perturbations, true)?;
    let sol = stability::dlqr(&rep.az, &rep.f.expect("requested"), r)?;
    let rep = rep.with_gain(sol.k);
    print_report(&rep);
    design.event_gain = rep.event_gain(r);
    design.save(run.out.join("gait.json"))?;
    run.artifacts.push("gait.json".into());
    run.write_json("stability.json", &rep)?;
    run.finish("dlqr", Some(gait))?;
    Ok(0)
}

fn bundle(mut run: Run) -> Result<u8, Error> {
    for name in ["torque-optimal", "stability-optimal", "torque-optimal-y4"] {
        let file = format!("{name}.json");
        bundled(name).expect("bundled").save(run.out.join(&file))?;
        run.artifacts.push(file);
    }
    run.finish("bundle", None)?;
    Ok(0)
}

fn execute(cli: Cli) -> Result<u8, Error> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    std::fs::create_dir_all(&cli.out)?;
    let run = Run {
        cli_args: std::env::args().skip(1).collect(),
        config_path: cli.config.clone(),
        config,
        out: cli.out.clone(),
        artifacts: Vec::new(),
    };
    match &cli.command {
        Command::Check => check(run),
        Command::Optimize { gait, criterion } => optimize(run, gait.as_deref(), *criterion),
        Command::Simulate { gait, controller, steps, perturb_pos, perturb_vel } => {
            simulate(run, gait, *controller, *steps, *perturb_pos, *perturb_vel)
        }
        Command::Analyze { gait } => analyze(run, gait),
        Command::Dlqr { gait, r } => dlqr(run, gait, *r),
        Command::Bundle => bundle(run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
