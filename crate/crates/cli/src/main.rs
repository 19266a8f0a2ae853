//! `biped`: run walking episodes and parameter sweeps, validate robot models
//! and turn traces into plot-ready data files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use biped_core::kinematics::{self_check, SELF_CHECK_TOLERANCE};
use biped_core::model::load_model_file;
use biped_core::scenario::{ScenarioError, MODEL_ENV};
use biped_core::sim::SimError;
use biped_core::sweep::{rows_to_csv, run_sweep, SweepSpec};
use biped_core::trace::verify_metrics;
use biped_core::{default_model, run_episode, RobotModel, ScenarioConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_PLAN: u8 = 3;
const EXIT_EPISODE: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "biped",
    version,
    about = "Biped walking with predictive foot sensing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode and write trace.csv and metrics.json.
    Run(RunArgs),
    /// Run a parameter grid and write sweep.csv.
    Sweep(SweepArgs),
    /// Load a model and run the kinematic self-checks.
    Validate(ValidateArgs),
    /// Split a trace into two-column `t value` files.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the adaptation toggle.
    #[arg(long, value_enum)]
    adaptation: Option<OnOff>,
    /// Overrides the swing-foot tip error in metres; 0 disables deflection.
    #[arg(long)]
    deflection: Option<f64>,
    /// Output directory; defaults to the scenario's, else the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Sweep grid file.
    #[arg(long)]
    sweep: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Model file; the built-in model when absent.
    #[arg(long, env = MODEL_ENV)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Trace written by `run`.
    #[arg(long)]
    trace: PathBuf,
    /// Output directory for the `.dat` files.
    #[arg(long)]
    out: PathBuf,
    /// Trace columns to extract.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "cmd_z,true_z,vz,d_avg,phi_avg,alpha_avg,phi_ce,alpha_ce,phi_input,alpha_input,zmp_x,zmp_y"
    )]
    columns: Vec<String>,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

fn config_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure::new(EXIT_CONFIG, e)
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        // the planner's message already names its cause
        SimError::Plan(p) => Failure::new(EXIT_PLAN, anyhow::anyhow!("{p}")),
        SimError::Config(_) => Failure::new(EXIT_CONFIG, e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Plot(a) => cmd_plot(&a).map_err(config_failure),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_scenario(a: &ScenarioArgs) -> Result<(ScenarioConfig, RobotModel, PathBuf), Failure> {
    let mut sc = ScenarioConfig::from_file(&a.config).map_err(config_failure)?;
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    if let Some(mode) = a.adaptation {
        sc.controller.adaptation = mode == OnOff::On;
    }
    if let Some(e) = a.deflection {
        if !(e.is_finite() && e >= 0.0) {
            return Err(config_failure(ScenarioError::Invalid(format!(
                "--deflection must be a non-negative length, got {e}"
            ))));
        }
        sc.set_tip_error(e);
    }
    sc.validate().map_err(config_failure)?;
    let model = sc.resolve_model().map_err(config_failure)?;
    let out = a
        .out
        .clone()
        .or_else(|| sc.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)
        .with_context(|| format!("cannot create {}", out.display()))
        .map_err(config_failure)?;
    Ok((sc, model, out))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(config_failure)
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let (sc, model, out) = load_scenario(&a.scenario)?;
    let ep = run_episode(&sc, &model).map_err(sim_failure)?;
    write_file(&out.join("trace.csv"), &ep.trace.to_csv())?;
    write_file(&out.join("metrics.json"), &ep.metrics.to_json())?;
    let m = &ep.metrics;
    println!(
        "steps {}/{}  guard triggers {}  max impact {:.5} m/s  ticks {}",
        m.steps_completed,
        m.steps.len(),
        m.guard_triggers,
        m.max_impact_speed,
        ep.trace.records.len()
    );
    if let Err(e) = verify_metrics(&ep.trace, m) {
        return Err(Failure::new(EXIT_EPISODE, anyhow::anyhow!(e)));
    }
    match &m.failure {
        None => Ok(()),
        Some(f) => Err(Failure::new(
            EXIT_EPISODE,
            anyhow::anyhow!("episode failed: {f}"),
        )),
    }
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), Failure> {
    let (sc, model, out) = load_scenario(&a.scenario)?;
    let text = fs::read_to_string(&a.sweep)
        .with_context(|| format!("cannot read {}", a.sweep.display()))
        .map_err(config_failure)?;
    let spec = SweepSpec::from_toml(&text).map_err(config_failure)?;
    let rows = run_sweep(&sc, &spec, &model);
    write_file(&out.join("sweep.csv"), &rows_to_csv(&rows))?;
    let failed = rows.iter().filter(|r| !r.success).count();
    println!("{} cells, {} failed", rows.len(), failed);
    if rows.iter().any(|r| r.plan_error) {
        return Err(Failure::new(
            EXIT_PLAN,
            anyhow::anyhow!("some cells could not be planned"),
        ));
    }
    if failed > 0 {
        return Err(Failure::new(
            EXIT_EPISODE,
            anyhow::anyhow!("{failed} cells failed"),
        ));
    }
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> Result<(), Failure> {
    let model = match &a.model {
        Some(p) => load_model_file(p).map_err(config_failure)?,
        None => default_model(),
    };
    let report = self_check(&model).map_err(config_failure)?;
    println!(
        "model ok: {} joints, leg length {:.4} m",
        model.joints.len(),
        model.leg_length()
    );
    println!(
        "IK/FK round trip on {} configurations: max position error {:.3e} m, max orientation error {:.3e} rad",
        report.configurations, report.max_position_error, report.max_orientation_error
    );
    if report.max_position_error > SELF_CHECK_TOLERANCE
        || report.max_orientation_error > SELF_CHECK_TOLERANCE
    {
        return Err(config_failure(anyhow::anyhow!(
            "round-trip error exceeds {SELF_CHECK_TOLERANCE:e}"
        )));
    }
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.trace)
        .with_context(|| format!("cannot read {}", a.trace.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().context("trace is empty")?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let t_col = col("t").context("trace has no `t` column")?;
    let mut picked = Vec::new();
    for name in &a.columns {
        match col(name) {
            Some(i) => picked.push((name.as_str(), i)),
            None => bail!("trace has no column `{name}`"),
        }
    }
    let mut outputs = vec![String::new(); picked.len()];
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            bail!(
                "trace line {} has {} fields, expected {}",
                n + 2,
                fields.len(),
                header.len()
            );
        }
        for (buf, (_, i)) in outputs.iter_mut().zip(&picked) {
            let _ = writeln!(buf, "{} {}", fields[t_col], fields[*i]);
        }
    }
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    for (buf, (name, _)) in outputs.iter().zip(&picked) {
        let path = a.out.join(format!("{name}.dat"));
        fs::write(&path, buf).with_context(|| format!("cannot write {}", path.display()))?;
    }
    println!("wrote {} files to {}", picked.len(), a.out.display());
    Ok(())
}
