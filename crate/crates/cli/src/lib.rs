//! `spinlat` command-line front end.
//!
//! Every subcommand reads a [`RunConfig`] (optional JSON file, then flag
//! overrides), writes its outputs under the configured output directory and
//! returns 0 on success, 2 on invalid input and 1 on a runtime failure.

mod commands;
pub mod config;
mod output;
mod validate;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spinlat::Execution;

pub use config::{parse_range, RunConfig, CONFIG_SCHEMA};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn validation(m: impl Into<String>) -> Self {
        CliError::Validation(m.into())
    }

    pub fn runtime(m: impl Into<String>) -> Self {
        CliError::Runtime(m.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<spinlat::Error> for CliError {
    fn from(e: spinlat::Error) -> Self {
        match e {
            spinlat::Error::Unstable(_) | spinlat::Error::Csv(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spinlat", version, about = "Spin-phonon relaxation tensors and T1/T2 for a two-level spin")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, global = true, env = "SPINLAT_JOBS", default_value_t = 0)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write displaced geometries and the run manifest.
    Displace(DisplaceArgs),
    /// Assemble coupling derivatives from completed runs.
    Couplings(CouplingsArgs),
    /// Relaxation tensor, T1/T2 and mode attribution at one (T, B) point.
    Tensor(TensorArgs),
    /// Tensor and T1/T2 over a temperature × field grid.
    Sweep(SweepArgs),
    /// Mode attribution tables.
    Attribute(TensorArgs),
    /// Integrate the density matrix and fit T1/T2.
    Dynamics(DynamicsArgs),
    /// Run the invariant checks against the supplied data.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct DisplaceArgs {
    /// Normal-mode file.
    #[arg(long)]
    pub modes: Option<PathBuf>,
    /// Geometric step, Å.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Derivative order, 1 or 2.
    #[arg(long)]
    pub order: Option<u8>,
    /// diagonal_only or all_pairs.
    #[arg(long)]
    pub pairing: Option<String>,
}

#[derive(Debug, Args)]
pub struct CouplingsArgs {
    /// manifest.json with completed runs.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Mode file; defaults to the one named in the manifest.
    #[arg(long)]
    pub modes: Option<PathBuf>,
    /// Manifest of the same runs at another step size.
    #[arg(long)]
    pub converge_with: Option<PathBuf>,
    /// Field direction x,y,z.
    #[arg(long, value_parser = config::parse_vec3)]
    pub field_dir: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Args)]
pub struct PhysicsArgs {
    /// couplings.json written by `spinlat couplings`.
    #[arg(long)]
    pub couplings: Option<PathBuf>,
    /// Temperature(s), K: value, list or start:stop:count.
    #[arg(long = "temp", value_parser = config::parse_grid)]
    pub temperatures: Option<config::Grid>,
    /// Field magnitude(s), mT: value, list or start:stop:count.
    #[arg(long = "field-mt", value_parser = config::parse_grid)]
    pub fields: Option<config::Grid>,
    /// Field direction x,y,z.
    #[arg(long, value_parser = config::parse_vec3)]
    pub field_dir: Option<[f64; 3]>,
    /// Quantization axis x,y,z.
    #[arg(long, value_parser = config::parse_vec3)]
    pub axis: Option<[f64; 3]>,
    /// Default Lorentzian width λ, cm⁻¹.
    #[arg(long)]
    pub linewidth: Option<f64>,
    /// Default mode damping γ, cm⁻¹.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// diagonal_only or all_pairs.
    #[arg(long)]
    pub pairing: Option<String>,
    /// paper or dissipator.
    #[arg(long)]
    pub convention: Option<String>,
    /// Fixed Larmor frequency, cm⁻¹.
    #[arg(long)]
    pub omega: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TensorArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// Modes listed in attribution tables.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
}

#[derive(Debug, Args)]
pub struct DynamicsArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// lindblad, redfield or both.
    #[arg(long)]
    pub model: Option<String>,
    /// Secular Redfield generator.
    #[arg(long)]
    pub secular: bool,
    /// End of the T1 run, μs; defaults to 5 T1.
    #[arg(long)]
    pub t1_end: Option<f64>,
    /// Samples in the T1 run.
    #[arg(long)]
    pub t1_steps: Option<usize>,
    /// End of the T2 run, μs; defaults to 5 T2.
    #[arg(long)]
    pub t2_end: Option<f64>,
    /// Samples in the T2 run.
    #[arg(long)]
    pub t2_steps: Option<usize>,
    /// Fit window start, μs.
    #[arg(long)]
    pub fit_start: Option<f64>,
    /// Fit window end, μs.
    #[arg(long)]
    pub fit_end: Option<f64>,
    /// Step safety factor: h = 1/(safety·‖L‖).
    #[arg(long)]
    pub safety: Option<f64>,
    /// Upper bound on the integrator step, μs.
    #[arg(long)]
    pub max_step: Option<f64>,
    /// Skip writing trajectory CSV files.
    #[arg(long)]
    pub no_trajectories: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// Manifest for the sign-gauge check, or to assemble couplings.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Second manifest at another step, for the convergence check.
    #[arg(long)]
    pub converge_with: Option<PathBuf>,
    /// Seed for the randomized checks.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parse `argv` (program name first), run the subcommand and return the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::runtime(format!("cannot start worker pool: {e}")))?;
    let exec = if cli.jobs == 1 { Execution::Sequential } else { Execution::Parallel };
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.paths.output_dir = out;
    }
    pool.install(|| commands::dispatch(cli.command, cfg, exec))
}
