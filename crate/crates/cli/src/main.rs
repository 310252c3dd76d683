//! `combust`: stability laboratory for combustion traveling waves.
//!
//! Exit codes: 0 success, 1 diagnosed numerical failure, 2 config or usage
//! error.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

impl From<combust::Error> for CliError {
    fn from(e: combust::Error) -> Self {
        if e.is_input_error() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "combust", version, about = "Stability laboratory for traveling waves of Majda's combustion model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    #[serde(skip)]
    pub config: PathBuf,
    /// Artifact directory.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProfileArg {
    /// Profile CSV written by `combust profile`.
    #[arg(long)]
    #[serde(skip)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Outer,
    Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Gaussian,
    Bump,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Q,
    K,
    D,
    S,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rankine–Hugoniot roots u₋ for the configured u₊ and a speed s.
    Rh {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: RhArgs,
    },
    /// Chapman–Jouguet speeds for the configured u₊.
    Cj {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: CjArgs,
    },
    /// Traveling-wave profile (CSV xi,u,z,y plus a JSON sidecar).
    Profile {
        #[command(flatten)]
        common: Common,
    },
    /// Limiting eigenvalues μ(λ) on a grid of λ.
    Modes {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        args: ModesArgs,
    },
    /// Dispersion curves λ(ξ) of the limiting operators.
    Dispersion {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        args: DispersionArgs,
    },
    /// Evans function on the outer and origin contours with a stability report.
    Evans {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        profile: ProfileArg,
    },
    /// Winding number of D along one contour.
    Winding {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        args: WindingArgs,
    },
    /// Stability verdict.
    Verdict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        profile: ProfileArg,
    },
    /// Resolvent kernel G_λ(x, y) on a grid.
    Resolvent {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        args: ResolventArgs,
    },
    /// Green function G(x, t; y) by inverse Laplace transform.
    Green {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        args: GreenArgs,
    },
    /// Nonlinear perturbation run with phase tracking and decay fits.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        profile: ProfileArg,
        #[command(flatten)]
        args: EvolveArgs,
    },
    /// Verdicts over a parameter range.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Checks the model hypotheses.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RhArgs {
    /// Wave speed.
    #[arg(long)]
    pub s: f64,
    /// Overrides problem.u_plus (default 0 without a problem block).
    #[arg(long)]
    pub u_plus: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CjArgs {
    #[arg(long)]
    pub u_plus: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModesArgs {
    /// λ grid: Re λ ∈ [0, re_max], Im λ ∈ [−im_max, im_max].
    #[arg(long, default_value_t = 2.0)]
    pub re_max: f64,
    #[arg(long, default_value_t = 2.0)]
    pub im_max: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 21)]
    pub n: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DispersionArgs {
    #[arg(long, default_value_t = 10.0)]
    pub xi_max: f64,
    #[arg(long, default_value_t = 401)]
    pub n: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WindingArgs {
    #[arg(long, value_enum, default_value = "outer")]
    pub path: PathKind,
    /// Outer radius R (default from the limiting coefficients).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Origin indentation radius r₀.
    #[arg(long)]
    pub r0: Option<f64>,
    /// Multiplier for the initial node counts.
    #[arg(long, default_value_t = 1)]
    pub nodes: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ResolventArgs {
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub lambda_re: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lambda_im: f64,
    /// x grid: n intervals on [−half_width, half_width].
    #[arg(long, default_value_t = 6.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 120)]
    pub n: usize,
    /// Source points y (snapped to the grid).
    #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GreenArgs {
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 10.0)]
    pub half_width: f64,
    /// Intervals on [−half_width, half_width]; dx = 0.1 leaves a few percent
    /// quadrature error in --check-evolution.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
    pub y: Vec<f64>,
    /// Also compare ∫G·g against linearized time stepping for a Gaussian g.
    #[arg(long)]
    pub check_evolution: bool,
    /// Width of the Gaussian used by --check-evolution.
    #[arg(long, default_value_t = 0.5)]
    pub width: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvolveArgs {
    /// Overrides run.perturbation.
    #[arg(long, value_enum)]
    pub perturbation: Option<PerturbationKind>,
    /// CSV with columns x,u,z for --perturbation file.
    #[arg(long)]
    #[serde(skip)]
    pub perturbation_file: Option<PathBuf>,
    /// Weighted size sup (1+|x|)^{3/2}|U₀|.
    #[arg(long = "E0")]
    pub e0: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub snap_every: Option<f64>,
    /// Trajectory CSV: snapshots kept (evenly spaced) and spatial stride.
    #[arg(long, default_value_t = 40)]
    pub frames: usize,
    #[arg(long, default_value_t = 8)]
    pub stride: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: Axis,
    #[arg(long, allow_hyphen_values = true)]
    pub min: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub max: f64,
    #[arg(long, default_value_t = 10)]
    pub points: usize,
}

/// Caps rayon at COMBUST_THREADS workers when set.
fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("COMBUST_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("COMBUST_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = init_threads().and_then(|_| commands::dispatch(cli.command));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
