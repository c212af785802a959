//! `hmcf`: run curve-flow simulations, radial and sphere reductions, and
//! check suites from the command line.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 a check failed,
//! 3 numerical failure. The environment variable `HMCF_SEED` is reserved;
//! every algorithm here is deterministic and it is not read.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod specs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hmcf_core::io::IoError;
use hmcf_core::FlowError;

#[derive(Parser)]
#[command(
    name = "hmcf",
    version,
    about = "Forced hyperbolic mean curvature flow simulator and checker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a convex curve given by its support function.
    EvolveCurve(EvolveArgs),
    /// Integrate the radial ODE and check its collapse-time and energy bounds.
    Radial(RadialArgs),
    /// Evolve a round sphere and check the evolution identities on it.
    Sphere(SphereArgs),
    /// Run a comparison or monotonicity check suite.
    Verify(VerifyArgs),
    /// Run the radial bound suite over a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
pub struct NumericArgs {
    /// Number of angular nodes (even, at least 16).
    #[arg(long = "n", default_value_t = 256)]
    pub n_nodes: usize,
    #[arg(long, default_value_t = 0.4)]
    pub cfl: f64,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub dt_max: f64,
    /// Record a snapshot every this many steps.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Record snapshots at multiples of this interval instead of by stride.
    #[arg(long)]
    pub output_interval: Option<f64>,
    /// Collapse threshold as a fraction of max h.
    #[arg(long, default_value_t = 1e-4)]
    pub collapse_fraction: f64,
    /// Curvature blow-up threshold as a multiple of max initial curvature.
    #[arg(long, default_value_t = 1e3)]
    pub k_max_factor: f64,
    /// Shock threshold as a multiple of the initial normalised total variation of k.
    #[arg(long, default_value_t = 50.0)]
    pub tv_factor: f64,
}

#[derive(Args)]
pub struct EvolveArgs {
    /// Initial support function: const:<v>, circle:<r>[@<cx>,<cy>] or harmonic:<a0>,cos<m>=<a>,sin<m>=<b>,...
    #[arg(long)]
    pub h: String,
    /// Initial inward normal speed, same syntax as --h.
    #[arg(long, default_value = "const:0")]
    pub f: String,
    /// Forcing c(t): const:<v> or table:<path>.
    #[arg(long, default_value = "const:0")]
    pub c: String,
    #[command(flatten)]
    pub numeric: NumericArgs,
    /// Trajectory CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report JSON output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct RadialArgs {
    #[arg(long)]
    pub c0: f64,
    #[arg(long)]
    pub r0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub r1: f64,
    /// Forcing c̄(t), which must be non-positive: const:<v> or table:<path>.
    #[arg(long, default_value = "const:0")]
    pub cbar: String,
    #[arg(long, default_value_t = 1e-3)]
    pub dt_max: f64,
    /// Sample CSV output (t, r, r_t).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report JSON output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// One-row summary CSV in the sweep format.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args)]
pub struct SphereArgs {
    /// Intrinsic dimension n of the sphere.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub r0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub r1: f64,
    /// Forcing c₁(t), which must be non-positive: const:<v> or table:<path>.
    #[arg(long, default_value = "const:0")]
    pub c1: String,
    /// Number of sample times for the identity checks.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Containment,
    Convexity,
    Length,
    Sigma,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Outer initial support function (containment).
    #[arg(long)]
    pub outer: Option<String>,
    /// Inner initial support function (containment).
    #[arg(long)]
    pub inner: Option<String>,
    #[arg(long, default_value = "const:0")]
    pub f_outer: String,
    #[arg(long, default_value = "const:0")]
    pub f_inner: String,
    /// Initial support function (single-trajectory suites).
    #[arg(long)]
    pub h: Option<String>,
    #[arg(long, default_value = "const:0")]
    pub f: String,
    /// Stored trajectory CSV to check instead of running one (single-trajectory suites).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long, default_value = "const:0")]
    pub c: String,
    /// Check slack; defaults to 1e-6 for ordering, 1e-3 for convexity and derivative matching.
    #[arg(long)]
    pub slack: Option<f64>,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Comma-separated c0 values.
    #[arg(long, allow_hyphen_values = true)]
    pub c0: String,
    /// Comma-separated r0 values.
    #[arg(long, allow_hyphen_values = true)]
    pub r0: String,
    /// Comma-separated r1 values.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub r1: String,
    /// Comma-separated constant c̄ values.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub cbar: String,
    #[arg(long, default_value_t = 1e-3)]
    pub dt_max: f64,
    /// Summary CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Outcome of a command that did not succeed, mapped to an exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    CheckFailed(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::CheckFailed(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::CheckFailed(m) | Failure::Numerical(m) => m,
        }
    }

    /// Prefixes the message with the offending option.
    pub fn field(name: &str) -> impl Fn(String) -> Failure + '_ {
        move |msg| Failure::Usage(format!("{name}: {msg}"))
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::InvalidInput(_)
            | FlowError::InvalidFixture(_)
            | FlowError::InvalidConfig(_)
            | FlowError::NotApplicable(_)
            | FlowError::InvalidComparison(_) => Failure::Usage(e.to_string()),
            // non-convex data is rejected before any stepping
            FlowError::ConvexityLoss { tau: 0.0, .. } => Failure::Usage(e.to_string()),
            FlowError::ConvexityLoss { .. }
            | FlowError::Domain(_)
            | FlowError::IntegrationFailure { .. } => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Flow(f) => f.into(),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::EvolveCurve(a) => commands::evolve_curve(&a),
        Command::Radial(a) => commands::radial(&a),
        Command::Sphere(a) => commands::sphere(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hmcf: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
