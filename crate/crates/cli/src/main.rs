//! `symbreak`: certify symmetry breaking, evaluate energies, run particle
//! descent and sample potentials.
//!
//! Exit codes: 0 success or certified pass, 1 certificate failed or search
//! inconclusive, 2 usage, domain or input error, 3 particle collapse.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;

#[derive(Debug, Parser)]
#[command(name = "symbreak", version, about = "Certified break of radial symmetry for interaction energies")]
struct Cli {
    /// TOML file with `[global]` and per-command tables; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for reports, traces and samples [default: $SYMBREAK_OUTPUT_DIR or .]
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Seed for every randomized step [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel regions [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Absolute tolerance of adaptive quadrature [default: 1e-10].
    #[arg(long, global = true)]
    quad_tol: Option<f64>,

    /// Shell-pair integration variable: gauss_phi or gauss_t [default: gauss_phi].
    #[arg(long, global = true)]
    quad_method: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a symmetry-breaking certificate and write its JSON report.
    #[command(subcommand)]
    Certify(CertifyCommand),
    /// Energy of a measure file or of the simplex competitor.
    Energy(EnergyArgs),
    /// Numeric sup of the kernel mass on the well, next to the analytic bound.
    KernelSup(KernelSupArgs),
    /// Particle descent; writes trace.csv, final_config.txt and diagnostics.json.
    ///
    /// trace.csv columns: iter, energy, grad_norm (largest per-particle
    /// gradient norm), step (accepted line-search step).
    Minimize(MinimizeArgs),
    /// Tabulate a potential; CSV columns r, w, dw (dw is NaN where w is not
    /// differentiable).
    PotentialSample(SampleArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonCert {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// numeric_sup or analytic [default: numeric_sup].
    #[arg(long)]
    pub mode: Option<String>,
    /// Absolute slack required on top of a zero margin [default: 1e-9].
    #[arg(long)]
    pub slack: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum CertifyCommand {
    /// Prototype well against simplex Dirac masses.
    Prototype(CommonCert),
    /// Well plus a nonnegative excess W1 against simplex balls.
    General {
        #[command(flatten)]
        common: CommonCert,
        /// W1: a config file path or inline `variant=...;key=value`.
        #[arg(long)]
        w1: Option<String>,
        /// Ball radius [default: eps/2].
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Smooth composite potential, or a search for certified (alpha, beta).
    Composite {
        #[command(flatten)]
        common: CommonCert,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Exponent of the short-range repulsion [default: d - 3/2].
        #[arg(long)]
        power_s: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        /// Halve alpha and beta from (0.1, eps/2) until the certificate passes.
        #[arg(long)]
        search: bool,
    },
    /// Same as `composite --search`.
    Search {
        #[command(flatten)]
        common: CommonCert,
        #[arg(long)]
        power_s: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Measure file (kinds dirac, balls, radial, particles).
    #[arg(long, conflicts_with = "competitor")]
    pub measure: Option<PathBuf>,
    /// Build the simplex competitor instead: dirac or balls.
    #[arg(long)]
    pub competitor: Option<String>,
    /// Ball radius of the competitor.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Potential: a config file path or inline `variant=...;key=value`.
    #[arg(long)]
    pub potential: Option<String>,
    /// Dimension for radial files without a `dim` header and for competitors.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Monte Carlo samples per pair of balls [default: 200000].
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct KernelSupArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Initial truncation of the shell radius [default: 5].
    #[arg(long)]
    pub s_max: Option<f64>,
    #[arg(long)]
    pub coarse_step: Option<f64>,
    #[arg(long)]
    pub refinements: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MinimizeArgs {
    /// Potential: a config file path or inline `variant=...;key=value`.
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of particles [default: 30 (d + 1)].
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub step0: Option<f64>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// gaussian:SCALE, ball:RADIUS or file:PATH [default: gaussian:1].
    #[arg(long)]
    pub init: Option<String>,
    /// lbfgs or steepest [default: lbfgs].
    #[arg(long)]
    pub direction: Option<String>,
    /// Single-linkage cluster threshold [default: 0.2].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Radial lower bound to compare with [default: numeric bound of the well].
    #[arg(long, allow_hyphen_values = true)]
    pub radial_bound: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub r_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub r_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub step: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = commands::run(cli);
    match outcome {
        Outcome::Success => ExitCode::SUCCESS,
        Outcome::Failed => ExitCode::from(1),
        Outcome::Usage(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Outcome::Collapse(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
