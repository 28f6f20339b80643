//! `skewdiff`: seeded, reproducible runs of the skewdiff-core algorithms
//! writing plot-ready CSV and JSON.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{parse_range, Points};

#[derive(Debug, Parser)]
#[command(name = "skewdiff", version, about = "Diffusion across interfaces: densities, paths, functionals, PDE, homogenization, networks")]
pub struct Cli {
    /// Directory receiving the CSV and JSON outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "SKEWDIFF_THREADS")]
    pub threads: Option<usize>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition density on a grid of end points.
    Density(DensityArgs),
    /// Sample paths.
    Sample(SampleArgs),
    /// Exit statistics, survival curves, occupation and local times.
    #[command(subcommand)]
    Functionals(FunctionalsCommand),
    /// Finite-volume solution of the interface problem.
    Pde(PdeArgs),
    /// Taylor–Aris dispersion of a layered cross-section.
    Homogenize(HomogenizeArgs),
    /// Dispersal kernels and PDE cross-checks on river networks.
    #[command(subcommand)]
    Network(NetworkCommand),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MediumArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub d_plus: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub d_minus: Option<f64>,
    /// Interface parameter; defaults to the flux-continuous D+/(D+ + D-).
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    ExactStep,
    EulerTransformed,
    SkewWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityKind {
    /// Flux-continuous physical density (lambda ignored).
    Physical,
    /// Lambda-skew diffusion density.
    Skew,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    /// End points as `lo:hi:step`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub y_grid: Points,
    /// Defaults to `skew` when --lambda is given, `physical` otherwise.
    #[arg(long, value_enum)]
    pub kind: Option<DensityKind>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x0: f64,
}

#[derive(Debug, Subcommand)]
pub enum FunctionalsCommand {
    /// Exit probabilities and mean exit time of (a, b).
    Exit {
        #[command(flatten)]
        medium: MediumArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        /// Also estimate by Monte Carlo.
        #[arg(long)]
        mc: bool,
    },
    /// Survival curve of the first passage to a level.
    Survival {
        #[command(flatten)]
        medium: MediumArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, allow_hyphen_values = true)]
        level: f64,
        /// Times as `lo:hi:step`.
        #[arg(long, value_parser = parse_range)]
        t_grid: Points,
    },
    /// Occupation-time balance from the interface for several lambdas.
    Occupation {
        #[command(flatten)]
        medium: MediumArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Comma-separated lambdas; defaults to the medium's.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
    },
    /// One-sided natural local times at a level.
    LocalTime {
        #[command(flatten)]
        medium: MediumArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        level: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long)]
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimeSchemeArg {
    Implicit,
    Explicit,
    CrankNicolson,
}

#[derive(Debug, Clone, Args)]
pub struct PdeArgs {
    #[command(flatten)]
    pub medium: MediumArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub n_cells: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<TimeSchemeArg>,
    /// Unit point source location.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x0: f64,
    /// `neumann` or `dirichlet:<value>`.
    #[arg(long, default_value = "neumann")]
    pub left: String,
    #[arg(long, default_value = "neumann")]
    pub right: String,
    /// Extra snapshot times, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<f64>,
    /// Write a breakthrough curve at this location.
    #[arg(long, allow_hyphen_values = true)]
    pub observe: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct HomogenizeArgs {
    /// Cross-section as JSON; otherwise `[layers]` from the config or the
    /// two-layer parabolic case from the flags below.
    #[arg(long)]
    pub layers: Option<PathBuf>,
    #[arg(long)]
    pub d_plus: Option<f64>,
    #[arg(long)]
    pub d_minus: Option<f64>,
    #[arg(long)]
    pub v0: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Also estimate by long-time Monte Carlo.
    #[arg(long)]
    pub mc: bool,
    #[arg(long, default_value_t = 400.0)]
    pub t_long: f64,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Args)]
pub struct NetworkArgs {
    /// Network file (`edge_id parent_id length velocity area diffusivity`).
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub start_edge: String,
    #[arg(long)]
    pub start_x: f64,
    #[arg(long, default_value_t = 0.05)]
    pub bin_width: f64,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Subcommand)]
pub enum NetworkCommand {
    /// Dispersal kernel at an exponential settling time.
    Kernel {
        #[command(flatten)]
        net: NetworkArgs,
        #[arg(long)]
        sigma: f64,
    },
    /// Monte Carlo histogram against the network PDE at a fixed time.
    Crosscheck {
        #[command(flatten)]
        net: NetworkArgs,
        #[arg(long)]
        t_end: f64,
        /// PDE grid spacing; defaults to the shortest edge over 200.
        #[arg(long)]
        dx: Option<f64>,
        #[arg(long, default_value_t = 1e-4)]
        pde_dt: f64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Comma-separated criteria; all by default.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Vec<u8>,
    /// Reduced sample sizes.
    #[arg(long)]
    pub smoke: bool,
    /// Include the long Monte Carlo check (also enabled by SKEWDIFF_SLOW=1).
    #[arg(long)]
    pub slow: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Outcome of a run that completed without configuration errors.
pub enum Outcome {
    Done,
    VerificationFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn ranges_parse_as_single_values() {
        let cli = Cli::try_parse_from(["skewdiff", "density", "--t", "1", "--y-grid=-1:1:0.5"]).unwrap();
        let Command::Density(a) = cli.command else { panic!("density expected") };
        assert_eq!(a.y_grid.len(), 5);
    }
}
