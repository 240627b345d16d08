//! `iet-renorm`: experiment driver for the renormalization laboratory.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure, 4 budget.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::CommandCtx;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "iet-renorm", version, about = "IET renormalization laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    precision: Option<u32>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out: Option<String>,
    /// Permutation name (rot2, rev3, rev4, rev5, ...).
    #[arg(long, global = true)]
    permutation: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a zippered-rectangle point (π, λ, τ).
    Sample,
    /// Run the balanced acceleration and write the path record.
    Induct,
    /// Monte Carlo Lyapunov spectrum over seeded trials.
    Spectrum,
    /// Estimate the correction operator and the corrected growth profile.
    Correct,
    /// Deviation-exponent fit for a mean-zero piecewise-constant cocycle.
    Deviation,
    /// Special-flow diagnostics: crossing counts, ergodic integrals, tails.
    Flow,
    /// Skew-product diagnostics: occupation ratios and rigidity towers.
    Skew,
    /// Aggregate manifests under the output directory.
    Report,
}

fn main() {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error[{}]: {e}", e.code());
                std::process::exit(e.exit_code());
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.precision {
        cfg.precision_bits = p;
    }
    if let Some(d) = cli.depth {
        cfg.depth = d;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(p) = &cli.permutation {
        cfg.permutation = config::PermSpec::Named(p.clone());
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error[{}]: {e}", e.code());
        std::process::exit(e.exit_code());
    }
    let cc = match CommandCtx::new(cfg) {
        Ok(cc) => cc,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            std::process::exit(e.exit_code());
        }
    };
    let result = match cli.command {
        Command::Sample => commands::cmd_sample(&cc),
        Command::Induct => commands::cmd_induct(&cc),
        Command::Spectrum => commands::cmd_spectrum(&cc),
        Command::Correct => commands::cmd_correct(&cc),
        Command::Deviation => commands::cmd_deviation(&cc),
        Command::Flow => commands::cmd_flow(&cc),
        Command::Skew => commands::cmd_skew(&cc),
        Command::Report => commands::cmd_report(&cc),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            std::process::exit(e.exit_code());
        }
    }
}
