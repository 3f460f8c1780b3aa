//! Command-line front end for exclusion-process experiments on rooted
//! random trees.
//!
//! Every subcommand reads the shared TOML experiment config, applies any
//! command-line overrides, and writes stamped artifacts into the output
//! directory. The process exits 0 when all acceptance-relevant checks in
//! the run passed, 1 when at least one failed, and 2 on errors.

mod commands;
mod config;
mod emit;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{CoupleMode, Ctx, WindowCheck};
use config::ExperimentConfig;
use emit::{Emitter, Format};

#[derive(Parser)]
#[command(
    name = "tree-tasep",
    version,
    about = "Exclusion processes with a root reservoir on rooted random trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Overrides take precedence over the
/// corresponding config fields and feed into the stamped config hash.
#[derive(Args)]
struct Common {
    /// Experiment config file (TOML, `version = 1` header).
    #[arg(long)]
    config: PathBuf,
    /// Override the base dynamics seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replica count.
    #[arg(long)]
    replicas: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emission formats, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Option<Vec<Format>>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the engine and emit current and density measurements.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Points on the time grid of the current series.
        #[arg(long, default_value_t = 200)]
        grid: u64,
        /// Deepest generation of the density profile.
        #[arg(long, default_value_t = 4)]
        profile_depth: u64,
    },
    /// Compare empirical disentanglement generations with the bound.
    Disentangle {
        #[command(flatten)]
        common: Common,
        /// Number of leading particles.
        #[arg(long)]
        n: u64,
        /// Generation each run is pushed to before reading off the result;
        /// defaults to one past the bound.
        #[arg(long)]
        generation_cap: Option<u64>,
        /// Required fraction of replicas within the bound.
        #[arg(long, default_value_t = 0.99)]
        min_fraction: f64,
    },
    /// Desk test of the passage-time window for a generation's current.
    CurrentWindow {
        #[command(flatten)]
        common: Common,
        /// Number of particles the window refers to.
        #[arg(long)]
        n: u64,
        /// Target generation; defaults to the disentanglement bound.
        #[arg(long)]
        ell: Option<u64>,
        /// Which side of the window to test.
        #[arg(long, value_enum, default_value_t = WindowCheck::Both)]
        check: WindowCheck,
        /// Required fraction of replicas passing each side.
        #[arg(long, default_value_t = 0.95)]
        min_fraction: f64,
    },
    /// Desk test of the generation window reached by a fixed time.
    GenerationWindow {
        #[command(flatten)]
        common: Common,
        /// Observation time.
        #[arg(long)]
        t: f64,
        /// Required fraction of replicas inside the window.
        #[arg(long, default_value_t = 0.9)]
        min_fraction: f64,
    },
    /// Banded last-passage values, the dynamics oracle, and tail checks.
    Lpp {
        #[command(flatten)]
        common: Common,
        /// Number of particles (columns reach n + m).
        #[arg(long)]
        n: u64,
        /// Band width and deepest tracked generation.
        #[arg(long)]
        m: u64,
        /// Skip the cell-by-cell comparison against the dynamics.
        #[arg(long)]
        skip_oracle: bool,
        /// Slack in the tail threshold.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Monte Carlo samples for the tail estimate.
        #[arg(long, default_value_t = 200)]
        tail_samples: u64,
        /// Largest acceptable tail exceedance fraction.
        #[arg(long, default_value_t = 0.05)]
        max_exceed: f64,
    },
    /// Pathwise ordering certificates for the couplings.
    Couple {
        #[command(flatten)]
        common: Common,
        /// Which coupling to run.
        #[arg(long, value_enum, default_value_t = CoupleMode::Both)]
        mode: CoupleMode,
        /// Lower reservoir rate of the canonical pair; defaults to half the
        /// upper rate.
        #[arg(long)]
        lambda1: Option<f64>,
        /// Upper reservoir rate of the canonical pair; defaults to the
        /// config reservoir rate.
        #[arg(long)]
        lambda2: Option<f64>,
    },
    /// Exact stationary laws of finite truncations and their checks.
    Equilibrium {
        #[command(flatten)]
        common: Common,
        /// Largest retained generation.
        #[arg(long)]
        depth: u32,
        /// Also solve one generation deeper and check stochastic ordering.
        #[arg(long)]
        compare_next: bool,
        /// Density at which to test the product-measure generator pairing.
        #[arg(long)]
        flow_rho: Option<f64>,
        /// Sampled increasing indicators or vertex sets per check.
        #[arg(long, default_value_t = 200)]
        sets: usize,
        /// Tolerance for the ordering and pairing checks.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Cross-check marginals against a direct trajectory simulation.
        #[arg(long)]
        empirical: bool,
    },
    /// Classify the configured rates as flow, superflow, or subflow.
    ClassifyRates {
        #[command(flatten)]
        common: Common,
        /// Generations examined.
        #[arg(long, default_value_t = 8)]
        horizon: u32,
        /// Net-flow tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Evaluate the analytic bounds without simulating.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Particle count.
        #[arg(long)]
        n: u64,
        /// Target generation for the passage-time window.
        #[arg(long)]
        ell: Option<u64>,
        /// Observation time for the generation window.
        #[arg(long)]
        t: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Disentangle { .. } => "disentangle",
            Command::CurrentWindow { .. } => "current-window",
            Command::GenerationWindow { .. } => "generation-window",
            Command::Lpp { .. } => "lpp",
            Command::Couple { .. } => "couple",
            Command::Equilibrium { .. } => "equilibrium",
            Command::ClassifyRates { .. } => "classify-rates",
            Command::Bounds { .. } => "bounds",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Disentangle { common, .. }
            | Command::CurrentWindow { common, .. }
            | Command::GenerationWindow { common, .. }
            | Command::Lpp { common, .. }
            | Command::Couple { common, .. }
            | Command::Equilibrium { common, .. }
            | Command::ClassifyRates { common, .. }
            | Command::Bounds { common, .. } => common,
        }
    }
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
        Format::Svg => "svg",
    }
}

fn parse_format(name: &str) -> Result<Format> {
    match name {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        "svg" => Ok(Format::Svg),
        other => bail!("unknown format {other:?}"),
    }
}

/// Loads the config, applies flag overrides, and opens the emitter.
fn prepare(common: &Common, subcommand: &str) -> Result<Ctx> {
    let text = fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", common.config.display()))?;
    if let Some(pinned) = &cfg.subcommand {
        if pinned != subcommand {
            bail!("config pins subcommand {pinned:?} but {subcommand:?} was invoked");
        }
    }
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(replicas) = common.replicas {
        cfg.run.replicas = replicas;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = Some(out.display().to_string());
    }
    if let Some(formats) = &common.format {
        cfg.output.formats = Some(formats.iter().map(|f| format_name(*f).to_string()).collect());
    }
    cfg.validate().map_err(|e| anyhow::anyhow!(e))?;
    let dir = PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| "out".to_string()));
    let formats: Vec<Format> = match &cfg.output.formats {
        Some(names) => names
            .iter()
            .map(|n| parse_format(n))
            .collect::<Result<_>>()?,
        None => vec![Format::Csv, Format::Json],
    };
    let emitter = Emitter::new(&dir, &formats, cfg.run.seed, &cfg.hash())?;
    Ok(Ctx { cfg, emitter })
}

fn run(cli: Cli) -> Result<Vec<String>> {
    let mut ctx = prepare(cli.command.common(), cli.command.name())?;
    let failed = match cli.command {
        Command::Simulate {
            grid,
            profile_depth,
            ..
        } => commands::simulate_cmd(&mut ctx, grid, profile_depth)?,
        Command::Disentangle {
            n,
            generation_cap,
            min_fraction,
            ..
        } => commands::disentangle_cmd(&mut ctx, n, generation_cap, min_fraction)?,
        Command::CurrentWindow {
            n,
            ell,
            check,
            min_fraction,
            ..
        } => commands::current_window_cmd(&mut ctx, n, ell, check, min_fraction)?,
        Command::GenerationWindow {
            t, min_fraction, ..
        } => commands::generation_window_cmd(&mut ctx, t, min_fraction)?,
        Command::Lpp {
            n,
            m,
            skip_oracle,
            alpha,
            tail_samples,
            max_exceed,
            ..
        } => commands::lpp_cmd(&mut ctx, n, m, skip_oracle, alpha, tail_samples, max_exceed)?,
        Command::Couple {
            mode,
            lambda1,
            lambda2,
            ..
        } => commands::couple_cmd(&mut ctx, mode, lambda1, lambda2)?,
        Command::Equilibrium {
            depth,
            compare_next,
            flow_rho,
            sets,
            tol,
            empirical,
            ..
        } => commands::equilibrium_cmd(&mut ctx, depth, compare_next, flow_rho, sets, tol, empirical)?,
        Command::ClassifyRates {
            horizon, tolerance, ..
        } => commands::classify_rates_cmd(&mut ctx, horizon, tolerance)?,
        Command::Bounds { n, ell, t, .. } => commands::bounds_cmd(&mut ctx, n, ell, t)?,
    };
    for path in ctx.emitter.written() {
        println!(
            "wrote {}",
            path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
        );
    }
    Ok(failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(failed) if failed.is_empty() => ExitCode::SUCCESS,
        Ok(failed) => {
            for f in &failed {
                eprintln!("check failed: {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
