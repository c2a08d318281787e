//! `loopint`: runs the experiment suites from a JSON config and writes a
//! JSON report plus CSV tables.
//!
//! Exit codes: 0 all checks pass, 1 I/O failure, 2 invalid config or input,
//! 3 a numerical tolerance failed (report still written), 4 an oracle is
//! unavailable within its budget.

mod commands;
mod config;
mod expr;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use loopint::error::Error;
use serde::Serialize;

use crate::commands::{Context, Outcome, RunError};
use crate::config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "loopint", version, about = "Loop-space integral experiments on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config; a previous report is accepted and its embedded config reused.
    #[arg(long, global = true, env = "LOOPINT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "LOOPINT_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true, env = "LOOPINT_SEED")]
    seed: Option<u64>,
    /// Overrides the config worker count.
    #[arg(long, global = true, env = "LOOPINT_WORKERS")]
    workers: Option<usize>,
    #[arg(long, global = true, env = "LOOPINT_VERBOSE")]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Clifford, measure and q functional property suites.
    Invariants,
    /// Wiener measure checks against closed forms.
    WienerChecks,
    /// Monte Carlo against the spectral evaluator for the configured forms.
    Compare,
    /// Even Bismut-Chern index: spectral, constant loops and Monte Carlo.
    Index,
    /// Odd Bismut-Chern on the circle: tracking, Getzler integral and Monte Carlo.
    SpectralFlow,
    /// Spectral value against the constant-loop integral over several times.
    Localization,
    /// Polygon refinement sweep of a flux holonomy.
    Refine,
    /// Zeta-determinant toy identity over an angle sweep.
    ZetaToy,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Invariants => "invariants",
            Command::WienerChecks => "wiener-checks",
            Command::Compare => "compare",
            Command::Index => "index",
            Command::SpectralFlow => "spectral-flow",
            Command::Localization => "localization",
            Command::Refine => "refine",
            Command::ZetaToy => "zeta-toy",
        }
    }

    fn run(self, ctx: &Context) -> Result<Outcome, RunError> {
        match self {
            Command::Invariants => commands::invariants(ctx),
            Command::WienerChecks => commands::wiener_checks(ctx),
            Command::Compare => commands::compare(ctx),
            Command::Index => commands::index(ctx),
            Command::SpectralFlow => commands::spectral_flow(ctx),
            Command::Localization => commands::localization(ctx),
            Command::Refine => commands::refine(ctx),
            Command::ZetaToy => commands::zeta_toy(ctx),
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    report: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    passed: bool,
    diagnostics: &'a [String],
    results: &'a serde_json::Value,
}

fn exit_code(e: &RunError) -> u8 {
    match e {
        RunError::Config(ConfigError::Io(..)) | RunError::Csv(_) => 1,
        RunError::Config(_) => 2,
        RunError::Core(Error::Budget(_) | Error::Unsupported(_)) => 4,
        RunError::Core(Error::NonFinite(_)) => 3,
        RunError::Core(_) => 2,
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &'static str, cfg: &ExperimentConfig, out: &Outcome) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let report = Report {
        report: name,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        passed: out.passed,
        diagnostics: &out.diagnostics,
        results: &out.results,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join(format!("{name}.json")), text)?;
    if cfg.output.csv {
        for (file, csv) in &out.tables {
            std::fs::write(dir.join(file), csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&RunError::Config(e)));
        }
    };
    let name = cli.command.name();
    let ctx = Context { config: &cfg, verbose: cli.verbose };
    let outcome = match cli.command.run(&ctx) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if let Err(e) = write(&cli.out, name, &cfg, &outcome) {
        eprintln!("error: cannot write report to {}: {e}", cli.out.display());
        return ExitCode::from(1);
    }
    for d in &outcome.diagnostics {
        eprintln!("FAIL {d}");
    }
    let status = if outcome.passed { "PASS" } else { "FAIL" };
    println!("{status} {name}: report in {}", cli.out.join(format!("{name}.json")).display());
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
