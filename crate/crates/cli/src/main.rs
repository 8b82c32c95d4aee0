//! `ncps`: simulate and verify non-colliding particle systems with singular
//! pairwise repulsion.
//!
//! Subcommands: `validate | simulate | moments | convergence | identity-check`.
//! Every run reads a flat TOML config (`--config`), applies flag overrides,
//! writes its result files plus a `manifest.txt` into the output directory,
//! and exits 0 on success, 1 on a failed check or run, 2 on configuration
//! errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

/// A command failure carrying its exit code (1 = run/check failure,
/// 2 = configuration error).
#[derive(Debug)]
pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    pub fn config(message: String) -> Self {
        Self { code: 2, message }
    }

    pub fn run(message: String) -> Self {
        Self { code: 1, message }
    }
}

impl From<ncps_core::Error> for CmdError {
    fn from(e: ncps_core::Error) -> Self {
        use ncps_core::Error::*;
        match e {
            // Failures of the numerics at run time.
            NoConvergence { .. } | HessianSolve { .. } | LineSearch { .. }
            | TiedAtZeroBarrier { .. } | NonFinite { .. } | NotIncreasing { .. }
            | Step { .. } | FdStepTooLarge { .. } => CmdError::run(e.to_string()),
            // Everything else is a mis-specified experiment.
            _ => CmdError::config(e.to_string()),
        }
    }
}

/// What a successful command hands back for the manifest.
pub struct CmdReport {
    pub outputs: Vec<String>,
    pub overflow_count: usize,
    pub exit_code: u8,
}

#[derive(Parser)]
#[command(name = "ncps", version, about = "Non-colliding particle system toolkit")]
struct Cli {
    /// Experiment configuration (flat TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config path count.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Output directory (default: config output_path, else ".").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for path-parallel runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the structural coefficient assumptions on a sample grid.
    Validate,
    /// Simulate one trajectory and write it as CSV.
    Simulate,
    /// Estimate gap and norm moments.
    Moments {
        /// Probe exponents beyond the negative-moment threshold.
        #[arg(long)]
        outside_guarantee: bool,
    },
    /// Measure the coupled strong-error curve and fit its rate.
    Convergence,
    /// Sweep the pairwise cancellation identity on random configurations.
    IdentityCheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Moments { .. } => "moments",
            Command::Convergence => "convergence",
            Command::IdentityCheck => "identity-check",
        }
    }
}

fn write_manifest(
    dir: &std::path::Path,
    command: &str,
    cfg: &ExperimentConfig,
    duration_ms: u128,
    outcome: &Result<CmdReport, CmdError>,
) {
    let mut s = String::new();
    s.push_str("# ncps run manifest\n");
    s.push_str(&format!("version = \"{}\"\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("command = \"{command}\"\n"));
    s.push_str(&format!("duration_ms = {duration_ms}\n"));
    match outcome {
        Ok(report) => {
            s.push_str(&format!("exit_code = {}\n", report.exit_code));
            s.push_str(&format!("outputs = \"{}\"\n", report.outputs.join(",")));
            s.push_str(&format!("overflow_count = {}\n", report.overflow_count));
        }
        Err(e) => {
            s.push_str(&format!("exit_code = {}\n", e.code));
            s.push_str(&format!("error = {:?}\n", e.message));
        }
    }
    s.push_str("\n# resolved configuration (defaults and overrides applied)\n");
    s.push_str(&cfg.render());
    // A failing write must not mask the command outcome.
    let _ = std::fs::write(dir.join("manifest.txt"), s);
}

fn run(cli: &Cli) -> (Option<(PathBuf, ExperimentConfig)>, Result<CmdReport, CmdError>) {
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            return (
                None,
                Err(CmdError::config("--config <path> is required".into())),
            )
        }
    };
    let mut cfg = match ExperimentConfig::load(&config_path) {
        Ok(c) => c,
        Err(e) => return (None, Err(e)),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(paths) = cli.paths {
        cfg.n_paths = paths;
    }
    if let Some(out) = &cli.out {
        cfg.output_path = Some(out.display().to_string());
    }
    if let Some(threads) = cli.threads {
        cfg.threads = Some(threads);
    }
    if let Some(threads) = cfg.threads {
        if threads == 0 {
            return (None, Err(CmdError::config("threads must be positive".into())));
        }
        ncps_core::exec::configure_threads(threads);
    }

    let out_dir = PathBuf::from(cfg.output_path.clone().unwrap_or_else(|| ".".into()));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        return (
            None,
            Err(CmdError::config(format!(
                "cannot create output directory {}: {e}",
                out_dir.display()
            ))),
        );
    }

    let result = match cli.command {
        Command::Validate => commands::cmd_validate(&cfg, &out_dir),
        Command::Simulate => commands::cmd_simulate(&cfg, &out_dir),
        Command::Moments { outside_guarantee } => {
            commands::cmd_moments(&cfg, &out_dir, outside_guarantee)
        }
        Command::Convergence => commands::cmd_convergence(&cfg, &out_dir),
        Command::IdentityCheck => commands::cmd_identity_check(&cfg, &out_dir),
    };
    (Some((out_dir, cfg)), result)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let (context, result) = run(&cli);
    if let Some((out_dir, cfg)) = &context {
        write_manifest(
            out_dir,
            cli.command.name(),
            cfg,
            started.elapsed().as_millis(),
            &result,
        );
    }
    match result {
        Ok(report) => ExitCode::from(report.exit_code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
