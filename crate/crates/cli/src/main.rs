use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chemoscale_cli::config::render;
use chemoscale_cli::{presets, run, CliError, ExperimentConfig, RunStatus};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

/// Particle, kinetic and hydrodynamic chemotactic alignment experiments.
///
/// Exit status: 0 success, 2 blow-up detected, 1 error.
#[derive(Parser)]
#[command(name = "chemoscale", version)]
struct Cli {
    /// Output directory (for `sweep`, the parent of one directory per config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config file.
    Run { config: PathBuf },
    /// Run a built-in preset.
    Preset {
        name: String,
        /// `key=value`, applied on top of the preset; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the resolved config instead of running it.
        #[arg(long)]
        show: bool,
    },
    /// List the built-in presets.
    Presets,
    /// Run every config matching a glob, in parallel.
    Sweep { pattern: String },
}

fn default_out(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn report(cfg: &ExperimentConfig, out: &Path) -> Result<RunStatus, CliError> {
    let summary = run(cfg, out)?;
    match &summary.status {
        RunStatus::Completed => eprintln!("{}: completed, {} files in {}", cfg.name, summary.files.len(), out.display()),
        RunStatus::BlowUp(b) => eprintln!(
            "{}: blow-up detected at t = {} ({}, max density {:e}); artifacts in {}",
            cfg.name,
            b.time,
            b.reason,
            b.max_mu,
            out.display()
        ),
    }
    Ok(summary.status)
}

fn sweep(pattern: &str, root: &Path) -> Result<i32, CliError> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| CliError::Validation(vec![format!("sweep pattern: {e}")]))?
        .filter_map(|p| p.ok())
        .collect();
    if paths.is_empty() {
        return Err(CliError::Validation(vec![format!("sweep pattern `{pattern}` matched no files")]));
    }
    let codes: Vec<i32> = paths
        .par_iter()
        .map(|path| {
            let outcome = ExperimentConfig::load(path).and_then(|cfg| {
                let out = root.join(&cfg.name);
                report(&cfg, &out)
            });
            match outcome {
                Ok(status) => status.exit_code(),
                Err(e) => {
                    eprintln!("{}: {e}", path.display());
                    1
                }
            }
        })
        .collect();
    // Errors dominate blow-ups, which dominate success.
    Ok(if codes.contains(&1) {
        1
    } else {
        codes.into_iter().max().unwrap_or(0)
    })
}

fn main_inner(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = cli.out.unwrap_or_else(|| default_out(&cfg));
            Ok(report(&cfg, &out)?.exit_code())
        }
        Command::Preset { name, overrides, show } => {
            let cfg = presets::load(&name, &overrides)?;
            if show {
                for (k, v) in &cfg.resolved {
                    println!("{k} = {}", render(v));
                }
                return Ok(0);
            }
            let out = cli.out.unwrap_or_else(|| default_out(&cfg));
            Ok(report(&cfg, &out)?.exit_code())
        }
        Command::Presets => {
            for name in presets::names() {
                let first = presets::source(name)?.lines().next().unwrap_or("");
                println!("{name:<18} {}", first.trim_start_matches("# "));
            }
            Ok(0)
        }
        Command::Sweep { pattern } => sweep(&pattern, &cli.out.unwrap_or_else(|| PathBuf::from("out"))),
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
