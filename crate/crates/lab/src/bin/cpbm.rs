use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use cpbm_lab::{ExperimentConfig, Lab};

#[derive(Parser)]
#[command(name = "cpbm", version, about = "Contextual position-bias experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate click logs for every grid cell.
    Generate(Common),
    /// Fit estimators on existing logs and tabulate relative errors.
    Estimate(Common),
    /// Run online LTR with fitted examination models.
    Ltr(Common),
    /// Generate, estimate and evaluate every cell, with a resumable manifest.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid cells processed concurrently.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Master seed (overrides `master_seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn lab(c: &Common) -> anyhow::Result<Lab> {
    let mut config = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        config.master_seed = seed;
    }
    let out = c.out.clone().unwrap_or_else(|| config.output_dir.clone());
    Lab::new(config, out, c.workers)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Generate(c) => print_files(&lab(&c)?.generate().context("generate failed")?),
        Command::Estimate(c) => print_files(&lab(&c)?.estimate().context("estimate failed")?),
        Command::Ltr(c) => print_files(&lab(&c)?.ltr().context("ltr failed")?),
        Command::Sweep(c) => {
            let report = lab(&c)?.sweep().context("sweep failed")?;
            println!(
                "ran {} cell(s), reused {}, failed {}",
                report.ran.len(),
                report.reused.len(),
                report.failed.len()
            );
            for (id, err) in &report.failed {
                eprintln!("{id}: {err}");
            }
            return Ok(report.failed.is_empty());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
