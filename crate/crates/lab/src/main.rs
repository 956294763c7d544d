use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use shelab::config::{Config, Overrides, Subcommand};
use shelab::report::write_outputs;
use shelab::{LabError, EXIT_ASSERTION, EXIT_OK};

/// Numerical lab for the stochastic heat equation with multiplicative noise.
#[derive(Parser)]
#[command(name = "shelab", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// `key = value` config file layered over the subcommand defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: &Cli) -> Result<u8, LabError> {
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|source| LabError::Io { path: p.clone(), source })?),
        None => None,
    };
    let overrides = Overrides { seed: cli.seed, paths: cli.paths, out: cli.out.clone() };
    let config = Config::load(cli.subcommand, text.as_deref(), &overrides)?;
    let start = Instant::now();
    let report = shelab::run(&config, cli.threads)?;
    let wall = start.elapsed().as_secs_f64();
    write_outputs(&report, &config, &config.out_dir, wall)?;
    for a in &report.assertions {
        println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    Ok(if report.all_pass() { EXIT_OK } else { EXIT_ASSERTION })
}
