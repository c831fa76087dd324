use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bayesflow_cli::config::Config;
use bayesflow_cli::{experiments, CliError};

#[derive(Parser)]
#[command(
    name = "bayesflow",
    about = "Variational Bayesian-update flows: convexity constants, PDE flows, samplers, spectral gaps, graph SSL",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Output directory (defaults to the config's [output].dir or `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Rayon thread-pool size.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
    /// List the builtin metric, potential, and model families.
    Catalog,
}

fn load_config(path: &PathBuf) -> Result<Config, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    Config::from_str(&text)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Config(format!("threads: {e}")))?;
            }
            let cfg = load_config(&config)?;
            let out_dir = out
                .or_else(|| cfg.output.as_ref().map(|o| PathBuf::from(&o.dir)))
                .unwrap_or_else(|| PathBuf::from("out"));
            let report = experiments::run(&cfg, &out_dir, seed)?;
            println!(
                "{} finished: {} scalar(s), {} file(s) under {}",
                report.experiment,
                report.scalars.len(),
                report.files.len(),
                out_dir.display()
            );
            for (name, value) in &report.scalars {
                println!("  {name} = {value:.17e}");
            }
            Ok(())
        }
        Command::Validate { config } => {
            load_config(&config)?;
            println!("ok");
            Ok(())
        }
        Command::Catalog => {
            println!("{:<10} {:<16} parameters", "section", "key");
            for (section, key, params) in bayesflow::catalog::listing() {
                println!("{section:<10} {key:<16} {params}");
            }
            println!("{:<10} {:<16} n", "graph", "path");
            println!("{:<10} {:<16} n", "graph", "circle");
            println!("{:<10} {:<16} n = 6", "graph", "two_triangles");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let json = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{json}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
