use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emclt::presets::list_presets;
use emclt::runner::{run, RunOptions};

/// Monte Carlo experiments for Euler-Maruyama fluctuations and their
/// limiting dynamics.
#[derive(Parser)]
#[command(name = "emclt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config (or rerun a manifest.json).
    Run(RunArgs),
    /// List drift/diffusion presets with their regularity metadata.
    ListPresets,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML) or a manifest.json from an earlier run.
    #[arg(value_name = "CONFIG")]
    config_positional: Option<PathBuf>,
    /// Alternative way to pass the configuration path.
    #[arg(long = "config", value_name = "PATH")]
    config_flag: Option<PathBuf>,
    /// Evaluate acceptance thresholds; exit 2 when any is violated.
    #[arg(long)]
    check: bool,
    /// Worker thread cap (default: EMCLT_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: results/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListPresets => {
            print!("{}", list_presets());
            ExitCode::SUCCESS
        }
        Command::Run(args) => {
            let path = match (&args.config_positional, &args.config_flag) {
                (Some(p), None) => p.clone(),
                (None, Some(p)) => p.clone(),
                (Some(_), Some(_)) => {
                    eprintln!(
                        "error: pass the config either positionally or via --config, not both"
                    );
                    return ExitCode::from(1);
                }
                (None, None) => {
                    eprintln!("error: missing configuration path");
                    return ExitCode::from(1);
                }
            };
            let opts = RunOptions {
                check: args.check,
                threads: args.threads,
                seed: args.seed,
                out: args.out,
            };
            match run(&path, &opts) {
                Ok(outcome) => {
                    println!(
                        "wrote {} artifact(s) to {}",
                        outcome.artifacts.len(),
                        outcome.out_dir.display()
                    );
                    if args.check {
                        let mut failed = false;
                        for c in &outcome.checks {
                            println!(
                                "check {}: {} ({})",
                                c.name,
                                if c.passed { "PASS" } else { "FAIL" },
                                c.detail
                            );
                            failed |= !c.passed;
                        }
                        if failed {
                            return ExitCode::from(2);
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
