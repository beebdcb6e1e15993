use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pfasst_oc::harness::{preset, preset_names, run_experiment, run_study, ExperimentConfig, Summary};
use pfasst_oc::Error;

#[derive(Parser)]
#[command(name = "pfasst-oc", about = "Parallel-in-time optimal control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (optimization, solve, gradient check or baseline).
    Run(RunArgs),
    /// Temporal convergence study of the state solver.
    Study(RunArgs),
    /// List the shipped presets.
    PresetList,
}

#[derive(Args)]
struct RunArgs {
    /// Config file with `key = value` lines, applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Number of time-parallel workers.
    #[arg(long)]
    nproc: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn resolve(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut c = match &args.preset {
        Some(name) => preset(name).ok_or_else(|| Error::Config(format!("unknown preset '{}'", name)))?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {}", path.display(), e)))?;
        c.apply_text(&text)?;
    }
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{}' is not key=value", o)))?;
        c.set(k.trim(), v.trim())?;
    }
    if let Some(r) = args.nproc {
        c.num_workers = r;
    }
    if let Some(out) = &args.out {
        c.output_dir = out.clone();
    }
    c.validate()?;
    Ok(c)
}

fn fail(e: Error) -> u8 {
    eprintln!("error: {}", e);
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    ExitCode::from(execute(Cli::parse()))
}

fn execute(cli: Cli) -> u8 {
    match cli.command {
        Command::PresetList => {
            for (name, description) in preset_names() {
                println!("{:<34} {}", name, description);
            }
            0
        }
        Command::Run(args) => {
            let config = match resolve(&args) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let out = match run_experiment(&config) {
                Ok(o) => o,
                Err(e) => return fail(e),
            };
            println!("{}", Summary::csv_header());
            println!("{}", out.summary.csv_row());
            for c in &out.checks {
                println!(
                    "check {}: derivative {:.10e}, finite difference {:.10e}, relative error {:.3e}",
                    c.direction, c.derivative, c.finite_difference, c.relative_error
                );
            }
            eprintln!("wrote {} files to {}", out.files.len(), config.output_dir.display());
            if config.require_convergence && !out.summary.converged {
                eprintln!("solver did not converge: {}", out.summary.termination);
                return 3;
            }
            0
        }
        Command::Study(args) => {
            let config = match resolve(&args) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match run_study(&config) {
                Ok((r, _)) => {
                    print!("{}", r.to_csv());
                    if let Some(o) = r.fitted_order {
                        println!("fitted order {:.3}", o);
                    }
                    0
                }
                Err(e) => fail(e),
            }
        }
    }
}
