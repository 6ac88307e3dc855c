//! `sample`: run, sweep, plan and validate Langevin experiments from JSON configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plmc::bounds::PlanMode;
use plmc::harness::{self, ExperimentConfig, SweepAxis};

#[derive(Parser)]
#[command(name = "sample", version, about = "Perturbed Langevin Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve the plan, run the ensemble, write samples.csv and report.json.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only resolve and report the plan.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the config once per value of one parameter and write sweep.csv.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a parameter plan as JSON.
    Plan {
        config: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        mode: String,
    },
    /// List config problems; exits with status 1 if there are any.
    Validate { config: PathBuf },
}

fn out_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output.as_ref().map(|o| o.dir.clone())).unwrap_or_else(|| PathBuf::from("."))
}

fn load(path: &Path) -> plmc::Result<ExperimentConfig> {
    ExperimentConfig::from_path(path)
}

fn real_main(cli: Cli) -> plmc::Result<ExitCode> {
    let threads = harness::threads_from_env()?;
    match cli.command {
        Command::Run { config, out, dry_run } => {
            let mut cfg = load(&config)?;
            cfg.dry_run |= dry_run;
            let dir = out_dir(&cfg, out);
            let result = harness::with_threads(threads, || harness::run_experiment(&cfg))??;
            harness::write_run(&result, &dir)?;
            println!("{}", serde_json::to_string_pretty(&result.report)?);
        }
        Command::Sweep { config, axis, values, out } => {
            let cfg = load(&config)?;
            let axis: SweepAxis = axis.parse()?;
            let values = harness::parse_values(&values)?;
            let dir = out_dir(&cfg, out);
            let table = harness::with_threads(threads, || harness::sweep(&cfg, axis, &values))??;
            std::fs::create_dir_all(&dir)?;
            let csv = table.to_csv();
            std::fs::write(dir.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Plan { config, eps, mode } => {
            let cfg = load(&config)?;
            let mode: PlanMode = mode.parse()?;
            let plan = harness::plan_for(&cfg, mode, eps)?;
            println!("{}", serde_json::to_string_pretty(&plan)?);
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let diag = harness::validate(&cfg);
            for d in &diag {
                println!("{d}");
            }
            if !diag.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
