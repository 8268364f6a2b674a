use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mnl_bai::harness::{run_experiment, write_outputs, ExperimentSpec};
use mnl_bai::parallel::with_jobs;
use mnl_bai::theory::lower_bound_value;
use mnl_bai::verify::run_fast_checks;
use mnl_bai::Instance;

#[derive(Parser)]
#[command(name = "mnl-bai", version, about = "Best-arm identification under MNL preference feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write raw records, aggregates and a chart.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the spec's grids with the paper-scale ones.
        #[arg(long)]
        full_scale: bool,
        /// Override the spec's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Evaluate the lower bound for an instance file.
    LowerBound {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        epsilon: f64,
    },
    /// Run the fast property checks.
    Verify,
}

fn run(spec_path: PathBuf, out: PathBuf, full_scale: bool, seed: Option<u64>, jobs: Option<usize>) -> Result<()> {
    let text = fs::read_to_string(&spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec = ExperimentSpec::from_json(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    if full_scale {
        spec.full_scale();
    }
    if let Some(s) = seed {
        spec.base_seed = s;
    }
    let result = with_jobs(jobs, || run_experiment(&spec))?;
    for row in &result.rows {
        eprintln!(
            "{:<12} {}={:<6} mean_tau={:.1} stderr={:.1} correct={:.3}",
            row.strategy.name(),
            row.grid_axis.name(),
            row.grid_value,
            row.mean_tau,
            row.stderr_tau,
            row.frac_correct
        );
    }
    for path in write_outputs(&spec, &result, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn lower_bound(path: PathBuf, epsilon: f64) -> Result<()> {
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let instance = Instance::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    let report = lower_bound_value(&instance, epsilon, instance.delta())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn verify() -> Result<bool> {
    let mut ok = true;
    for c in run_fast_checks()? {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            spec,
            out,
            full_scale,
            seed,
            jobs,
        } => run(spec, out, full_scale, seed, jobs).map(|_| true),
        Command::LowerBound { instance, epsilon } => lower_bound(instance, epsilon).map(|_| true),
        Command::Verify => verify(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
