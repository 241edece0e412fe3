//! Command-line front end: run experiments, compare finished runs.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use eupf_sim::config::{ConfigOverrides, ExperimentConfig};
use eupf_sim::harness::{compare_runs, load_run, run_experiment, write_outputs};

#[derive(Parser)]
#[command(
    name = "eupf-sim",
    version,
    about = "Uplink path-selection simulator: trains a DQN against a two-path degradation model and reports per-episode metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write episodes.csv / summary.json (and
    /// steps.csv with --trace) into the output directory.
    Run(RunArgs),
    /// Compare two finished run directories side by side.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file; omitted keys fall back to built-in defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Decision policy: "dqn" or "random".
    #[arg(long, value_name = "POLICY")]
    policy: Option<String>,
    /// Root seed; all random streams derive from it.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Number of episodes to run.
    #[arg(long, value_name = "N")]
    episodes: Option<u32>,
    /// Output directory for run artifacts.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Degradation trigger mode: "traversal" or "per-step".
    #[arg(long, value_name = "MODE")]
    trigger_mode: Option<String>,
    /// Record every step into steps.csv.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// First run directory (side A).
    run_a: PathBuf,
    /// Second run directory (side B).
    run_b: PathBuf,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // A consumer closing the pipe (head, a pager) ends the report
            // early; that is normal stdout behavior, not a failure.
            if let Some(ioe) = err.downcast_ref::<io::Error>() {
                if ioe.kind() == io::ErrorKind::BrokenPipe {
                    return ExitCode::SUCCESS;
                }
            }
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn write_stdout(text: &str) -> io::Result<()> {
    io::stdout().lock().write_all(text.as_bytes())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let overrides = ConfigOverrides {
        policy: args.policy.as_deref().map(str::parse).transpose()?,
        seed: args.seed,
        episodes: args.episodes,
        trigger_mode: args.trigger_mode.as_deref().map(str::parse).transpose()?,
        trace_steps: args.trace.then_some(true),
        output_dir: Some(args.out.clone()),
    };
    let config = ExperimentConfig::load(args.config.as_deref(), &overrides)
        .context("loading configuration")?;
    let result = run_experiment(&config).context("running experiment")?;
    write_outputs(&result, &args.out).context("writing run artifacts")?;

    let summary = result.summary()?;
    write_stdout(&format!(
        "{} policy, seed {}: {} episodes x {} steps -> {}\noverall mean RTT {:.2} ms, last-{} mean reward {:.2}, n6a share {:.3}\n",
        config.policy,
        config.seed,
        config.episodes,
        config.steps_per_episode,
        args.out.display(),
        summary.overall.mean_rtt_ms,
        summary.last_window.episodes,
        summary.last_window.total_reward.mean,
        summary.last_window.n6a_share
    ))?;
    Ok(())
}

fn compare(args: CompareArgs) -> anyhow::Result<()> {
    let a = load_run(&args.run_a)
        .with_context(|| format!("loading run {}", args.run_a.display()))?;
    let b = load_run(&args.run_b)
        .with_context(|| format!("loading run {}", args.run_b.display()))?;
    let report = compare_runs(&a, &b)?;
    write_stdout(&report.to_string())?;
    Ok(())
}
