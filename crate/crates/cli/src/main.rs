use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dualmpc_cli::{cmd_mc, cmd_post_learn, cmd_run, CliError, Overrides, RunConfig};
use dualmpc_core::PolicyKind;

#[derive(Parser)]
#[command(name = "dualmpc", version, about = "Dual-control MPC experiments on a learned linear plant")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config; built-in defaults are used when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exploration weight
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true, value_parser = parse_policy)]
    policy: Option<PolicyKind>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One episode per policy
    Run,
    /// Monte Carlo batch with aggregate logs and charts
    Mc,
    /// Compare two learned beliefs with frozen certainty-equivalent control
    PostLearn {
        #[arg(long)]
        ce_belief: PathBuf,
        #[arg(long)]
        dual_belief: PathBuf,
    },
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|e: dualmpc_core::Error| e.to_string())
}

fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        alpha: cli.alpha,
        episodes: cli.episodes,
        steps: cli.steps,
        policy: cli.policy,
        out: cli.out,
    });
    match &cli.command {
        Command::Run => cmd_run(&cfg),
        Command::Mc => cmd_mc(&cfg),
        Command::PostLearn { ce_belief, dual_belief } => cmd_post_learn(&cfg, ce_belief, dual_belief),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dualmpc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
