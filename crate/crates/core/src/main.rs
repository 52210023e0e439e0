use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use gosine::cli::{self, Outcome, Status, SweepAxis};
use gosine::config::{config_from_overrides, parse_config, Overrides};
use gosine::network::GraphSpec;
use gosine::sim::ExperimentConfig;

#[derive(Parser)]
#[command(name = "gosine", version, about = "Gossip insert-eliminate bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured runs and write trajectories, summary and metrics.
    Run(ExperimentArgs),
    /// Repeat a run set for each value of one configuration axis.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// graph, budget or protocol
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Histogram of PULL rumor-spreading times from agent 0.
    Spreading {
        #[arg(long, default_value = "complete")]
        graph: String,
        #[arg(long)]
        agents: usize,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Regret bound and lower-bound coefficient for a configuration.
    Theory {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Spreading trials used to estimate the communication term.
        #[arg(long, default_value_t = 200)]
        trials: u64,
    },
    /// Check the gossip matrix and budget against the regret-bound assumptions.
    Validate(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance when no file is given: recipe:k=..., file:<path> or a list of means.
    #[arg(long, conflicts_with = "config")]
    instance: Option<String>,
    /// Agent count when no file is given.
    #[arg(long, conflicts_with = "config")]
    agents: Option<usize>,
    /// Output directory (default `out`; validate writes nothing without it).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl ExperimentArgs {
    fn load(&self) -> anyhow::Result<(ExperimentConfig, Vec<String>)> {
        let o = Overrides {
            seed: self.seed,
            runs: self.runs,
            horizon: self.horizon,
            protocol: self.protocol.clone(),
            graph: self.graph.clone(),
            budget: self.budget.clone(),
            epsilon: self.epsilon,
            alpha: self.alpha,
            delta: self.delta,
            gamma: self.gamma,
        };
        let loaded = match (&self.config, &self.instance, self.agents) {
            (Some(path), _, _) => {
                parse_config(path, &o).with_context(|| format!("loading {}", path.display()))?
            }
            (None, Some(inst), Some(n)) => config_from_overrides(inst, n, &o)?,
            _ => bail!("give --config, or both --instance and --agents"),
        };
        for w in &loaded.1 {
            eprintln!("warning: {w}");
        }
        Ok(loaded)
    }

    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn jobs(&self) -> usize {
        if self.jobs == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.jobs
        }
    }
}

fn report(outcome: &Outcome) -> bool {
    for n in &outcome.notices {
        eprintln!("note: {n}");
    }
    outcome.ok
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(exp) => {
            let (config, warnings) = exp.load()?;
            let outcome = cli::cmd_run(&config, &exp.out(), exp.jobs(), warnings)?;
            println!("wrote {}", exp.out().display());
            Ok(report(&outcome))
        }
        Command::Sweep { exp, axis, values } => {
            let (config, _) = exp.load()?;
            let outcome = cli::cmd_sweep(&config, axis, &values, &exp.out(), exp.jobs())?;
            println!("wrote {}", exp.out().display());
            Ok(report(&outcome))
        }
        Command::Spreading { graph, agents, trials, seed, out } => {
            let s = cli::cmd_spreading(&GraphSpec::parse(&graph)?, agents, trials, seed, &out)?;
            println!(
                "{} n={}: median {} mean {:.3} ± {:.3} range [{}, {}]",
                s.graph, s.agents, s.median, s.mean.mean, s.mean.ci_halfwidth, s.min, s.max
            );
            Ok(true)
        }
        Command::Theory { exp, trials } => {
            let (config, _) = exp.load()?;
            let path = cli::cmd_theory(&config, trials, &exp.out())?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Validate(exp) => {
            let (config, _) = exp.load()?;
            let r = cli::cmd_validate(&config, exp.out.as_deref())?;
            for c in &r.checks {
                let tag = match c.status {
                    Status::Pass => "pass",
                    Status::Warn => "warn",
                    Status::Fail => "FAIL",
                };
                println!("{tag:4}  {}: {}", c.name, c.detail);
            }
            Ok(r.passed())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
