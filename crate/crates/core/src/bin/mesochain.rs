use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mesochain::harness::{self, ExperimentConfig, InitialCondition, Overrides};

#[derive(Parser)]
#[command(
    name = "mesochain",
    version,
    about = "Particle-chain averaging and closure experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the chain and write checkpoints at the snapshot times.
    RunMicro(Common),
    /// Compare exact averaged stresses with the order-n closure.
    CompareClosure(Common),
    /// Repeat the comparison for several particle counts.
    SweepN {
        #[command(flatten)]
        common: Common,
        /// Comma-separated particle counts.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
    /// High-frequency oscillation example.
    Oscillatory(Common),
    /// Run the closed mesoscale model from the averaged initial state.
    RunMeso(Common),
    /// Write Landweber reconstructions of J and v on the fine grid.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Reconstruct from this checkpoint instead of running the chain.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    ic: Option<InitialCondition>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long)]
    freq: Option<f64>,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    /// Reserved; every pipeline is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> mesochain::Result<ExperimentConfig> {
        let mut exp = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        exp.apply(&Overrides {
            out: self.out.clone(),
            n: self.n,
            b: self.b,
            eta: self.eta,
            order: self.order,
            ic: self.ic,
            gamma: self.gamma,
            amp: self.amp,
            freq: self.freq,
            snapshots: self.snapshots.clone(),
            seed: self.seed,
        });
        Ok(exp)
    }
}

fn print<T: serde::Serialize>(v: &T) {
    match serde_json::to_string_pretty(v) {
        Ok(s) => println!("{s}"),
        Err(e) => eprintln!("could not format report: {e}"),
    }
}

fn run(cli: Cli) -> mesochain::Result<()> {
    match cli.command {
        Command::RunMicro(c) => print(&harness::cmd_run_micro(&c.load()?)?),
        Command::CompareClosure(c) => print(&harness::cmd_compare_closure(&c.load()?)?),
        Command::SweepN { common, n_list } => {
            let mut exp = common.load()?;
            if let Some(l) = n_list {
                exp.n_list = l;
            }
            print(&harness::cmd_sweep_n(&exp, true)?)
        }
        Command::Oscillatory(c) => print(&harness::cmd_oscillatory(&c.load()?, true)?),
        Command::RunMeso(c) => print(&harness::cmd_run_meso(&c.load()?)?),
        Command::Reconstruct { common, checkpoint } => print(&harness::cmd_reconstruct(
            &common.load()?,
            checkpoint.as_deref(),
        )?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
