use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graspolab::{commands, HarnessError, RunConfig};

#[derive(Parser)]
#[command(
    name = "graspolab",
    version,
    about = "Seeded grasp-pose learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic image/robot observations plus the generating matrix
    GenData(Common),
    /// GA under each of the eight fitness functions, ranked by held-out RMSE
    CompareFitness(Common),
    /// Fit one position model (fit.method = ga | lr | pi)
    FitPosition(Common),
    /// Train the orientation Q-network in the simulated grasp cycle
    TrainOrient(Common),
    /// Greedy grasp attempts with a trained checkpoint
    EvalOrient(Common),
}

#[derive(clap::Args)]
struct Common {
    /// Flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
                    path: path.clone(),
                    source: e,
                })?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.command {
        Command::GenData(c) => {
            let ds = commands::gen_data(&c.resolve()?, &c.out)?;
            println!(
                "wrote {} observations to {}",
                ds.observations.len(),
                c.out.display()
            );
        }
        Command::CompareFitness(c) => {
            let cmp = commands::compare_fitness(&c.resolve()?, &c.out)?;
            for e in &cmp.entries {
                match &e.outcome {
                    Ok(s) => println!("{:<3} test_rmse {:.6e}", e.kind, s.test_rmse),
                    Err(msg) => println!("{:<3} failed: {msg}", e.kind),
                }
            }
        }
        Command::FitPosition(c) => {
            let fit = commands::fit_position(&c.resolve()?, &c.out)?;
            println!(
                "{} train_rmse {:.6e} test_rmse {:.6e}",
                fit.method.name(),
                fit.train_rmse,
                fit.test_rmse
            );
        }
        Command::TrainOrient(c) => {
            let run = commands::train_orient(&c.resolve()?, &c.out)?;
            if let Some(last) = run.batches.last() {
                println!(
                    "{} episodes, final batch greedy_rate {:.2} success_rate {:.2}",
                    run.outcome.log.len(),
                    last.greedy_rate,
                    last.success_rate
                );
            }
        }
        Command::EvalOrient(c) => {
            let eval = commands::eval_orient(&c.resolve()?, &c.out)?;
            match eval.success_rate() {
                Some(rate) => println!(
                    "{} attempts, success_rate {rate:.2} (random policy {:.3})",
                    eval.rewards.len(),
                    eval.random_policy_rate
                ),
                None => println!("0 attempts"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
