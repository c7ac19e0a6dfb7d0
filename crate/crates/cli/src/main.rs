use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mbq_cli::commands::{self, GlobalOptions, VerifyArgs};
use mbq_cli::{exit, CliError};
use mbq_core::complexity::{BoundInputs, TailKind};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "mbq",
    version,
    about = "Synchronous model-based Q-learning experiments"
)]
struct Cli {
    /// Run file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the run file's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; overrides the run file's `seeds`.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads for the seed pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print machine-readable JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    P,
    R,
    W,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve an MDP document for Q* by value iteration.
    Solve {
        mdp: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// Train every seed of a run file and summarize greedy success.
    Train,
    /// Co-evolve SyncMBQ with its comparison systems on a synthetic MDP.
    Compare,
    /// Evaluate the sample-complexity thresholds.
    Bound {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long = "d-min")]
        d_min: f64,
        #[arg(long = "num-pairs")]
        num_pairs: usize,
        /// Also evaluate the tail bounds at this k.
        #[arg(long, requires = "tail_eps")]
        k: Option<u64>,
        #[arg(long = "tail-eps", requires = "k")]
        tail_eps: Option<f64>,
    },
    /// Monte Carlo check of the concentration bounds.
    Verify {
        /// `random:<S>x<A>[:<seed>]` or an MDP document path.
        #[arg(long, default_value = "random:4x4:0")]
        env: String,
        #[arg(long, value_delimiter = ',', default_values_t = VerifyArgs::default().ks)]
        k: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = VerifyArgs::default().eps)]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', value_enum, default_values_t = [Kind::P, Kind::R, Kind::W])]
        kinds: Vec<Kind>,
    },
    /// Success rate of the greedy policy of a saved Q-table.
    Eval {
        #[arg(long)]
        q: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn emit<T: Serialize>(json: bool, value: &T, table: impl FnOnce() -> String) -> Result<(), CliError> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{}", table());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let opts = GlobalOptions {
        config: cli.config,
        out: cli.out,
        seeds: cli.seeds,
        threads: cli.threads,
        json: cli.json,
    };
    match cli.command {
        Command::Solve { mdp, tolerance } => {
            let report = commands::solve(&mdp, tolerance, &opts)?;
            emit(opts.json || opts.out.is_none(), &report, String::new)?;
            if !opts.json && opts.out.is_some() {
                println!(
                    "residual {:.3e} after {} iterations",
                    report.residual, report.iterations
                );
            }
        }
        Command::Train => {
            let run = opts.run_file()?;
            let report = commands::train(&run, &opts)?;
            emit(opts.json, &report, || report.to_table())?;
        }
        Command::Compare => {
            let run = opts.run_file()?;
            let report = commands::compare(&run, &opts)?;
            emit(opts.json, &report, || report.to_table())?;
        }
        Command::Bound {
            epsilon,
            delta,
            gamma,
            alpha,
            d_min,
            num_pairs,
            k,
            tail_eps,
        } => {
            let inputs = BoundInputs {
                epsilon,
                delta,
                gamma,
                alpha,
                d_min,
                num_pairs,
            };
            let report = commands::bound(&inputs, k.zip(tail_eps))?;
            emit(opts.json, &report, || report.to_table())?;
        }
        Command::Verify {
            env,
            k,
            eps,
            trials,
            seed,
            kinds,
        } => {
            let args = VerifyArgs {
                env,
                ks: k,
                eps,
                trials,
                seed,
                kinds: kinds
                    .into_iter()
                    .map(|k| match k {
                        Kind::P => TailKind::P,
                        Kind::R => TailKind::R,
                        Kind::W => TailKind::W,
                    })
                    .collect(),
            };
            let report = commands::verify(&args, &opts)?;
            emit(opts.json, &report, || report.to_table())?;
            if !report.all_sound {
                return Err(CliError::Soundness(
                    "empirical tail frequency above analytic bound plus slack".into(),
                ));
            }
        }
        Command::Eval { q, seed } => {
            let run = opts.run_file()?;
            let report = commands::eval(&run, &q, seed)?;
            emit(opts.json, &report, || {
                format!(
                    "{}: greedy success {:.2}% over {} episodes (seed {})\n",
                    report.environment, report.success_pct, report.episodes, report.seed
                )
            })?;
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
