use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rarebench_core::config::RunConfig;
use rarebench_core::pipeline::Pipeline;
use rarebench_core::Error;

#[derive(Parser)]
#[command(
    name = "rarebench",
    version,
    about = "Rare-event sampling and committer-model benchmarking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one noisy trajectory and write trajectory.csv.
    Simulate(Common),
    /// Run branched forward-flux sampling for every dataset.
    Ffs(Common),
    /// Filter, assemble and split the sampled crossings.
    Dataset(Common),
    /// Hyperparameter search for every model on every dataset.
    Tune(Common),
    /// Tune, train, test and deploy every model, then cost and rank them.
    Bench(Common),
    /// Recompute costs and rankings from existing benchmark metrics.
    Rank(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the output directory of the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(command: &Command) -> Result<(), Error> {
    let common = match command {
        Command::Simulate(c)
        | Command::Ffs(c)
        | Command::Dataset(c)
        | Command::Tune(c)
        | Command::Bench(c)
        | Command::Rank(c) => c,
    };
    let mut config = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(out) = &common.out {
        config.output = out.clone();
    }
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(Error::config("--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::config(e.to_string()))?;
    }
    let pipeline = Pipeline::new(config)?;
    let out = pipeline.output.display().to_string();
    match command {
        Command::Simulate(_) => {
            pipeline.simulate()?;
        }
        Command::Ffs(_) => {
            pipeline.ffs()?;
        }
        Command::Dataset(_) => {
            pipeline.dataset()?;
        }
        Command::Tune(_) => {
            pipeline.tune()?;
        }
        Command::Bench(_) => {
            let outcome = pipeline.bench()?;
            for (i, (m, r)) in outcome.global.iter().enumerate() {
                println!("{:>3}  {m:<20} {r:.3}", i + 1);
            }
        }
        Command::Rank(_) => {
            for (i, (m, r)) in pipeline.rank()?.iter().enumerate() {
                println!("{:>3}  {m:<20} {r:.3}", i + 1);
            }
        }
    }
    info!("outputs written to {out}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
