//! Command-line experiments: the balance-then-reorder demo, SGD training runs
//! with pluggable ordering, and the greedy counterexample sweep.
//!
//! Every command writes tidy CSV that starts with a `# schema=1` line. Output
//! is a pure function of the flags, apart from `wall_ms` columns.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use clap::{Parser, Subcommand};

pub mod adversarial;
pub mod balance_demo;
pub mod train;

pub use adversarial::{run_adversarial, AdversarialArgs, AdversarialRow};
pub use balance_demo::{run_balance_demo, BalanceDemoArgs, BalanceDemoReport};
pub use train::{run_train, ProblemChoice, StrategyChoice, TrainArgs};

pub const SCHEMA_LINE: &str = "# schema=1";

#[derive(Debug, Parser)]
#[command(
    name = "grab",
    version,
    about = "Example-ordering experiments for permutation SGD"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Balance-then-reorder uniform vectors and compare prefix sums with a random order.
    BalanceDemo(BalanceDemoArgs),
    /// Train a synthetic or CSV problem with a chosen ordering strategy.
    Train(TrainArgs),
    /// Greedy versus random orders on the two-vector adversarial set.
    Adversarial(AdversarialArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] grab_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 usage, 3 divergence, 4 balancer failure, 5 allocation refusal, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use grab_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::Divergence { .. } => 3,
                E::BalancerFailure { .. } => 4,
                E::AllocationRefused { .. } => 5,
                E::InvalidConfig(_)
                | E::OddCount(_)
                | E::EmptySet
                | E::DimensionMismatch { .. }
                | E::LengthMismatch { .. }
                | E::InvalidPermutation(_) => 2,
                _ => 1,
            },
            CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::BalanceDemo(args) => {
            let out = args.out.clone();
            let report = run_balance_demo(&args)?;
            with_output(out.as_deref(), |w| report.write_csv(w))
        }
        Command::Train(args) => run_train(&args),
        Command::Adversarial(args) => {
            let out = args.out.clone();
            let rows = run_adversarial(&args)?;
            with_output(out.as_deref(), |w| adversarial::write_csv(&rows, w))
        }
    }
}

/// Runs `body` against the named file, or stdout when there is none.
pub fn with_output<F>(path: Option<&Path>, body: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// `None` prints as an empty CSV field.
pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
