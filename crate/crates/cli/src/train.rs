use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use grab_core::io::{read_permutation, write_permutation};
use grab_core::trainer::DEFAULT_MAX_GRADIENT_BYTES;
use grab_core::{
    train_with_validation, walk_threshold, BalancerConfig, MlpShape, Problem, Strategy, TrainConfig,
    TrainTrace,
};
use serde_json::json;

use crate::balance_demo::BalancerChoice;
use crate::{opt, with_output, CliError, CliResult, SCHEMA_LINE};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemChoice {
    Quad,
    Logreg,
    Mlp,
    Csv(PathBuf),
}

impl FromStr for ProblemChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "quad" => Ok(Self::Quad),
            "logreg" => Ok(Self::Logreg),
            "mlp" => Ok(Self::Mlp),
            _ => match s.strip_prefix("csv:") {
                Some(p) if !p.is_empty() => Ok(Self::Csv(PathBuf::from(p))),
                _ => Err(format!("unknown problem `{s}` (quad, logreg, mlp, csv:<path>)")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyChoice {
    Rr,
    So,
    FlipFlop,
    Greedy,
    Herd,
    Grab,
    Grab1,
    Fixed(PathBuf),
}

impl FromStr for StrategyChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rr" => Ok(Self::Rr),
            "so" => Ok(Self::So),
            "flipflop" => Ok(Self::FlipFlop),
            "greedy" => Ok(Self::Greedy),
            "herd" => Ok(Self::Herd),
            "grab" => Ok(Self::Grab),
            "grab1" => Ok(Self::Grab1),
            _ => match s.strip_prefix("fixed:") {
                Some(p) if !p.is_empty() => Ok(Self::Fixed(PathBuf::from(p))),
                _ => Err(format!(
                    "unknown strategy `{s}` (rr, so, flipflop, greedy, herd, grab, grab1, fixed:<path>)"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// quad, logreg, mlp or csv:<path>.
    #[arg(long, default_value = "logreg")]
    pub problem: ProblemChoice,
    /// Number of examples (ignored for csv problems).
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Feature dimension (ignored for csv problems).
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    /// Hidden width of the mlp problem.
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub l2: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// rr, so, flipflop, greedy, herd, grab, grab1 or fixed:<path>.
    #[arg(long, default_value = "grab")]
    pub strategy: StrategyChoice,
    /// Balance-reorder rounds per epoch for the herd strategy.
    #[arg(long, default_value_t = 1)]
    pub herd_rounds: usize,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    #[arg(long, value_enum, default_value_t = BalancerChoice::Naive)]
    pub balancer: BalancerChoice,
    /// Walk threshold; defaults to 30 ln(nd / 0.01).
    #[arg(long)]
    pub c: Option<f64>,
    /// Hold out this many extra synthetic examples and report their loss in
    /// the JSON trace.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// Validation set for csv problems, in the same format.
    #[arg(long)]
    pub val_csv: Option<PathBuf>,
    /// Memory cap for stored gradients (greedy, herd).
    #[arg(long, default_value_t = DEFAULT_MAX_GRADIENT_BYTES)]
    pub max_gradient_bytes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the trace as JSON, with the configuration embedded.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the order produced after the last epoch, for later `fixed:` runs.
    #[arg(long)]
    pub save_order: Option<PathBuf>,
}

/// The training problem and, when requested, a validation problem.
pub fn build_problem(args: &TrainArgs) -> CliResult<(Problem, Option<Problem>)> {
    if let ProblemChoice::Csv(path) = &args.problem {
        if args.holdout > 0 {
            return Err(CliError::Usage(
                "--holdout applies to synthetic problems; use --val-csv".into(),
            ));
        }
        let train = Problem::logistic_from_csv(path, args.l2)?;
        let val = match &args.val_csv {
            Some(v) => Some(Problem::logistic_from_csv(v, args.l2)?),
            None => None,
        };
        return Ok((train, val));
    }
    if args.val_csv.is_some() {
        return Err(CliError::Usage("--val-csv needs a csv:<path> problem".into()));
    }
    let n = args.n + args.holdout;
    let p = match &args.problem {
        ProblemChoice::Quad => Problem::random_quadratic(n, args.d, args.l2, args.seed)?,
        ProblemChoice::Logreg => Problem::random_logistic(n, args.d, args.l2, args.seed)?,
        ProblemChoice::Mlp => {
            let shape = MlpShape {
                d_in: args.d,
                hidden: args.hidden,
                d_out: 1,
            };
            Problem::random_mlp(n, shape, args.l2, args.seed)?
        }
        ProblemChoice::Csv(_) => unreachable!("handled above"),
    };
    if args.holdout == 0 {
        return Ok((p, None));
    }
    let (train, val) = p.split_holdout(args.holdout)?;
    Ok((train, Some(val)))
}

pub fn build_config(args: &TrainArgs, problem: &Problem) -> CliResult<TrainConfig> {
    let strategy = match &args.strategy {
        StrategyChoice::Rr => Strategy::RandomReshuffle,
        StrategyChoice::So => Strategy::ShuffleOnce,
        StrategyChoice::FlipFlop => Strategy::FlipFlop,
        StrategyChoice::Greedy => Strategy::GreedyStale,
        StrategyChoice::Herd => Strategy::OfflineHerd {
            rounds: args.herd_rounds,
        },
        StrategyChoice::Grab => Strategy::Grab,
        StrategyChoice::Grab1 => Strategy::OneStepGrab,
        StrategyChoice::Fixed(path) => Strategy::FixedOrder {
            order: read_permutation(path)?,
        },
    };
    let balancer = match args.balancer {
        BalancerChoice::Naive => BalancerConfig::naive(),
        BalancerChoice::Walk => BalancerConfig::walk(
            args.c
                .unwrap_or_else(|| walk_threshold(problem.len(), problem.dim(), 0.01)),
        ),
    }
    .with_seed(args.seed);
    let mut cfg = TrainConfig::new(strategy, args.lr, args.epochs, args.seed);
    cfg.momentum = args.momentum;
    cfg.balancer = balancer;
    cfg.max_gradient_bytes = args.max_gradient_bytes;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_trace_csv(trace: &TrainTrace, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "{SCHEMA_LINE}")?;
    writeln!(
        w,
        "epoch,strategy,seed,loss,grad_norm,herding_obj,balance_bound,wall_ms"
    )?;
    let name = trace.config.strategy.name();
    let seed = trace.config.seed;
    for r in &trace.records {
        writeln!(
            w,
            "{},{name},{seed},{},{},{},{},{:.3}",
            r.epoch,
            r.loss,
            r.grad_norm,
            opt(r.herding_obj),
            opt(r.balance_bound),
            r.wall_ms
        )?;
    }
    Ok(())
}

pub fn trace_json(trace: &TrainTrace, problem: &Problem) -> serde_json::Value {
    let records: Vec<_> = trace
        .records
        .iter()
        .map(|r| {
            json!({
                "epoch": r.epoch,
                "loss": r.loss,
                "grad_norm": r.grad_norm,
                "herding_obj": r.herding_obj,
                "balance_bound": r.balance_bound,
                "wall_ms": r.wall_ms,
                "val_loss": r.val_loss,
                "ordering_ops": r.ordering_ops,
            })
        })
        .collect();
    json!({
        "schema": 1,
        "problem": {
            "kind": problem.kind(),
            "n": problem.len(),
            "dim": problem.dim(),
            "l2_reg": problem.l2_reg(),
        },
        "config": trace.config,
        "initial_loss": trace.initial_loss,
        "records": records,
        "footprint": trace.footprint,
        "next_order": trace.next_order,
    })
}

pub fn run_train(args: &TrainArgs) -> CliResult<()> {
    let (problem, validation) = build_problem(args)?;
    let cfg = build_config(args, &problem)?;
    let trace = train_with_validation(&problem, validation.as_ref(), &cfg)?;
    if !trace.final_loss().is_finite() {
        return Err(CliError::Core(grab_core::Error::Divergence { epoch: cfg.epochs }));
    }
    with_output(args.out.as_deref(), |w| write_trace_csv(&trace, w))?;
    if let Some(path) = &args.json {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &trace_json(&trace, &problem))?;
        writeln!(w)?;
        w.flush()?;
    }
    if let Some(path) = &args.save_order {
        let mut w = BufWriter::new(File::create(path)?);
        write_permutation(&trace.next_order, &mut w)?;
        w.flush()?;
    }
    Ok(())
}
