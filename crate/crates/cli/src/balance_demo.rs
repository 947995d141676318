use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use grab_core::io::read_vector_set;
use grab_core::rng::{label, substream};
use grab_core::{
    herding_objective, offline_herd_from, prefix_norms, walk_threshold, BalancerConfig, Norm, Permutation,
    VectorSet,
};
use rand::Rng;

use crate::{CliError, CliResult, SCHEMA_LINE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BalancerChoice {
    Naive,
    Walk,
}

#[derive(Debug, Clone, Args)]
pub struct BalanceDemoArgs {
    /// Vector-set file (CSV or GRABVEC1 binary) to use instead of uniform
    /// vectors; `--n` and `--d` are then taken from the file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 5)]
    pub rounds: usize,
    #[arg(long, value_enum, default_value_t = BalancerChoice::Naive)]
    pub balancer: BalancerChoice,
    /// Walk threshold; defaults to 30 ln(nd / 0.01).
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    pub linf: f64,
    pub l2: f64,
    /// Lowest l-infinity objective so far, the random start included.
    pub best_linf: f64,
    pub balance_bound: f64,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct BalanceDemoReport {
    pub args: BalanceDemoArgs,
    pub random_linf: f64,
    pub random_l2: f64,
    pub rounds: Vec<RoundStats>,
    /// l2 prefix-norm curve of the random start.
    pub prefix_random: Vec<f64>,
    /// l2 prefix-norm curve of the last round's order. Empty without rounds.
    pub prefix_herded: Vec<f64>,
}

impl BalanceDemoReport {
    pub fn final_l2(&self) -> f64 {
        self.rounds.last().map_or(self.random_l2, |r| r.l2)
    }

    pub fn write_csv(&self, w: &mut dyn Write) -> io::Result<()> {
        let a = &self.args;
        writeln!(w, "{SCHEMA_LINE}")?;
        writeln!(
            w,
            "# balance-demo n={} d={} rounds={} balancer={:?} seed={}",
            a.n, a.d, a.rounds, a.balancer, a.seed
        )?;
        writeln!(w, "series,index,value")?;
        writeln!(w, "round_linf,0,{}", self.random_linf)?;
        writeln!(w, "round_l2,0,{}", self.random_l2)?;
        writeln!(w, "best_linf,0,{}", self.random_linf)?;
        for (r, s) in self.rounds.iter().enumerate() {
            let r = r + 1;
            writeln!(w, "round_linf,{r},{}", s.linf)?;
            writeln!(w, "round_l2,{r},{}", s.l2)?;
            writeln!(w, "best_linf,{r},{}", s.best_linf)?;
            writeln!(w, "round_bound,{r},{}", s.balance_bound)?;
            writeln!(w, "round_attempts,{r},{}", s.attempts)?;
        }
        for (k, v) in self.prefix_random.iter().enumerate() {
            writeln!(w, "prefix_random,{},{v}", k + 1)?;
        }
        for (k, v) in self.prefix_herded.iter().enumerate() {
            writeln!(w, "prefix_herded,{},{v}", k + 1)?;
        }
        Ok(())
    }
}

/// `n` vectors with independent uniform `[0, 1)` coordinates.
pub fn uniform_vectors(n: usize, d: usize, seed: u64) -> CliResult<VectorSet> {
    let mut rng = substream(seed, label::DATA, 0);
    let data = (0..n * d).map(|_| rng.random::<f64>()).collect();
    Ok(VectorSet::from_flat(n, d, data)?)
}

pub fn run_balance_demo(args: &BalanceDemoArgs) -> CliResult<BalanceDemoReport> {
    let set = match &args.input {
        Some(path) => read_vector_set(path)?,
        None => {
            if args.n == 0 || args.d == 0 {
                return Err(CliError::Usage("--n and --d must be positive".into()));
            }
            uniform_vectors(args.n, args.d, args.seed)?
        }
    };
    let mut args = args.clone();
    args.n = set.len();
    args.d = set.dim();
    let config = match args.balancer {
        BalancerChoice::Naive => BalancerConfig::naive(),
        BalancerChoice::Walk => {
            let c = args.c.unwrap_or_else(|| walk_threshold(args.n, args.d, 0.01));
            BalancerConfig::walk(c)
        }
    }
    .with_seed(args.seed);
    config.validate()?;

    let start = Permutation::random(args.n, &mut substream(args.seed, label::INIT_ORDER, 0));
    let prefix_random = prefix_norms(&set, &start, Norm::L2)?;
    let random_linf = herding_objective(&set, &start, Norm::Linf)?;
    let random_l2 = prefix_random.iter().copied().fold(0.0, f64::max);

    let mut rounds = Vec::new();
    let mut prefix_herded = Vec::new();
    if args.rounds > 0 {
        let out = offline_herd_from(&set, config, args.rounds, start)?;
        let mut best = random_linf;
        for r in &out.rounds {
            best = best.min(r.objective);
            rounds.push(RoundStats {
                linf: r.objective,
                l2: herding_objective(&set, &r.order, Norm::L2)?,
                best_linf: best,
                balance_bound: r.balance_bound,
                attempts: r.attempts,
            });
        }
        prefix_herded = prefix_norms(&set, out.last(), Norm::L2)?;
    }
    Ok(BalanceDemoReport {
        args,
        random_linf,
        random_l2,
        rounds,
        prefix_random,
        prefix_herded,
    })
}
