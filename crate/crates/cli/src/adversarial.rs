use std::io::{self, Write};
use std::path::PathBuf;

use clap::Args;
use grab_core::rng::{label, substream};
use grab_core::{adversarial_set, greedy_order, herding_objective, GreedyOptions, Norm, Permutation};
use rayon::prelude::*;

use crate::{CliError, CliResult, SCHEMA_LINE};

#[derive(Debug, Clone, Args)]
pub struct AdversarialArgs {
    /// Comma-separated even set sizes.
    #[arg(long, value_delimiter = ',', default_value = "40,100,400")]
    pub n_list: Vec<usize>,
    /// Random permutations per size.
    #[arg(long, default_value_t = 200)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// l2 herding objectives on the adversarial set of size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialRow {
    pub n: usize,
    pub greedy: f64,
    pub greedy_centered: f64,
    pub random_mean: f64,
    /// Sample standard deviation; zero for a single seed.
    pub random_std: f64,
    pub seeds: usize,
}

impl AdversarialRow {
    pub fn ratio(&self) -> f64 {
        self.greedy / self.random_mean
    }
}

pub fn random_objective(n: usize, seed: u64, trial: usize) -> CliResult<f64> {
    let set = adversarial_set(n)?;
    let mut rng = substream(seed, label::PROBE, ((n as u64) << 32) | trial as u64);
    let p = Permutation::random(n, &mut rng);
    Ok(herding_objective(&set, &p, Norm::L2)?)
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GRAB_THREADS") {
        let threads: usize = v
            .parse()
            .map_err(|_| CliError::Usage(format!("GRAB_THREADS must be a number, got `{v}`")))?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker threads: {e}")))
}

pub fn run_adversarial(args: &AdversarialArgs) -> CliResult<Vec<AdversarialRow>> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    if args.n_list.is_empty() {
        return Err(CliError::Usage("--n-list is empty".into()));
    }
    for &n in &args.n_list {
        adversarial_set(n)?;
    }
    let cells: Vec<(usize, usize)> = args
        .n_list
        .iter()
        .flat_map(|&n| (0..args.seeds).map(move |s| (n, s)))
        .collect();
    let pool = thread_pool()?;
    // collect keeps cell order, so the merge below is independent of scheduling
    let objectives: Vec<f64> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, s)| random_objective(n, args.seed, s))
            .collect::<CliResult<_>>()
    })?;

    let mut rows = Vec::with_capacity(args.n_list.len());
    for (i, &n) in args.n_list.iter().enumerate() {
        let set = adversarial_set(n)?;
        let greedy = herding_objective(
            &set,
            &greedy_order(&set, GreedyOptions { center: false }),
            Norm::L2,
        )?;
        let greedy_centered =
            herding_objective(&set, &greedy_order(&set, GreedyOptions::default()), Norm::L2)?;
        let sample = &objectives[i * args.seeds..(i + 1) * args.seeds];
        let k = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / k;
        let var = if sample.len() > 1 {
            sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        rows.push(AdversarialRow {
            n,
            greedy,
            greedy_centered,
            random_mean: mean,
            random_std: var.sqrt(),
            seeds: args.seeds,
        });
    }
    Ok(rows)
}

pub fn write_csv(rows: &[AdversarialRow], w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "{SCHEMA_LINE}")?;
    writeln!(
        w,
        "n,greedy_obj,greedy_centered_obj,random_mean,random_std,ratio,seeds"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n,
            r.greedy,
            r.greedy_centered,
            r.random_mean,
            r.random_std,
            r.ratio(),
            r.seeds
        )?;
    }
    Ok(())
}
