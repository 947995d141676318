//! Permutation-based SGD with pluggable example-ordering strategies.
//!
//! Every epoch visits all `n` examples in the epoch's order and takes the
//! step `w <- w - alpha * grad f(w; x_{order(t)})` (heavy-ball momentum is
//! optional and off by default). Strategies differ only in how the next
//! epoch's order is produced:
//!
//! | strategy        | next order                                              |
//! |-----------------|---------------------------------------------------------|
//! | `RandomReshuffle` | fresh seeded shuffle                                  |
//! | `ShuffleOnce`   | the initial order, forever                              |
//! | `FlipFlop`      | reverse of the current order after odd epochs, fresh shuffle after even ones |
//! | `GreedyStale`   | greedy herding over the gradients stored this epoch     |
//! | `OfflineHerd`   | balance-then-reorder rounds over the stored gradients   |
//! | `Grab`          | built online from balanced, stale-mean-centered gradients |
//! | `OneStepGrab`   | GraB during epoch 1, then that order forever            |
//! | `FixedOrder`    | a caller-supplied order, forever                        |
//!
//! All strategies start from the same seeded random order, except
//! `FixedOrder`, which starts from its own.
//!
//! GraB's first epoch centers with a zero stale mean, so its signs see raw
//! gradients; from the second epoch on the stale mean is the previous
//! epoch's average gradient. The first two epochs are warmup in that sense.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::balancing::{naive_sign, walk_sign, BalancerConfig, BalancerKind, FailurePolicy, WalkFailure};
use crate::error::{Error, Result};
use crate::objective::herding_objective;
use crate::ordering::{greedy_order_counted, offline_herd_from, GreedyOptions};
use crate::problems::Problem;
use crate::rng::{label, substream, StreamRng};
use crate::vector::{axpy, norm2, norm_inf, DenseVector, Norm, Permutation, Sign, VectorSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Strategy {
    RandomReshuffle,
    ShuffleOnce,
    FlipFlop,
    GreedyStale,
    OfflineHerd { rounds: usize },
    Grab,
    OneStepGrab,
    FixedOrder { order: Permutation },
}

impl Strategy {
    /// Short name used in CSV output and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::RandomReshuffle => "rr",
            Strategy::ShuffleOnce => "so",
            Strategy::FlipFlop => "flipflop",
            Strategy::GreedyStale => "greedy",
            Strategy::OfflineHerd { .. } => "herd",
            Strategy::Grab => "grab",
            Strategy::OneStepGrab => "grab1",
            Strategy::FixedOrder { .. } => "fixed",
        }
    }
}

/// Default cap on stored-gradient memory for the stale strategies: 1 GiB.
pub const DEFAULT_MAX_GRADIENT_BYTES: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub epochs: usize,
    pub strategy: Strategy,
    pub momentum: f64,
    pub balancer: BalancerConfig,
    pub seed: u64,
    /// Stale strategies refuse to run when `n * d * 8` exceeds this.
    pub max_gradient_bytes: usize,
    /// Record each epoch's herding objective on its own gradients. Costs
    /// `n * d` floats of scratch.
    pub diagnostics: bool,
}

impl TrainConfig {
    pub fn new(strategy: Strategy, alpha: f64, epochs: usize, seed: u64) -> Self {
        Self {
            alpha,
            epochs,
            strategy,
            momentum: 0.0,
            balancer: BalancerConfig::naive(),
            seed,
            max_gradient_bytes: DEFAULT_MAX_GRADIENT_BYTES,
            diagnostics: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if let Strategy::OfflineHerd { rounds: 0 } = self.strategy {
            return Err(Error::InvalidConfig("offline herding needs rounds >= 1".into()));
        }
        self.balancer.validate()
    }
}

/// The order every strategy but `FixedOrder` starts from.
pub fn initial_order(n: usize, seed: u64) -> Permutation {
    Permutation::random(n, &mut substream(seed, label::INIT_ORDER, 0))
}

fn shuffled(n: usize, seed: u64, epoch: usize) -> Permutation {
    Permutation::random(n, &mut substream(seed, label::EPOCH_ORDER, epoch as u64))
}

/// Persistent ordering memory, in units of vectors and permutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingFootprint {
    pub vectors: usize,
    pub vector_dim: usize,
    pub permutations: usize,
    pub permutation_len: usize,
}

impl OrderingFootprint {
    pub fn bytes(&self) -> usize {
        self.vectors * self.vector_dim * std::mem::size_of::<f64>()
            + self.permutations * self.permutation_len * std::mem::size_of::<usize>()
    }
}

/// Online gradient balancing state.
///
/// Carries exactly three `d`-vectors (the stale mean, the next epoch's mean
/// accumulator and the running signed sum) and two permutations (this
/// epoch's order and the one being built), plus the two write pointers.
#[derive(Debug, Clone)]
pub struct GrabState {
    stale_mean: DenseVector,
    next_mean: DenseVector,
    running_sum: DenseVector,
    /// Next free slot from the front.
    left: usize,
    /// One past the next free slot from the back; the epoch is complete
    /// when `left == right`.
    right: usize,
    current_order: Permutation,
    next_order: Vec<usize>,
    balancer: BalancerConfig,
    rng: StreamRng,
    epoch: usize,
    attempt: u32,
    /// Running max of centered-gradient norms; walk inputs are divided by it.
    scale: f64,
    epoch_bound: f64,
    ops: u64,
}

impl GrabState {
    pub fn new(first_order: Permutation, d: usize, balancer: BalancerConfig) -> Self {
        let n = first_order.len();
        Self {
            stale_mean: DenseVector::zeros(d),
            next_mean: DenseVector::zeros(d),
            running_sum: DenseVector::zeros(d),
            left: 0,
            right: n,
            current_order: first_order,
            next_order: vec![usize::MAX; n],
            balancer,
            rng: substream(balancer.rng_seed, label::BALANCER, 0),
            epoch: 0,
            attempt: 0,
            scale: 0.0,
            epoch_bound: 0.0,
            ops: 0,
        }
    }

    pub fn begin_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
        self.attempt = 0;
        self.left = 0;
        self.right = self.current_order.len();
        self.running_sum.fill_zero();
        self.next_mean.fill_zero();
        self.next_order.iter_mut().for_each(|x| *x = usize::MAX);
        self.epoch_bound = 0.0;
        self.reseed();
    }

    fn reseed(&mut self) {
        let stream = label::BALANCER ^ ((self.epoch as u64) << 8);
        self.rng = substream(self.balancer.rng_seed, stream, self.attempt as u64);
    }

    /// Process the gradient of the example at visit position `t`.
    /// `scratch` receives the centered gradient.
    pub fn step(&mut self, t: usize, grad: &[f64], scratch: &mut [f64]) -> Result<Sign> {
        let n = self.current_order.len();
        let d = grad.len();
        scratch.copy_from_slice(grad);
        axpy(scratch, -1.0, &self.stale_mean);
        axpy(self.next_mean.as_mut_slice(), 1.0 / n as f64, grad);
        self.ops += 2 * d as u64;

        let sign = match self.balancer.kind {
            BalancerKind::Naive => {
                self.ops += 2 * d as u64;
                naive_sign(&self.running_sum, scratch)
            }
            BalancerKind::Walk { c } => {
                self.scale = self.scale.max(norm2(scratch));
                if self.scale > 0.0 {
                    let inv = 1.0 / self.scale;
                    scratch.iter_mut().for_each(|x| *x *= inv);
                }
                self.ops += 3 * d as u64;
                loop {
                    match walk_sign(&self.running_sum, scratch, c, &mut self.rng) {
                        Ok(sign) => break sign,
                        Err(WalkFailure) => self.on_failure(t)?,
                    }
                }
            }
        };
        axpy(self.running_sum.as_mut_slice(), sign.value(), scratch);
        self.ops += d as u64;
        self.epoch_bound = self.epoch_bound.max(norm_inf(&self.running_sum));

        self.place(t, sign);
        Ok(sign)
    }

    /// Write the example at visit position `t` to the front (`+1`) or the
    /// back (`-1`) of the order being built.
    pub fn place(&mut self, t: usize, sign: Sign) {
        let example = self.current_order.at(t);
        match sign {
            Sign::Plus => {
                self.next_order[self.left] = example;
                self.left += 1;
            }
            Sign::Minus => {
                self.right -= 1;
                self.next_order[self.right] = example;
            }
        }
    }

    // The pointer writes already made stay valid, so a restart only clears
    // the signed sum and moves to a fresh stream.
    fn on_failure(&mut self, t: usize) -> Result<()> {
        let max_attempts = match self.balancer.failure_policy {
            FailurePolicy::Abort => 1,
            FailurePolicy::RestartEpoch { max_retries } => max_retries.saturating_add(1),
        };
        if self.attempt + 1 >= max_attempts {
            return Err(Error::BalancerFailure {
                step: t,
                attempts: self.attempt + 1,
            });
        }
        self.attempt += 1;
        self.running_sum.fill_zero();
        self.reseed();
        Ok(())
    }

    /// Close the epoch: the built order becomes current and the accumulated
    /// mean becomes the stale mean.
    pub fn finish_epoch(&mut self) -> Result<Permutation> {
        if self.left != self.right {
            return Err(Error::InvalidPermutation(format!(
                "epoch closed with {} unvisited slots",
                self.right - self.left
            )));
        }
        let next = Permutation::new(self.next_order.clone())?;
        self.current_order = next.clone();
        std::mem::swap(&mut self.stale_mean, &mut self.next_mean);
        Ok(next)
    }

    pub fn stale_mean(&self) -> &DenseVector {
        &self.stale_mean
    }

    pub fn next_mean(&self) -> &DenseVector {
        &self.next_mean
    }

    pub fn running_sum(&self) -> &DenseVector {
        &self.running_sum
    }

    pub fn pointers(&self) -> (usize, usize) {
        (self.left, self.right)
    }

    pub fn current_order(&self) -> &Permutation {
        &self.current_order
    }

    /// Largest `||s||_inf` reached this epoch, in signing units.
    pub fn epoch_bound(&self) -> f64 {
        self.epoch_bound
    }

    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn footprint(&self) -> OrderingFootprint {
        let vectors = [&self.stale_mean, &self.next_mean, &self.running_sum];
        OrderingFootprint {
            vectors: vectors.len(),
            vector_dim: self.stale_mean.dim(),
            permutations: 2,
            permutation_len: self.current_order.len().max(self.next_order.len()),
        }
    }
}

enum Engine {
    Reshuffle,
    Fixed,
    FlipFlop,
    Stale {
        store: Vec<f64>,
        herd_rounds: Option<usize>,
    },
    Grab(Box<GrabState>),
    OneStep(Option<Box<GrabState>>),
}

/// Per-strategy order bookkeeping.
pub struct OrderScheduler {
    engine: Engine,
    n: usize,
    d: usize,
    seed: u64,
    balancer: BalancerConfig,
    current: Permutation,
    ops: u64,
}

impl OrderScheduler {
    pub fn new(strategy: &Strategy, n: usize, d: usize, cfg: &TrainConfig) -> Result<Self> {
        let first = match strategy {
            Strategy::FixedOrder { order } => {
                if order.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        got: order.len(),
                    });
                }
                order.clone()
            }
            _ => initial_order(n, cfg.seed),
        };
        let engine = match strategy {
            Strategy::RandomReshuffle => Engine::Reshuffle,
            Strategy::ShuffleOnce | Strategy::FixedOrder { .. } => Engine::Fixed,
            Strategy::FlipFlop => Engine::FlipFlop,
            Strategy::GreedyStale | Strategy::OfflineHerd { .. } => {
                let bytes = n.saturating_mul(d).saturating_mul(std::mem::size_of::<f64>());
                if bytes > cfg.max_gradient_bytes {
                    return Err(Error::AllocationRefused {
                        bytes,
                        limit: cfg.max_gradient_bytes,
                    });
                }
                let mut store = Vec::new();
                store
                    .try_reserve_exact(n * d)
                    .map_err(|_| Error::AllocationRefused {
                        bytes,
                        limit: cfg.max_gradient_bytes,
                    })?;
                store.resize(n * d, 0.0);
                let herd_rounds = match strategy {
                    Strategy::OfflineHerd { rounds } => Some(*rounds),
                    _ => None,
                };
                Engine::Stale { store, herd_rounds }
            }
            Strategy::Grab => Engine::Grab(Box::new(GrabState::new(first.clone(), d, cfg.balancer))),
            Strategy::OneStepGrab => {
                Engine::OneStep(Some(Box::new(GrabState::new(first.clone(), d, cfg.balancer))))
            }
        };
        Ok(Self {
            engine,
            n,
            d,
            seed: cfg.seed,
            balancer: cfg.balancer,
            current: first,
            ops: 0,
        })
    }

    /// Order for the epoch about to run.
    pub fn current(&self) -> &Permutation {
        &self.current
    }

    pub fn begin_epoch(&mut self, epoch: usize) {
        match &mut self.engine {
            Engine::Grab(g) => g.begin_epoch(epoch),
            Engine::OneStep(Some(g)) => g.begin_epoch(epoch),
            _ => {}
        }
    }

    /// Feed the gradient seen at visit position `t`.
    pub fn observe(&mut self, t: usize, grad: &[f64], scratch: &mut [f64]) -> Result<()> {
        match &mut self.engine {
            Engine::Stale { store, .. } => {
                let i = self.current.at(t);
                store[i * self.d..(i + 1) * self.d].copy_from_slice(grad);
                self.ops += self.d as u64;
            }
            Engine::Grab(g) => {
                g.step(t, grad, scratch)?;
            }
            Engine::OneStep(Some(g)) => {
                g.step(t, grad, scratch)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Balancing bound reached this epoch, for strategies that balance online.
    pub fn epoch_bound(&self) -> Option<f64> {
        match &self.engine {
            Engine::Grab(g) => Some(g.epoch_bound()),
            Engine::OneStep(Some(g)) => Some(g.epoch_bound()),
            _ => None,
        }
    }

    /// Vector-element operations spent on ordering so far.
    pub fn ops(&self) -> u64 {
        let grab = match &self.engine {
            Engine::Grab(g) => g.ops(),
            Engine::OneStep(Some(g)) => g.ops(),
            _ => 0,
        };
        self.ops + grab
    }

    pub fn footprint(&self) -> OrderingFootprint {
        match &self.engine {
            Engine::Grab(g) => g.footprint(),
            Engine::OneStep(Some(g)) => g.footprint(),
            Engine::Stale { .. } => OrderingFootprint {
                vectors: self.n,
                vector_dim: self.d,
                permutations: 1,
                permutation_len: self.n,
            },
            _ => OrderingFootprint {
                vectors: 0,
                vector_dim: self.d,
                permutations: 1,
                permutation_len: self.n,
            },
        }
    }

    pub fn grab_state(&self) -> Option<&GrabState> {
        match &self.engine {
            Engine::Grab(g) => Some(g),
            Engine::OneStep(Some(g)) => Some(g),
            _ => None,
        }
    }

    /// Close epoch `epoch` (1-based) and produce the next epoch's order.
    pub fn next_order(&mut self, epoch: usize) -> Result<Permutation> {
        let next = match &mut self.engine {
            Engine::Reshuffle => shuffled(self.n, self.seed, epoch + 1),
            Engine::Fixed => self.current.clone(),
            Engine::FlipFlop => {
                if epoch % 2 == 1 {
                    self.current.reversed()
                } else {
                    shuffled(self.n, self.seed, epoch + 1)
                }
            }
            Engine::Stale { store, herd_rounds } => {
                let set = VectorSet::from_flat(self.n, self.d, store.clone())?;
                match herd_rounds {
                    None => {
                        let (order, ops) = greedy_order_counted(&set, GreedyOptions::default());
                        self.ops += ops;
                        order
                    }
                    Some(rounds) => {
                        let mut balancer = self.balancer;
                        balancer.rng_seed = balancer.rng_seed.wrapping_add((epoch as u64) << 32);
                        let out = offline_herd_from(&set, balancer, *rounds, self.current.clone())?;
                        self.ops += (*rounds * 4 * self.n * self.d) as u64;
                        out.best
                    }
                }
            }
            Engine::Grab(g) => g.finish_epoch()?,
            Engine::OneStep(slot) => match slot.take() {
                Some(mut g) => g.finish_epoch()?,
                None => self.current.clone(),
            },
        };
        self.current = next.clone();
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// `f(w)` after the epoch.
    pub loss: f64,
    /// `||grad f(w)||_2` after the epoch.
    pub grad_norm: f64,
    /// l2 herding objective of the epoch's order over the gradients seen
    /// during the epoch.
    pub herding_obj: Option<f64>,
    /// Largest l-infinity signed prefix sum during the epoch (GraB only).
    pub balance_bound: Option<f64>,
    pub wall_ms: f64,
    /// Loss on the held-out problem, when one was given.
    #[serde(default)]
    pub val_loss: Option<f64>,
    /// Ordering work this epoch, in vector-element operations.
    pub ordering_ops: u64,
    /// Order used during the epoch.
    pub order: Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub config: TrainConfig,
    pub initial_loss: f64,
    pub records: Vec<EpochRecord>,
    pub final_weights: DenseVector,
    /// Order produced at the end of the last epoch.
    pub next_order: Permutation,
    pub footprint: OrderingFootprint,
}

impl TrainTrace {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(self.initial_loss, |r| r.loss)
    }

    pub fn orders(&self) -> impl Iterator<Item = &Permutation> {
        self.records.iter().map(|r| &r.order)
    }
}

/// Run `cfg.epochs` epochs of permutation SGD on `problem`.
pub fn train(problem: &Problem, cfg: &TrainConfig) -> Result<TrainTrace> {
    train_with_validation(problem, None, cfg)
}

/// [`train`], also evaluating `validation` after every epoch.
pub fn train_with_validation(
    problem: &Problem,
    validation: Option<&Problem>,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    cfg.validate()?;
    if let Some(v) = validation {
        if v.dim() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: v.dim(),
            });
        }
    }
    let n = problem.len();
    let d = problem.dim();
    let mut sched = OrderScheduler::new(&cfg.strategy, n, d, cfg)?;

    let mut w = problem.initial_point(cfg.seed).into_vec();
    let mut velocity = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut seen = if cfg.diagnostics {
        vec![0.0; n * d]
    } else {
        Vec::new()
    };

    let initial_loss = problem.full_loss(&w)?;
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let ops_before = sched.ops();
        let order = sched.current().clone();
        sched.begin_epoch(epoch);
        for (t, &i) in order.as_slice().iter().enumerate() {
            problem.grad_example_into(&w, i, &mut grad)?;
            if cfg.diagnostics {
                seen[t * d..(t + 1) * d].copy_from_slice(&grad);
            }
            sched.observe(t, &grad, &mut scratch)?;
            if cfg.momentum > 0.0 {
                for (v, g) in velocity.iter_mut().zip(&grad) {
                    *v = cfg.momentum * *v + g;
                }
                axpy(&mut w, -cfg.alpha, &velocity);
            } else {
                axpy(&mut w, -cfg.alpha, &grad);
            }
        }
        let balance_bound = sched.epoch_bound();
        sched.next_order(epoch)?;

        let loss = problem.full_loss(&w)?;
        if !loss.is_finite() || w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        let grad_norm = norm2(&problem.full_grad(&w)?);
        let herding_obj = if cfg.diagnostics {
            let set = VectorSet::from_flat(n, d, seen.clone())?;
            Some(herding_objective(&set, &Permutation::identity(n), Norm::L2)?)
        } else {
            None
        };
        records.push(EpochRecord {
            epoch,
            loss,
            grad_norm,
            herding_obj,
            balance_bound,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            val_loss: validation.map(|v| v.full_loss(&w)).transpose()?,
            ordering_ops: sched.ops() - ops_before,
            order,
        });
    }

    Ok(TrainTrace {
        config: cfg.clone(),
        initial_loss,
        records,
        final_weights: DenseVector::new(w)?,
        next_order: sched.current().clone(),
        footprint: sched.footprint(),
    })
}

/// Retrain with a fixed donor order (typically the final order of a GraB run).
pub fn retrain_fixed(problem: &Problem, donor: &Permutation, cfg: &TrainConfig) -> Result<TrainTrace> {
    if donor.len() != problem.len() {
        return Err(Error::LengthMismatch {
            expected: problem.len(),
            got: donor.len(),
        });
    }
    let mut cfg = cfg.clone();
    cfg.strategy = Strategy::FixedOrder { order: donor.clone() };
    train(problem, &cfg)
}
