//! Online vector balancing: assign each arriving vector a sign so that the
//! signed prefix sums stay small.
//!
//! Two balancers are provided:
//!
//! * [`naive_sign`] picks `+1` iff `||s + v||_2 < ||s - v||_2`, ties go to
//!   `-1`. It needs no normalization and no randomness.
//! * [`walk_sign`] is the self-balancing walk: `+1` with probability
//!   `1/2 - <s, z> / (2c)`, failing when `|<s, z>| > c` or `||s||_inf > c`.
//!   With `||z||_2 <= 1` and `c = 30 ln(n d / delta)` the signed prefix sums
//!   stay below `c` with probability at least `1 - delta`. The log is the
//!   natural log.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{label, substream, StreamRng};
use crate::vector::{axpy, dot, norm2_sq, norm_inf, DenseVector, Permutation, Sign, SignSequence, VectorSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum BalancerKind {
    Naive,
    Walk { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum FailurePolicy {
    Abort,
    /// Re-seed and redo the signing pass, at most `max_retries` extra times.
    RestartEpoch {
        max_retries: u32,
    },
}

impl Default for FailurePolicy {
    fn default() -> Self {
        FailurePolicy::RestartEpoch { max_retries: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancerConfig {
    pub kind: BalancerKind,
    pub failure_policy: FailurePolicy,
    pub rng_seed: u64,
    /// Divide every vector by this before signing. Naive signs are
    /// scale-invariant; walk probabilities are not.
    pub prescale: Option<f64>,
}

impl Default for BalancerConfig {
    fn default() -> Self {
        Self::naive()
    }
}

impl BalancerConfig {
    pub fn naive() -> Self {
        Self {
            kind: BalancerKind::Naive,
            failure_policy: FailurePolicy::default(),
            rng_seed: 0,
            prescale: None,
        }
    }

    pub fn walk(c: f64) -> Self {
        Self {
            kind: BalancerKind::Walk { c },
            ..Self::naive()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_policy(mut self, policy: FailurePolicy) -> Self {
        self.failure_policy = policy;
        self
    }

    pub fn with_prescale(mut self, r: f64) -> Self {
        self.prescale = Some(r);
        self
    }

    pub fn is_walk(&self) -> bool {
        matches!(self.kind, BalancerKind::Walk { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if let BalancerKind::Walk { c } = self.kind {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "walk parameter c must be > 0, got {c}"
                )));
            }
        }
        if let Some(r) = self.prescale {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidConfig(format!("prescale must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

/// `30 ln(n d / delta)`, the walk threshold with failure probability `delta`.
pub fn walk_threshold(n: usize, d: usize, delta: f64) -> f64 {
    30.0 * ((n * d) as f64 / delta).ln()
}

/// Raised by the walk when its guard trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkFailure;

/// Sign for `v` given the current sum `s`. Does not update `s`.
pub fn naive_sign(s: &[f64], v: &[f64]) -> Sign {
    let mut plus = 0.0;
    let mut minus = 0.0;
    for (si, vi) in s.iter().zip(v) {
        plus += (si + vi) * (si + vi);
        minus += (si - vi) * (si - vi);
    }
    if plus < minus {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Probability that the walk assigns `+1`, or the failure signal.
pub fn walk_probability(s: &[f64], z: &[f64], c: f64) -> std::result::Result<f64, WalkFailure> {
    let inner = dot(s, z);
    if inner.abs() > c || norm_inf(s) > c {
        return Err(WalkFailure);
    }
    Ok(0.5 - inner / (2.0 * c))
}

pub fn walk_sign<R: Rng + ?Sized>(
    s: &[f64],
    z: &[f64],
    c: f64,
    rng: &mut R,
) -> std::result::Result<Sign, WalkFailure> {
    let p = walk_probability(s, z, c)?;
    let u: f64 = rng.random();
    Ok(if u < p { Sign::Plus } else { Sign::Minus })
}

/// Running signed sum plus the random stream of one signing pass.
#[derive(Debug, Clone)]
pub struct BalancerState {
    config: BalancerConfig,
    running_sum: DenseVector,
    step_count: usize,
    pass: u64,
    attempt: u32,
    rng: StreamRng,
    scratch: Vec<f64>,
    ops: u64,
}

impl BalancerState {
    pub fn new(config: BalancerConfig, d: usize) -> Self {
        Self {
            config,
            running_sum: DenseVector::zeros(d),
            step_count: 0,
            pass: 0,
            attempt: 0,
            rng: substream(config.rng_seed, label::BALANCER, 0),
            scratch: vec![0.0; d],
            ops: 0,
        }
    }

    pub fn config(&self) -> &BalancerConfig {
        &self.config
    }

    pub fn running_sum(&self) -> &DenseVector {
        &self.running_sum
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn attempt(&self) -> u32 {
        self.attempt
    }

    /// Vector-element operations spent signing so far.
    pub fn ops(&self) -> u64 {
        self.ops
    }

    /// Zero the sum and derive the stream for pass `pass`, attempt 0.
    pub fn begin_pass(&mut self, pass: u64) {
        self.pass = pass;
        self.attempt = 0;
        self.reset();
    }

    /// Zero the sum and move to the next attempt's stream within the pass.
    pub fn restart(&mut self) {
        self.attempt += 1;
        self.reset();
    }

    fn reset(&mut self) {
        self.running_sum.fill_zero();
        self.step_count = 0;
        let stream = label::BALANCER ^ (self.pass << 8);
        self.rng = substream(self.config.rng_seed, stream, self.attempt as u64);
    }

    /// Sign `v`, fold it into the running sum and return the sign.
    pub fn push(&mut self, v: &[f64]) -> std::result::Result<Sign, WalkFailure> {
        let d = self.running_sum.dim();
        debug_assert_eq!(v.len(), d);
        let v = match self.config.prescale {
            Some(r) => {
                for (dst, x) in self.scratch.iter_mut().zip(v) {
                    *dst = x / r;
                }
                &self.scratch[..]
            }
            None => v,
        };
        let sign = match self.config.kind {
            BalancerKind::Naive => {
                self.ops += 2 * d as u64;
                naive_sign(&self.running_sum, v)
            }
            BalancerKind::Walk { c } => {
                self.ops += 2 * d as u64;
                walk_sign(&self.running_sum, v, c, &mut self.rng)?
            }
        };
        axpy(self.running_sum.as_mut_slice(), sign.value(), v);
        self.ops += d as u64;
        self.step_count += 1;
        Ok(sign)
    }
}

/// Signs for a whole ordered sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Signing {
    pub signs: SignSequence,
    /// `max_k ||sum_{i<=k} eps_i z_{order(i)}||_inf`, in prescaled units.
    pub realized_bound: f64,
    /// Passes started, including the successful one.
    pub attempts: u32,
}

/// Signs `set` visited in `order` with a fresh balancer.
pub fn sign_sequence(set: &VectorSet, order: &Permutation, config: BalancerConfig) -> Result<Signing> {
    sign_sequence_in_pass(set, order, config, 0)
}

/// As [`sign_sequence`], drawing randomness from the stream of pass `pass`.
pub fn sign_sequence_in_pass(
    set: &VectorSet,
    order: &Permutation,
    config: BalancerConfig,
    pass: u64,
) -> Result<Signing> {
    config.validate()?;
    if order.len() != set.len() {
        return Err(Error::LengthMismatch {
            expected: set.len(),
            got: order.len(),
        });
    }
    let mut state = BalancerState::new(config, set.dim());
    state.begin_pass(pass);
    let max_attempts = match config.failure_policy {
        FailurePolicy::Abort => 1,
        FailurePolicy::RestartEpoch { max_retries } => max_retries.saturating_add(1),
    };
    'attempt: loop {
        let mut signs = SignSequence::default();
        let mut bound = 0.0_f64;
        for (step, &i) in order.as_slice().iter().enumerate() {
            match state.push(set.get(i)) {
                Ok(sign) => {
                    signs.push(sign);
                    bound = bound.max(norm_inf(state.running_sum()));
                }
                Err(WalkFailure) => {
                    if state.attempt() + 1 >= max_attempts {
                        return Err(Error::BalancerFailure {
                            step,
                            attempts: state.attempt() + 1,
                        });
                    }
                    state.restart();
                    continue 'attempt;
                }
            }
        }
        return Ok(Signing {
            signs,
            realized_bound: bound,
            attempts: state.attempt() + 1,
        });
    }
}

/// Squared l2 norm of the running sum never exceeds the summed squared
/// norms of what was pushed; exposed for diagnostics.
pub fn naive_energy_slack(sum: &[f64], pushed_energy: f64) -> f64 {
    pushed_energy - norm2_sq(sum)
}
