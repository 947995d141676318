//! Permutation construction.
//!
//! * [`greedy_order`]: pick, one at a time, the unused vector that keeps the
//!   running (centered) sum smallest in l2.
//! * [`reorder_from_signs`]: positives in visit order, then negatives in
//!   reverse visit order. If the old order has herding objective `H` and the
//!   signs have balancing bound `A`, the new order's objective is at most
//!   `(A + H) / 2`.
//! * [`offline_herd`]: repeat balance-then-reorder for a number of rounds.

use crate::balancing::{sign_sequence_in_pass, BalancerConfig};
use crate::error::{Error, Result};
use crate::objective::{center, herding_objective};
use crate::vector::{axpy, Norm, Permutation, Sign, SignSequence, VectorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyOptions {
    /// Subtract the mean before selecting. Turning this off reproduces the
    /// raw-sum selection used by the adversarial example.
    pub center: bool,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self { center: true }
    }
}

/// Greedy herding order. Ties go to the lowest index.
pub fn greedy_order(set: &VectorSet, opts: GreedyOptions) -> Permutation {
    greedy_order_counted(set, opts).0
}

/// [`greedy_order`] plus the number of vector-element operations it spent.
pub fn greedy_order_counted(set: &VectorSet, opts: GreedyOptions) -> (Permutation, u64) {
    let n = set.len();
    let d = set.dim();
    let mut ops = 0u64;
    let centered;
    let work = if opts.center {
        centered = center(set);
        ops += 2 * (n * d) as u64;
        &centered
    } else {
        set
    };

    let mut used = vec![false; n];
    let mut sum = vec![0.0; d];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = usize::MAX;
        let mut best_norm = f64::INFINITY;
        for j in (0..n).filter(|&j| !used[j]) {
            let z = work.get(j);
            let norm: f64 = sum.iter().zip(z).map(|(s, x)| (s + x) * (s + x)).sum();
            ops += d as u64;
            if norm < best_norm {
                best_norm = norm;
                best = j;
            }
        }
        used[best] = true;
        axpy(&mut sum, 1.0, work.get(best));
        ops += d as u64;
        order.push(best);
    }
    (
        Permutation::new(order).expect("greedy visits every index once"),
        ops,
    )
}

/// `n / 2` copies each of `[1, 1]` and `[4, -2]`, interleaved.
pub fn adversarial_set(n: usize) -> Result<VectorSet> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::OddCount(n));
    }
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|i| if i % 2 == 0 { [1.0, 1.0] } else { [4.0, -2.0] })
        .collect();
    VectorSet::from_rows(&rows)
}

/// Positives of `order` in visit order, then negatives in reverse.
pub fn reorder_from_signs(order: &Permutation, signs: &SignSequence) -> Result<Permutation> {
    if order.len() != signs.len() {
        return Err(Error::LengthMismatch {
            expected: order.len(),
            got: signs.len(),
        });
    }
    let mut positive = Vec::with_capacity(order.len());
    let mut negative = Vec::new();
    for (&i, &s) in order.as_slice().iter().zip(signs.as_slice()) {
        match s {
            Sign::Plus => positive.push(i),
            Sign::Minus => negative.push(i),
        }
    }
    positive.extend(negative.into_iter().rev());
    Permutation::new(positive)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HerdRound {
    /// Order produced by this round.
    pub order: Permutation,
    /// l-infinity herding objective of `order`.
    pub objective: f64,
    /// Realized balancing bound of the signs, in the set's own units.
    pub balance_bound: f64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HerdOutcome {
    pub start: Permutation,
    pub start_objective: f64,
    pub rounds: Vec<HerdRound>,
    /// Lowest-objective order seen, the start included.
    pub best: Permutation,
    pub best_objective: f64,
}

impl HerdOutcome {
    /// Objective after each round.
    pub fn history(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.objective).collect()
    }

    pub fn last(&self) -> &Permutation {
        self.rounds.last().map_or(&self.start, |r| &r.order)
    }
}

/// Balance-then-reorder from the identity order for `rounds` rounds.
pub fn offline_herd(set: &VectorSet, config: BalancerConfig, rounds: usize) -> Result<HerdOutcome> {
    offline_herd_from(set, config, rounds, Permutation::identity(set.len()))
}

/// Balance-then-reorder starting from `start`.
///
/// The set is centered first. For the walk balancer the centered vectors are
/// divided by their largest l2 norm before signing, so every signed vector
/// has norm at most 1; the naive balancer signs them unscaled. Round `r`
/// (1-based) draws randomness from balancer pass `r`. Objectives and bounds
/// are reported in the set's own scale.
pub fn offline_herd_from(
    set: &VectorSet,
    config: BalancerConfig,
    rounds: usize,
    start: Permutation,
) -> Result<HerdOutcome> {
    if rounds == 0 {
        return Err(Error::InvalidConfig(
            "offline herding needs at least one round".into(),
        ));
    }
    if start.len() != set.len() {
        return Err(Error::LengthMismatch {
            expected: set.len(),
            got: start.len(),
        });
    }
    let centered = center(set);
    let mut config = config;
    config.prescale = None;
    let scale = if config.is_walk() {
        centered.max_norm(Norm::L2)
    } else {
        0.0
    };
    let signing_set = if scale > 0.0 {
        centered.scaled(1.0 / scale)
    } else {
        centered.clone()
    };
    let unit = if scale > 0.0 { scale } else { 1.0 };

    let start_objective = herding_objective(&centered, &start, Norm::Linf)?;
    let mut best = start.clone();
    let mut best_objective = start_objective;
    let mut current = start.clone();
    let mut history = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let signing = sign_sequence_in_pass(&signing_set, &current, config, round as u64)?;
        let next = reorder_from_signs(&current, &signing.signs)?;
        let objective = herding_objective(&centered, &next, Norm::Linf)?;
        if objective < best_objective {
            best_objective = objective;
            best = next.clone();
        }
        history.push(HerdRound {
            order: next.clone(),
            objective,
            balance_bound: signing.realized_bound * unit,
            attempts: signing.attempts,
        });
        current = next;
    }
    Ok(HerdOutcome {
        start,
        start_objective,
        rounds: history,
        best,
        best_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balancing::sign_sequence;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn signs(s: &str) -> SignSequence {
        s.chars()
            .map(|c| if c == '+' { Sign::Plus } else { Sign::Minus })
            .collect()
    }

    #[test]
    fn reorder_examples() {
        let order = Permutation::new(vec![0, 1, 2, 3]).unwrap();
        assert_eq!(reorder_from_signs(&order, &signs("++++")).unwrap(), order);
        assert_eq!(
            reorder_from_signs(&order, &signs("----")).unwrap(),
            order.reversed()
        );
        // (1,2,3,4) with (+,-,+,-) becomes (1,3,4,2)
        assert_eq!(
            reorder_from_signs(&order, &signs("+-+-")).unwrap().as_slice(),
            &[0, 2, 3, 1]
        );
        assert!(reorder_from_signs(&order, &signs("+-")).is_err());
    }

    #[test]
    fn greedy_tie_takes_lowest_index() {
        let set = VectorSet::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(
            greedy_order(&set, GreedyOptions::default()),
            Permutation::identity(2)
        );
    }

    #[test]
    fn adversarial_layout() {
        let set = adversarial_set(4).unwrap();
        assert_eq!(set.get(0), &[1.0, 1.0]);
        assert_eq!(set.get(1), &[4.0, -2.0]);
        assert_eq!(set.get(2), &[1.0, 1.0]);
        assert_eq!(set.get(3), &[4.0, -2.0]);
        assert!(matches!(adversarial_set(5), Err(Error::OddCount(5))));
        assert!(adversarial_set(0).is_err());
    }

    #[test]
    fn uncentered_greedy_takes_all_ones_first() {
        let n = 100;
        let set = adversarial_set(n).unwrap();
        let p = greedy_order(&set, GreedyOptions { center: false });
        for t in 0..n / 2 {
            assert_eq!(set.get(p.at(t)), &[1.0, 1.0], "step {t}");
        }
        let h = herding_objective(&set, &p, Norm::L2).unwrap();
        assert!(h >= 25.0, "{h}");
    }

    #[test]
    fn greedy_cost_is_quadratic() {
        let set = adversarial_set(10).unwrap();
        let (_, ops) = greedy_order_counted(&set, GreedyOptions { center: false });
        // 2 * (10 + 9 + ... + 1) candidate norms + 2 * 10 sum updates
        assert_eq!(ops, 2 * 55 + 2 * 10);
    }

    #[test]
    fn offline_herd_on_constant_set() {
        let set = VectorSet::from_rows(&[[0.5, 0.5]; 6]).unwrap();
        for config in [BalancerConfig::naive(), BalancerConfig::walk(10.0)] {
            let out = offline_herd(&set, config, 4).unwrap();
            assert!(out.history().iter().all(|&h| h == 0.0));
        }
    }

    #[test]
    fn offline_herd_rejects_zero_rounds() {
        let set = VectorSet::from_rows(&[[1.0]]).unwrap();
        assert!(offline_herd(&set, BalancerConfig::naive(), 0).is_err());
    }

    fn random_set(n: usize, d: usize, seed: u64) -> VectorSet {
        let mut rng = substream(seed, 0, 1);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        VectorSet::from_flat(n, d, data).unwrap()
    }

    proptest! {
        #[test]
        fn reorder_is_bijection(n in 1usize..100, seed in any::<u64>()) {
            let mut rng = substream(seed, 0, 0);
            let order = Permutation::random(n, &mut rng);
            let s: SignSequence = (0..n)
                .map(|_| if rng.random::<bool>() { Sign::Plus } else { Sign::Minus })
                .collect();
            let out = reorder_from_signs(&order, &s).unwrap();
            prop_assert!(Permutation::new(out.into_vec()).is_ok());
        }

        #[test]
        fn one_round_halves(n in 2usize..80, d in 1usize..6, seed in any::<u64>(), walk in any::<bool>()) {
            let raw = center(&random_set(n, d, seed));
            let set = raw.scaled(1.0 / raw.max_norm(Norm::L2).max(1e-300));
            let mut rng = substream(seed, 9, 9);
            let order = Permutation::random(n, &mut rng);
            let h = herding_objective(&set, &order, Norm::Linf).unwrap();
            let cfg = if walk { BalancerConfig::walk(8.0).with_seed(seed) } else { BalancerConfig::naive() };
            let signing = sign_sequence(&set, &order, cfg).unwrap();
            let next = reorder_from_signs(&order, &signing.signs).unwrap();
            let new_h = herding_objective(&set, &next, Norm::Linf).unwrap();
            prop_assert!(new_h <= (signing.realized_bound + h) / 2.0 + 1e-9);
        }

        #[test]
        fn history_non_negative_and_best_tracks_min(n in 2usize..60, seed in any::<u64>()) {
            let set = random_set(n, 3, seed);
            let out = offline_herd(&set, BalancerConfig::naive(), 6).unwrap();
            let hist = out.history();
            prop_assert!(hist.iter().all(|&h| h >= 0.0));
            let min = hist.iter().copied().fold(out.start_objective, f64::min);
            prop_assert_eq!(out.best_objective, min);
            let check = herding_objective(&set, &out.best, Norm::Linf).unwrap();
            prop_assert!((check - out.best_objective).abs() < 1e-9);
        }
    }
}
