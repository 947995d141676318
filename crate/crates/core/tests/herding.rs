use grab_core::{
    adversarial_set, center, greedy_order, herding_objective, offline_herd, reorder_from_signs,
    sign_sequence, BalancerConfig, GreedyOptions, Norm, Permutation, Problem, VectorSet,
};
use rand::Rng;

fn uniform_set(n: usize, d: usize, seed: u64) -> VectorSet {
    let mut rng = grab_core::rng::substream(seed, 5, 5);
    VectorSet::from_flat(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..=p.len() {
            let mut q = p.clone();
            q.insert(slot, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force_min(set: &VectorSet, norm: Norm) -> f64 {
    permutations(set.len())
        .into_iter()
        .map(|p| herding_objective(set, &Permutation::new(p).unwrap(), norm).unwrap())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn four_vector_brute_force_value() {
    // centered already: (1,0), (-1,0), (0,1), (0,-1)
    let set = VectorSet::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
    assert_eq!(brute_force_min(&set, Norm::Linf), 1.0);
    assert_eq!(brute_force_min(&set, Norm::L2), 1.0);
    let greedy = greedy_order(&set, GreedyOptions::default());
    assert_eq!(herding_objective(&set, &greedy, Norm::L2).unwrap(), 1.0);
}

#[test]
fn greedy_never_beats_exhaustive_search() {
    for seed in 0..20 {
        let n = 3 + (seed as usize % 4);
        let set = uniform_set(n, 3, seed);
        let best = brute_force_min(&set, Norm::L2);
        let greedy = greedy_order(&set, GreedyOptions::default());
        let h = herding_objective(&set, &greedy, Norm::L2).unwrap();
        assert!(h >= best - 1e-12, "seed {seed}: greedy {h} < optimum {best}");
    }
}

#[test]
fn uncentered_greedy_grows_linearly_on_the_adversarial_set() {
    let h100 = herding_objective(
        &adversarial_set(100).unwrap(),
        &greedy_order(&adversarial_set(100).unwrap(), GreedyOptions { center: false }),
        Norm::L2,
    )
    .unwrap();
    let set = adversarial_set(400).unwrap();
    let h400 = herding_objective(
        &set,
        &greedy_order(&set, GreedyOptions { center: false }),
        Norm::L2,
    )
    .unwrap();
    assert!(h100 >= 25.0 && h400 >= 100.0);
    assert!(h400 / h100 >= 3.0);
    // the first half are all [1, 1]; centered they are [-1.5, 1.5] each
    let expected = 1.5 * 2f64.sqrt() * 50.0;
    assert!((h100 - expected).abs() < 1e-9, "{h100} vs {expected}");
}

#[test]
fn balance_reorder_drives_uniform_prefix_sums_down() {
    let set = uniform_set(400, 8, 42);
    let start = Permutation::random(400, &mut grab_core::rng::substream(1, 2, 3));
    let before = herding_objective(&set, &start, Norm::Linf).unwrap();
    let out = grab_core::offline_herd_from(&set, BalancerConfig::naive(), 8, start).unwrap();
    assert!(
        out.best_objective < before / 3.0,
        "{} vs {before}",
        out.best_objective
    );
}

#[test]
fn halving_holds_for_walk_on_centered_unit_sets() {
    for seed in 0..30 {
        let raw = center(&uniform_set(64, 4, seed));
        let set = raw.scaled(1.0 / raw.max_norm(Norm::L2));
        let order = Permutation::random(64, &mut grab_core::rng::substream(seed, 8, 8));
        let h = herding_objective(&set, &order, Norm::Linf).unwrap();
        let signing = sign_sequence(&set, &order, BalancerConfig::walk(12.0).with_seed(seed)).unwrap();
        let next = reorder_from_signs(&order, &signing.signs).unwrap();
        let new_h = herding_objective(&set, &next, Norm::Linf).unwrap();
        assert!(new_h <= (signing.realized_bound + h) / 2.0 + 1e-9);
    }
}

#[test]
fn offline_herd_history_is_reproducible() {
    let set = uniform_set(128, 6, 9);
    let cfg = BalancerConfig::walk(20.0).with_seed(4);
    let a = offline_herd(&set, cfg, 5).unwrap();
    let b = offline_herd(&set, cfg, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn isotropic_quadratic_varsigma_is_the_largest_deviation() {
    let points = uniform_set(25, 3, 3);
    let p = Problem::isotropic_quadratic(points.clone(), 0.0).unwrap();
    let mean = points.mean();
    let expected = points
        .iter()
        .map(|x| {
            x.iter()
                .zip(mean.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    let w = grab_core::DenseVector::new(vec![0.4, -1.0, 2.0]).unwrap();
    let got = p.estimate_varsigma(std::slice::from_ref(&w)).unwrap();
    assert!((got - expected).abs() < 1e-12);
    // more samples can only raise the estimate
    let more = p
        .estimate_varsigma(&[w, grab_core::DenseVector::zeros(3)])
        .unwrap();
    assert!(more >= got);
}
