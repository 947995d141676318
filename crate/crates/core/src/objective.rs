//! Centering, prefix sums and the herding objective.
//!
//! For a set `z_0..z_{n-1}` with mean `m` and an order `perm`, the herding
//! objective is
//!
//! ```text
//! max_{k=1..n} || sum_{t<k} (z_{perm(t)} - m) ||
//! ```
//!
//! measured in either the l2 or the l-infinity norm.

use crate::error::{Error, Result};
use crate::vector::{axpy, DenseVector, Norm, Permutation, VectorSet};

/// Absolute tolerance for "sums to zero" checks on an `n x d` set.
pub fn zero_sum_tolerance(n: usize, d: usize) -> f64 {
    (n * d) as f64 * 1e-12
}

/// Subtracts the mean from every vector.
pub fn center(set: &VectorSet) -> VectorSet {
    let mean = set.mean();
    let neg: Vec<f64> = mean.iter().map(|x| -x).collect();
    set.translated(&neg).expect("centering a finite set stays finite")
}

fn check_perm(set: &VectorSet, perm: &Permutation) -> Result<()> {
    if perm.len() != set.len() {
        return Err(Error::LengthMismatch {
            expected: set.len(),
            got: perm.len(),
        });
    }
    Ok(())
}

/// Partial sums `out[k] = sum_{t<=k} set[perm(t)]`. Does not center.
pub fn prefix_sums(set: &VectorSet, perm: &Permutation) -> Result<Vec<DenseVector>> {
    check_perm(set, perm)?;
    let mut acc = vec![0.0; set.dim()];
    let mut out = Vec::with_capacity(set.len());
    for &i in perm.as_slice() {
        axpy(&mut acc, 1.0, set.get(i));
        out.push(DenseVector::new(acc.clone())?);
    }
    Ok(out)
}

/// Norm of every centered prefix sum, `k = 1..n`, in visit order.
pub fn prefix_norms(set: &VectorSet, perm: &Permutation, norm: Norm) -> Result<Vec<f64>> {
    check_perm(set, perm)?;
    let mean = set.mean();
    let mut acc = vec![0.0; set.dim()];
    let mut out = Vec::with_capacity(set.len());
    for &i in perm.as_slice() {
        axpy(&mut acc, 1.0, set.get(i));
        axpy(&mut acc, -1.0, &mean);
        out.push(norm.of(&acc));
    }
    Ok(out)
}

/// Largest centered prefix-sum norm of `perm` over `set`.
pub fn herding_objective(set: &VectorSet, perm: &Permutation, norm: Norm) -> Result<f64> {
    Ok(prefix_norms(set, perm, norm)?.into_iter().fold(0.0, f64::max))
}

/// Largest prefix-sum norm without centering; used where a set is already
/// centered or where raw sums are wanted.
pub fn raw_prefix_max(set: &VectorSet, perm: &Permutation, norm: Norm) -> Result<f64> {
    check_perm(set, perm)?;
    let mut acc = vec![0.0; set.dim()];
    let mut best = 0.0_f64;
    for &i in perm.as_slice() {
        axpy(&mut acc, 1.0, set.get(i));
        best = best.max(norm.of(&acc));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn set(rows: &[&[f64]]) -> VectorSet {
        VectorSet::from_rows(rows).unwrap()
    }

    #[test]
    fn center_two_points() {
        let c = center(&set(&[&[1.0, 1.0], &[3.0, 3.0]]));
        assert_eq!(c.get(0), &[-1.0, -1.0]);
        assert_eq!(c.get(1), &[1.0, 1.0]);
    }

    #[test]
    fn center_single_vector_is_zero() {
        let c = center(&set(&[&[5.0, -2.0]]));
        assert_eq!(c.get(0), &[0.0, 0.0]);
    }

    #[test]
    fn center_adversarial_layout() {
        let n = 10;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                if i < n / 2 {
                    vec![1.0, 1.0]
                } else {
                    vec![4.0, -2.0]
                }
            })
            .collect();
        let c = center(&VectorSet::from_rows(&rows).unwrap());
        // mean is [2.5, -0.5]
        for i in 0..n {
            let want = if i < n / 2 { [-1.5, 1.5] } else { [1.5, -1.5] };
            assert!((c.get(i)[0] - want[0]).abs() < 1e-12);
            assert!((c.get(i)[1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn prefix_sums_examples() {
        let s = set(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let p = prefix_sums(&s, &Permutation::identity(2)).unwrap();
        assert_eq!(&*p[0], &[1.0, 0.0]);
        assert_eq!(&*p[1], &[0.0, 0.0]);

        let s = set(&[&[1.0, 1.0], &[2.0, 0.0], &[-3.0, -1.0]]);
        let p = prefix_sums(&s, &Permutation::new(vec![2, 0, 1]).unwrap()).unwrap();
        assert_eq!(&*p[0], &[-3.0, -1.0]);
        assert_eq!(&*p[1], &[-2.0, 0.0]);
        assert_eq!(&*p[2], &[0.0, 0.0]);
    }

    #[test]
    fn prefix_sums_length_mismatch() {
        let s = set(&[&[1.0], &[2.0]]);
        assert!(matches!(
            prefix_sums(&s, &Permutation::identity(3)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn objective_examples() {
        let s = set(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let h = herding_objective(&s, &Permutation::identity(2), Norm::Linf).unwrap();
        assert_eq!(h, 1.0);

        let s = set(&[&[0.3, 0.7], &[0.3, 0.7], &[0.3, 0.7]]);
        for norm in [Norm::L2, Norm::Linf] {
            let h = herding_objective(&s, &Permutation::new(vec![1, 2, 0]).unwrap(), norm).unwrap();
            assert!(h.abs() < 1e-15);
        }
    }

    fn random_set(n: usize, d: usize, seed: u64) -> VectorSet {
        let mut rng = substream(seed, 0, 0);
        let data = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        VectorSet::from_flat(n, d, data).unwrap()
    }

    proptest! {
        #[test]
        fn centered_prefix_ends_at_zero(n in 1usize..60, d in 1usize..8, seed in any::<u64>()) {
            let s = center(&random_set(n, d, seed));
            let sums = prefix_sums(&s, &Permutation::identity(n)).unwrap();
            let last = sums.last().unwrap();
            prop_assert!(last.norm(Norm::Linf) <= zero_sum_tolerance(n, d));
        }

        #[test]
        fn objective_is_translation_invariant(
            n in 1usize..40, d in 1usize..6, seed in any::<u64>(), shift in -50.0f64..50.0
        ) {
            let s = random_set(n, d, seed);
            let offset = vec![shift; d];
            let mut rng = substream(seed, 1, 0);
            let p = Permutation::random(n, &mut rng);
            for norm in [Norm::L2, Norm::Linf] {
                let a = herding_objective(&s, &p, norm).unwrap();
                let b = herding_objective(&s.translated(&offset).unwrap(), &p, norm).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            }
        }
    }
}
