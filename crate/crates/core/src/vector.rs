//! Value types shared by every ordering routine: dense vectors, vector sets,
//! permutations and sign sequences.
//!
//! Indices are 0-based throughout. All types are plain values and can be
//! shared read-only across threads.

use std::ops::Deref;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which norm to measure prefix sums with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L2,
    Linf,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => norm2(v),
            Norm::Linf => norm_inf(v),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    norm2_sq(v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `y += a * x`
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// A finite real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        check_finite(&entries)?;
        Ok(Self(entries))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self, norm: Norm) -> f64 {
        norm.of(&self.0)
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().for_each(|x| *x = 0.0);
    }
}

impl AsRef<[f64]> for DenseVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `n >= 1` vectors of a common dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl VectorSet {
    pub fn from_flat(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySet);
        }
        if d == 0 {
            return Err(Error::InvalidConfig(
                "vectors need at least one coordinate".into(),
            ));
        }
        if data.len() != n * d {
            return Err(Error::LengthMismatch {
                expected: n * d,
                got: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptySet)?;
        let d = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(rows.len(), d, data)
    }

    pub fn from_vectors(vectors: &[DenseVector]) -> Result<Self> {
        Self::from_rows(vectors)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false; kept for the `len`/`is_empty` convention.
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> DenseVector {
        let mut mean = vec![0.0; self.d];
        for row in self.iter() {
            axpy(&mut mean, 1.0, row);
        }
        let inv = 1.0 / self.n as f64;
        mean.iter_mut().for_each(|x| *x *= inv);
        DenseVector(mean)
    }

    pub fn max_norm(&self, norm: Norm) -> f64 {
        self.iter().map(|v| norm.of(v)).fold(0.0, f64::max)
    }

    /// Vectors `range.start..range.end` as a new set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.n || range.start >= range.end {
            return Err(Error::IndexOutOfRange {
                index: range.end,
                len: self.n,
            });
        }
        let data = self.data[range.start * self.d..range.end * self.d].to_vec();
        Self::from_flat(range.len(), self.d, data)
    }

    /// Every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            d: self.d,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// The set with `offset` added to every vector.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: offset.len(),
            });
        }
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.d) {
            axpy(row, 1.0, offset);
        }
        Self::from_flat(self.n, self.d, data)
    }
}

/// A bijection on `{0, .., n-1}`: position `t` visits example `map[t]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &i in &map {
            if i >= n {
                return Err(Error::InvalidPermutation(format!(
                    "index {i} out of range for length {n}"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!("index {i} repeated")));
            }
        }
        Ok(Self(map))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(rng);
        Self(map)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Example visited at position `t`.
    pub fn at(&self, t: usize) -> usize {
        self.0[t]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (t, &i) in self.0.iter().enumerate() {
            inv[i] = t;
        }
        Self(inv)
    }

    /// `self` after `first`: position `t` maps to `first[self[t]]`.
    pub fn compose(&self, first: &Permutation) -> Result<Self> {
        if first.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: first.len(),
            });
        }
        Ok(Self(self.0.iter().map(|&t| first.0[t]).collect()))
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(map: Vec<usize>) -> Result<Self> {
        Self::new(map)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Signs produced for a sequence of vectors, in visit order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignSequence(Vec<Sign>);

impl SignSequence {
    pub fn new(signs: Vec<Sign>) -> Self {
        Self(signs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Sign] {
        &self.0
    }

    pub fn push(&mut self, s: Sign) {
        self.0.push(s);
    }
}

impl FromIterator<Sign> for SignSequence {
    fn from_iter<I: IntoIterator<Item = Sign>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}
