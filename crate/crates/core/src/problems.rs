//! Synthetic finite-sum objectives with exact per-example gradients.
//!
//! Every problem is `f(w) = (1/n) sum_i f_i(w)` where each per-example loss
//! carries the full ridge term: `f_i(w) = loss_i(w) + (l2_reg / 2) ||w||^2`.
//! Averaging the `f_i` therefore adds `(l2_reg / 2) ||w||^2` to `f` once.
//!
//! Generators are seeded and deterministic:
//!
//! * quadratic: `B_i = I + (0.5 / sqrt(d)) G_i`, `y_i ~ N(0, I)`, with `G_i`
//!   standard normal `d x d`; `f_i(w) = 0.5 ||B_i w - y_i||^2`.
//! * logistic: features `x_i ~ N(0, I)`, a teacher `w* ~ N(0, I / d)` and
//!   labels `+1` with probability `sigmoid(4 <w*, x_i>)`, else `-1`.
//! * MLP: features `x_i ~ N(0, I)`, targets from a random teacher network of
//!   the same shape plus `N(0, 0.01)` noise.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{label, substream, StreamRng};
use crate::vector::{axpy, dot, norm2, DenseVector, VectorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    QuadraticSum,
    LogisticRegression,
    TinyMlp,
}

/// One hidden tanh layer, linear output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
}

impl Default for MlpShape {
    fn default() -> Self {
        Self {
            d_in: 8,
            hidden: 8,
            d_out: 1,
        }
    }
}

impl MlpShape {
    /// Parameter count: `W1`, `b1`, `W2`, `b2` packed in that order.
    pub fn num_params(&self) -> usize {
        self.hidden * self.d_in + self.hidden + self.d_out * self.hidden + self.d_out
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.d_in;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.d_out * self.hidden;
        (b1, w2, b2)
    }
}

#[derive(Debug, Clone)]
enum Model {
    Quadratic {
        /// `None` means every `B_i` is the identity.
        mats: Option<Vec<DMatrix<f64>>>,
        targets: VectorSet,
    },
    Logistic {
        features: VectorSet,
        /// Each label is -1 or +1.
        labels: Vec<f64>,
    },
    Mlp {
        shape: MlpShape,
        features: VectorSet,
        targets: VectorSet,
    },
}

#[derive(Debug, Clone)]
pub struct Problem {
    n: usize,
    d: usize,
    l2_reg: f64,
    model: Model,
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vec(rng: &mut StreamRng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * normal(rng)).collect()
}

fn check_reg(l2_reg: f64) -> Result<()> {
    if !(l2_reg.is_finite() && l2_reg >= 0.0) {
        return Err(Error::InvalidConfig(format!("l2_reg must be >= 0, got {l2_reg}")));
    }
    Ok(())
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl Problem {
    /// `f_i(w) = 0.5 ||w - x_i||^2`.
    pub fn isotropic_quadratic(points: VectorSet, l2_reg: f64) -> Result<Self> {
        check_reg(l2_reg)?;
        Ok(Self {
            n: points.len(),
            d: points.dim(),
            l2_reg,
            model: Model::Quadratic {
                mats: None,
                targets: points,
            },
        })
    }

    /// `f_i(w) = 0.5 ||B_i w - y_i||^2`, every `B_i` being `m x d`.
    pub fn quadratic(mats: Vec<DMatrix<f64>>, targets: VectorSet, l2_reg: f64) -> Result<Self> {
        check_reg(l2_reg)?;
        if mats.len() != targets.len() {
            return Err(Error::LengthMismatch {
                expected: targets.len(),
                got: mats.len(),
            });
        }
        let d = mats[0].ncols();
        for b in &mats {
            if b.nrows() != targets.dim() || b.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: b.ncols(),
                });
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { index: 0 });
            }
        }
        Ok(Self {
            n: targets.len(),
            d,
            l2_reg,
            model: Model::Quadratic {
                mats: Some(mats),
                targets,
            },
        })
    }

    pub fn random_quadratic(n: usize, d: usize, l2_reg: f64, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptySet);
        }
        let mut rng = substream(seed, label::DATA, 1);
        let s = 0.5 / (d as f64).sqrt();
        let mats = (0..n)
            .map(|_| {
                let g = gaussian_vec(&mut rng, d * d, s);
                DMatrix::from_row_slice(d, d, &g) + DMatrix::identity(d, d)
            })
            .collect();
        let targets = VectorSet::from_flat(n, d, gaussian_vec(&mut rng, n * d, 1.0))?;
        Self::quadratic(mats, targets, l2_reg)
    }

    /// Labels must be -1 or +1.
    pub fn logistic(features: VectorSet, labels: Vec<f64>, l2_reg: f64) -> Result<Self> {
        check_reg(l2_reg)?;
        if labels.len() != features.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Parse(format!(
                "label {} at row {bad} is not -1/+1",
                labels[bad]
            )));
        }
        Ok(Self {
            n: features.len(),
            d: features.dim(),
            l2_reg,
            model: Model::Logistic { features, labels },
        })
    }

    pub fn random_logistic(n: usize, d: usize, l2_reg: f64, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptySet);
        }
        let mut rng = substream(seed, label::DATA, 2);
        let teacher = gaussian_vec(&mut rng, d, 1.0 / (d as f64).sqrt());
        let features = VectorSet::from_flat(n, d, gaussian_vec(&mut rng, n * d, 1.0))?;
        let labels = features
            .iter()
            .map(|x| {
                let p = sigmoid(4.0 * dot(&teacher, x));
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Self::logistic(features, labels, l2_reg)
    }

    /// Logistic regression from a CSV with a header row, numeric feature
    /// columns and a final `label` column holding 0/1 or -1/+1.
    pub fn logistic_from_csv(path: impl AsRef<Path>, l2_reg: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.iter().next_back() != Some("label") {
            return Err(Error::Parse("last CSV column must be named `label`".into()));
        }
        let d = headers.len() - 1;
        if d == 0 {
            return Err(Error::Parse("dataset has no feature columns".into()));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            for (col, field) in record.iter().enumerate() {
                let x: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {row}, column {col}: `{field}`")))?;
                if col < d {
                    data.push(x);
                } else {
                    labels.push(if x == 0.0 { -1.0 } else { x });
                }
            }
        }
        let n = labels.len();
        Self::logistic(VectorSet::from_flat(n, d, data)?, labels, l2_reg)
    }

    pub fn mlp(shape: MlpShape, features: VectorSet, targets: VectorSet, l2_reg: f64) -> Result<Self> {
        check_reg(l2_reg)?;
        if features.dim() != shape.d_in {
            return Err(Error::DimensionMismatch {
                expected: shape.d_in,
                got: features.dim(),
            });
        }
        if targets.dim() != shape.d_out {
            return Err(Error::DimensionMismatch {
                expected: shape.d_out,
                got: targets.dim(),
            });
        }
        if targets.len() != features.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                got: targets.len(),
            });
        }
        Ok(Self {
            n: features.len(),
            d: shape.num_params(),
            l2_reg,
            model: Model::Mlp {
                shape,
                features,
                targets,
            },
        })
    }

    pub fn random_mlp(n: usize, shape: MlpShape, l2_reg: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySet);
        }
        let mut rng = substream(seed, label::DATA, 3);
        let teacher = mlp_init(shape, &mut rng, 1.0);
        let features = VectorSet::from_flat(n, shape.d_in, gaussian_vec(&mut rng, n * shape.d_in, 1.0))?;
        let mut targets = Vec::with_capacity(n * shape.d_out);
        let mut hid = vec![0.0; shape.hidden];
        let mut out = vec![0.0; shape.d_out];
        for x in features.iter() {
            mlp_forward(shape, &teacher, x, &mut hid, &mut out);
            for o in &out {
                targets.push(o + 0.1 * normal(&mut rng));
            }
        }
        let targets = VectorSet::from_flat(n, shape.d_out, targets)?;
        Self::mlp(shape, features, targets, l2_reg)
    }

    /// Splits off the last `holdout` examples as a validation problem with the
    /// same regularization.
    pub fn split_holdout(&self, holdout: usize) -> Result<(Problem, Problem)> {
        if holdout == 0 || holdout >= self.n {
            return Err(Error::InvalidConfig(format!(
                "holdout must lie in 1..{}, got {holdout}",
                self.n
            )));
        }
        let cut = self.n - holdout;
        let part = |range: std::ops::Range<usize>| -> Result<Problem> {
            let model = match &self.model {
                Model::Quadratic { mats, targets } => Model::Quadratic {
                    mats: mats.as_ref().map(|m| m[range.clone()].to_vec()),
                    targets: targets.slice(range.clone())?,
                },
                Model::Logistic { features, labels } => Model::Logistic {
                    features: features.slice(range.clone())?,
                    labels: labels[range.clone()].to_vec(),
                },
                Model::Mlp {
                    shape,
                    features,
                    targets,
                } => Model::Mlp {
                    shape: *shape,
                    features: features.slice(range.clone())?,
                    targets: targets.slice(range.clone())?,
                },
            };
            Ok(Problem {
                n: range.len(),
                d: self.d,
                l2_reg: self.l2_reg,
                model,
            })
        };
        Ok((part(0..cut)?, part(cut..self.n)?))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn l2_reg(&self) -> f64 {
        self.l2_reg
    }

    pub fn kind(&self) -> ProblemKind {
        match self.model {
            Model::Quadratic { .. } => ProblemKind::QuadraticSum,
            Model::Logistic { .. } => ProblemKind::LogisticRegression,
            Model::Mlp { .. } => ProblemKind::TinyMlp,
        }
    }

    /// Starting weights: zero for the convex kinds, a seeded draw for the MLP
    /// (zero is a saddle there).
    pub fn initial_point(&self, seed: u64) -> DenseVector {
        match &self.model {
            Model::Mlp { shape, .. } => {
                let mut rng = substream(seed, label::DATA, 4);
                DenseVector::new(mlp_init(*shape, &mut rng, 1.0)).expect("finite init")
            }
            _ => DenseVector::zeros(self.d),
        }
    }

    fn check(&self, w: &[f64], i: usize) -> Result<()> {
        if w.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: w.len(),
            });
        }
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n,
            });
        }
        Ok(())
    }

    pub fn loss_example(&self, w: &[f64], i: usize) -> Result<f64> {
        self.check(w, i)?;
        Ok(self.loss_unchecked(w, i))
    }

    pub fn grad_example(&self, w: &[f64], i: usize) -> Result<DenseVector> {
        self.check(w, i)?;
        let mut g = vec![0.0; self.d];
        self.grad_into_unchecked(w, i, &mut g);
        DenseVector::new(g)
    }

    /// Writes example `i`'s gradient into `out` (overwriting it).
    pub fn grad_example_into(&self, w: &[f64], i: usize, out: &mut [f64]) -> Result<()> {
        self.check(w, i)?;
        if out.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: out.len(),
            });
        }
        self.grad_into_unchecked(w, i, out);
        Ok(())
    }

    pub fn full_loss(&self, w: &[f64]) -> Result<f64> {
        self.check(w, 0)?;
        let total: f64 = (0..self.n).map(|i| self.loss_unchecked(w, i)).sum();
        Ok(total / self.n as f64)
    }

    pub fn full_grad(&self, w: &[f64]) -> Result<DenseVector> {
        self.check(w, 0)?;
        let mut acc = vec![0.0; self.d];
        let mut g = vec![0.0; self.d];
        for i in 0..self.n {
            self.grad_into_unchecked(w, i, &mut g);
            axpy(&mut acc, 1.0, &g);
        }
        let inv = 1.0 / self.n as f64;
        acc.iter_mut().for_each(|x| *x *= inv);
        DenseVector::new(acc)
    }

    /// Closed-form minimizer of a quadratic problem:
    /// `((1/n) sum B_i^T B_i + l2_reg I) w = (1/n) sum B_i^T y_i`.
    pub fn minimizer(&self) -> Option<DenseVector> {
        let Model::Quadratic { mats, targets } = &self.model else {
            return None;
        };
        let d = self.d;
        let inv = 1.0 / self.n as f64;
        let mut lhs = DMatrix::<f64>::identity(d, d) * self.l2_reg;
        let mut rhs = DVector::<f64>::zeros(d);
        for i in 0..self.n {
            let y = DVector::from_column_slice(targets.get(i));
            match mats {
                Some(mats) => {
                    lhs += mats[i].transpose() * &mats[i] * inv;
                    rhs += mats[i].transpose() * y * inv;
                }
                None => {
                    lhs += DMatrix::<f64>::identity(d, d) * inv;
                    rhs += y * inv;
                }
            }
        }
        let sol = lhs.lu().solve(&rhs)?;
        DenseVector::new(sol.as_slice().to_vec()).ok()
    }

    /// `max_{w, j} ||grad_j(w) - grad(w)||_2` over the sampled points: a lower
    /// bound on the gradient-error constant.
    pub fn estimate_varsigma(&self, samples: &[DenseVector]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("need at least one sample point".into()));
        }
        let mut best = 0.0_f64;
        let mut g = vec![0.0; self.d];
        for w in samples {
            let full = self.full_grad(w)?;
            for j in 0..self.n {
                self.grad_into_unchecked(w, j, &mut g);
                axpy(&mut g, -1.0, &full);
                best = best.max(norm2(&g));
            }
        }
        Ok(best)
    }

    /// Per-example gradients at `w`, one row per example.
    pub fn gradient_set(&self, w: &[f64]) -> Result<VectorSet> {
        self.check(w, 0)?;
        let mut data = vec![0.0; self.n * self.d];
        for (i, row) in data.chunks_exact_mut(self.d).enumerate() {
            self.grad_into_unchecked(w, i, row);
        }
        VectorSet::from_flat(self.n, self.d, data)
    }

    fn ridge(&self, w: &[f64]) -> f64 {
        0.5 * self.l2_reg * dot(w, w)
    }

    fn loss_unchecked(&self, w: &[f64], i: usize) -> f64 {
        let data_loss = match &self.model {
            Model::Quadratic { mats, targets } => {
                let y = targets.get(i);
                match mats {
                    Some(mats) => {
                        let r = &mats[i] * DVector::from_column_slice(w) - DVector::from_column_slice(y);
                        0.5 * r.norm_squared()
                    }
                    None => 0.5 * w.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
                }
            }
            Model::Logistic { features, labels } => softplus(-labels[i] * dot(w, features.get(i))),
            Model::Mlp {
                shape,
                features,
                targets,
            } => {
                let mut hid = vec![0.0; shape.hidden];
                let mut out = vec![0.0; shape.d_out];
                mlp_forward(*shape, w, features.get(i), &mut hid, &mut out);
                0.5 * out
                    .iter()
                    .zip(targets.get(i))
                    .map(|(o, y)| (o - y) * (o - y))
                    .sum::<f64>()
            }
        };
        data_loss + self.ridge(w)
    }

    fn grad_into_unchecked(&self, w: &[f64], i: usize, out: &mut [f64]) {
        match &self.model {
            Model::Quadratic { mats, targets } => {
                let y = targets.get(i);
                match mats {
                    Some(mats) => {
                        let b = &mats[i];
                        let r = b * DVector::from_column_slice(w) - DVector::from_column_slice(y);
                        let g = b.tr_mul(&r);
                        out.copy_from_slice(g.as_slice());
                    }
                    None => {
                        for ((o, a), b) in out.iter_mut().zip(w).zip(y) {
                            *o = a - b;
                        }
                    }
                }
            }
            Model::Logistic { features, labels } => {
                let x = features.get(i);
                let y = labels[i];
                let coef = -y * sigmoid(-y * dot(w, x));
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = coef * xi;
                }
            }
            Model::Mlp {
                shape,
                features,
                targets,
            } => mlp_backward(*shape, w, features.get(i), targets.get(i), out),
        }
        if self.l2_reg != 0.0 {
            axpy(out, self.l2_reg, w);
        }
    }
}

/// Fan-in scaled normal initialization, biases zero.
fn mlp_init(shape: MlpShape, rng: &mut StreamRng, gain: f64) -> Vec<f64> {
    let (b1, w2, b2) = shape.offsets();
    let mut p = vec![0.0; shape.num_params()];
    let s1 = gain / (shape.d_in as f64).sqrt();
    let s2 = gain / (shape.hidden as f64).sqrt();
    for x in &mut p[..b1] {
        *x = s1 * normal(rng);
    }
    for x in &mut p[w2..b2] {
        *x = s2 * normal(rng);
    }
    p
}

fn mlp_forward(shape: MlpShape, p: &[f64], x: &[f64], hid: &mut [f64], out: &mut [f64]) {
    let (b1, w2, b2) = shape.offsets();
    for (h, a) in hid.iter_mut().enumerate() {
        let row = &p[h * shape.d_in..(h + 1) * shape.d_in];
        *a = (dot(row, x) + p[b1 + h]).tanh();
    }
    for (k, o) in out.iter_mut().enumerate() {
        let row = &p[w2 + k * shape.hidden..w2 + (k + 1) * shape.hidden];
        *o = dot(row, hid) + p[b2 + k];
    }
}

fn mlp_backward(shape: MlpShape, p: &[f64], x: &[f64], y: &[f64], grad: &mut [f64]) {
    let (b1, w2, b2) = shape.offsets();
    let mut hid = vec![0.0; shape.hidden];
    let mut out = vec![0.0; shape.d_out];
    mlp_forward(shape, p, x, &mut hid, &mut out);

    let err: Vec<f64> = out.iter().zip(y).map(|(o, t)| o - t).collect();
    let mut dh = vec![0.0; shape.hidden];
    for (k, e) in err.iter().enumerate() {
        let row = &p[w2 + k * shape.hidden..w2 + (k + 1) * shape.hidden];
        axpy(&mut dh, *e, row);
        for (h, hv) in hid.iter().enumerate() {
            grad[w2 + k * shape.hidden + h] = e * hv;
        }
        grad[b2 + k] = *e;
    }
    for h in 0..shape.hidden {
        let da = dh[h] * (1.0 - hid[h] * hid[h]);
        for (j, xj) in x.iter().enumerate() {
            grad[h * shape.d_in + j] = da * xj;
        }
        grad[b1 + h] = da;
    }
}
