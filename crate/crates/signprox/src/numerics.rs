//! Dense vector/matrix arithmetic and seeded random number generation.
//!
//! Everything here is deterministic: the generator is ChaCha8 seeded from a
//! 64-bit integer, so identical seeds produce identical streams on every
//! platform. Parallel sections must derive independent child generators with
//! [`RngState::split`] instead of sharing one state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// SplitMix64 mixing step, used to derive child seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seeded random number generator with platform-independent output.
///
/// Single-owner by design: pass `&mut` down the call chain, or derive
/// independent streams with [`RngState::split`] for parallel work. The child
/// seed is `splitmix64(seed ^ splitmix64(index + 1))`.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child stream. Children with distinct indices
    /// are independent of each other and of the parent.
    pub fn split(&self, index: u64) -> RngState {
        RngState::new(splitmix64(self.seed ^ splitmix64(index.wrapping_add(1))))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
                context: "matrix element count",
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
                context: "matvec input length",
            });
        }
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            out.push(dot(self.row(i), x));
        }
        Ok(out)
    }

    /// `Aᵀ u`.
    pub fn matvec_t(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: u.len(),
                context: "transposed matvec input length",
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &ui) in u.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += ui * a;
            }
        }
        Ok(out)
    }
}

/// Matrix with i.i.d. zero-mean Gaussian entries of the given variance.
pub fn gaussian_matrix(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut RngState,
) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(
            "gaussian_matrix requires rows, cols >= 1".into(),
        ));
    }
    if !(variance >= 0.0) {
        return Err(Error::InvalidArgument(
            "gaussian_matrix requires variance >= 0".into(),
        ));
    }
    let std = variance.sqrt();
    let data = (0..rows * cols)
        .map(|_| std * rng.standard_normal())
        .collect();
    Matrix::new(rows, cols, data)
}

/// Validates that `weights` is a probability vector (nonnegative, sums to 1
/// within 1e-12).
pub fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("empty weight vector".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument(
            "weights must be nonnegative".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "weights must sum to 1 (got {sum})"
        )));
    }
    Ok(())
}

/// Draws `count` i.i.d. indices in `0..weights.len()` from the categorical
/// distribution given by `weights` (inverse-CDF sampling).
pub fn sample_categorical(
    weights: &[f64],
    count: usize,
    rng: &mut RngState,
) -> Result<Vec<usize>> {
    validate_weights(weights)?;
    if count == 0 {
        return Err(Error::InvalidArgument(
            "sample_categorical requires count >= 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut idx = weights.len() - 1;
        for (k, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = k;
                break;
            }
        }
        out.push(idx);
    }
    Ok(out)
}

/// Elementwise mean of a sequence of equal-length vectors, summed in the
/// fixed input order so results are reproducible.
pub fn deterministic_mean(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidArgument("deterministic_mean of empty input".into()))?;
    let n = first.len();
    let mut acc = vec![0.0; n];
    for v in vectors {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
                context: "deterministic_mean vector length",
            });
        }
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let inv = 1.0 / vectors.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    Ok(acc)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm_l2_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn norm_l2(v: &[f64]) -> f64 {
    norm_l2_sq(v).sqrt()
}

pub fn norm_linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `a - b`.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + s * b`.
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}
