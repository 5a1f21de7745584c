//! Dense linear-algebra kernels, activation functions, and a seedable RNG.
//!
//! Everything operates on 64-bit reals. Accumulation orders are fixed so
//! that runs with the same seed are bit-reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NumericsError {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimensionMismatch {
        op: &'static str,
        left: String,
        right: String,
    },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

fn dim_err(op: &'static str, left: impl ToString, right: impl ToString) -> NumericsError {
    NumericsError::DimensionMismatch {
        op,
        left: left.to_string(),
        right: right.to_string(),
    }
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err("from_vec", format!("{rows}x{cols}"), data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Entries uniform in the open interval (-scale, +scale), drawn in
    /// row-major order from `rng`.
    pub fn random(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Self {
        let data = (0..rows * cols).map(|_| rng.next_symmetric(scale)).collect();
        Matrix { rows, cols, data }
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// `self * v`. Accumulates left-to-right over columns so the result is
    /// deterministic.
    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(dim_err("matvec", format!("{}x{}", self.rows, self.cols), v.len()));
        }
        let mut out = vec![0.0; self.rows];
        for (i, out_i) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = 0.0;
            for (a, x) in row.iter().zip(v.data.iter()) {
                acc += a * x;
            }
            *out_i = acc;
        }
        Ok(Vector::from_vec(out))
    }

    /// `self^T * v`, without materializing the transpose.
    pub fn matvec_transpose(&self, v: &Vector) -> Result<Vector> {
        if self.rows != v.len() {
            return Err(dim_err(
                "matvec_transpose",
                format!("{}x{}", self.rows, self.cols),
                v.len(),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let vi = v.data[i];
            for (o, a) in out.iter_mut().zip(row.iter()) {
                *o += vi * a;
            }
        }
        Ok(Vector::from_vec(out))
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(dim_err(
                "matrix add",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }
}

/// Dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(n: usize) -> Self {
        Vector { data: vec![0.0; n] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn random(rng: &mut Rng, n: usize, scale: f64) -> Self {
        Vector {
            data: (0..n).map(|_| rng.next_symmetric(scale)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.data[i] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector {
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.zip_with(other, "vector add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.zip_with(other, "vector sub", |a, b| a - b)
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Vector) -> Result<Vector> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Vector {
        self.map(|x| x * factor)
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(dim_err("dot", self.len(), other.len()));
        }
        let mut acc = 0.0;
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            acc += a * b;
        }
        Ok(acc)
    }

    pub fn add_assign(&mut self, other: &Vector) -> Result<()> {
        if self.len() != other.len() {
            return Err(dim_err("vector add", self.len(), other.len()));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    fn zip_with(&self, other: &Vector, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(dim_err(op, self.len(), other.len()));
        }
        Ok(Vector {
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// `outer(u, v)[i][j] = u[i] * v[j]`.
pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    let mut data = Vec::with_capacity(u.len() * v.len());
    for &a in u.data.iter() {
        for &b in v.data.iter() {
            data.push(a * b);
        }
    }
    Matrix {
        rows: u.len(),
        cols: v.len(),
        data,
    }
}

/// Logistic sigmoid, computed in the branch that keeps the exponent
/// non-positive so large |x| cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh_(x: f64) -> f64 {
    x.tanh()
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn sigmoid_vec(v: &Vector) -> Vector {
    v.map(sigmoid)
}

pub fn tanh_vec(v: &Vector) -> Vector {
    v.map(tanh_)
}

pub fn relu_vec(v: &Vector) -> Vector {
    v.map(relu)
}

/// SplitMix64 generator (Steele, Lea & Flood; the reference stream used by
/// `java.util.SplittableRandom`). Chosen because the algorithm is fully
/// specified by three constants, so identical seeds give identical streams
/// in any implementation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1), using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform strictly inside (-scale, +scale). The half-offset keeps the
    /// draw away from both endpoints.
    pub fn next_symmetric(&mut self, scale: f64) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u = ((self.next_u64() >> 11) as f64 + 0.5) * SCALE;
        scale * (2.0 * u - 1.0)
    }

    /// Uniform in 0..n. The modulo bias is below n / 2^64 and irrelevant at
    /// the sizes used here.
    pub fn next_index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle driven by this generator.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}
