//! Dense linear algebra, activations and seeded sampling.
//!
//! Everything here is `f64` and row-major. The checked entry points
//! (`affine`, `sample_standard_gaussian`, ...) validate shapes and return
//! errors; the `pub(crate)` kernels below them assume shapes were validated by
//! the caller and are what the forward and backward passes use.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Indices of the non-zero entries, in increasing order.
    pub fn nonzero_indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "DenseMatrix::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::shape(
                    "DenseMatrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn shape_str(m: &DenseMatrix) -> String {
    format!("{}x{}", m.rows, m.cols)
}

/// `w · v + b`.
pub fn affine(w: &DenseMatrix, v: &DenseVector, b: &DenseVector) -> Result<DenseVector> {
    if w.cols != v.dim() || w.rows != b.dim() {
        return Err(Error::shape(
            "affine",
            format!("W {} with v[{}] and b[{}]", shape_str(w), w.cols, w.rows),
            format!("W {} with v[{}] and b[{}]", shape_str(w), v.dim(), b.dim()),
        ));
    }
    Ok(DenseVector::from_vec(affine_kernel(w, v.as_slice(), b.as_slice())))
}

pub(crate) fn affine_kernel(w: &DenseMatrix, v: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.cols, v.len());
    debug_assert_eq!(w.rows, b.len());
    w.data
        .chunks_exact(w.cols.max(1))
        .take(w.rows)
        .zip(b)
        .map(|(row, bias)| row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>() + bias)
        .collect()
}

/// `w · v` where `v` is zero outside `support`.
pub(crate) fn matvec_sparse(w: &DenseMatrix, v: &[f64], support: &[usize]) -> Vec<f64> {
    (0..w.rows)
        .map(|r| {
            let row = w.row(r);
            support.iter().map(|&j| row[j] * v[j]).sum::<f64>()
        })
        .collect()
}

/// `wᵀ · d`.
pub(crate) fn matvec_transposed(w: &DenseMatrix, d: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.rows, d.len());
    let mut out = vec![0.0; w.cols];
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(w.row(r)) {
            *o += wv * dr;
        }
    }
    out
}

/// `g += a ⊗ b`.
pub(crate) fn add_outer(g: &mut DenseMatrix, a: &[f64], b: &[f64]) {
    debug_assert_eq!(g.rows, a.len());
    debug_assert_eq!(g.cols, b.len());
    let cols = g.cols;
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        let row = &mut g.data[r * cols..(r + 1) * cols];
        for (gv, &bv) in row.iter_mut().zip(b) {
            *gv += ar * bv;
        }
    }
}

/// `g += a ⊗ b` where `b` is zero outside `support`.
pub(crate) fn add_outer_sparse(g: &mut DenseMatrix, a: &[f64], b: &[f64], support: &[usize]) {
    let cols = g.cols;
    for (r, &ar) in a.iter().enumerate() {
        let row = &mut g.data[r * cols..(r + 1) * cols];
        for &j in support {
            row[j] += ar * b[j];
        }
    }
}

pub(crate) fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh_vec(v: &DenseVector) -> DenseVector {
    DenseVector::from_vec(v.iter().map(|x| x.tanh()).collect())
}

pub fn sigmoid_vec(v: &DenseVector) -> DenseVector {
    DenseVector::from_vec(v.iter().copied().map(sigmoid).collect())
}

pub fn softmax_vec(v: &DenseVector) -> DenseVector {
    DenseVector::from_vec(softmax(v.as_slice()))
}

pub(crate) fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Seeded ChaCha8 stream. Substreams are addressed by a 64-bit id so that
/// independent consumers (initialization, balancing, each training epoch)
/// never depend on how many draws another consumer made.
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    /// Fresh generator for `stream`, independent of how far `self` has advanced.
    pub fn substream(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }
}

pub fn sample_standard_gaussian(rng: &mut RngState, dim: usize) -> Result<DenseVector> {
    if dim == 0 {
        return Err(Error::Config(
            "sample_standard_gaussian requires dim >= 1".into(),
        ));
    }
    Ok(DenseVector::from_vec(
        (0..dim).map(|_| rng.standard_normal()).collect(),
    ))
}
