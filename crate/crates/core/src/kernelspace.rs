//! Base kernels and the distances they induce.
//!
//! Everything here works on Gram matrices only; feature maps are never
//! materialized. A weighted concatenation of feature maps
//! `[sqrt(b_1) phi_1(x), ..., sqrt(b_d) phi_d(x)]` has the additive kernel
//! `sum_m b_m K_m(x, y)`, so squared distances in the combined space reduce to
//! `sum_m b_m (K_m(x, x) + K_m(y, y) - 2 K_m(x, y))`.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Entries of a symmetric input may differ from their transpose by this much
/// (relative) before the matrix is rejected.
const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Smallest eigenvalue accepted silently by [`check_psd`].
pub const PSD_TOLERANCE: f64 = -1e-8;

/// Above this size the eigenvalue check is skipped.
pub const PSD_CHECK_MAX_SAMPLES: usize = 2000;

/// Relative factor used for the default zero threshold of [`KernelWeights`].
pub const DEFAULT_ZERO_FACTOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("all off-diagonal distances are zero")]
    AllZeroDistances,
    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("diagonal entry {index} is not positive ({value})")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("index {index} out of range for {n} samples")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("a kernel set needs at least one kernel")]
    EmptyKernelSet,
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
}

fn require_square(values: &ArrayView2<f64>) -> Result<usize, KernelError> {
    let (rows, cols) = values.dim();
    if rows != cols {
        return Err(KernelError::DimensionMismatch {
            what: "square matrix columns",
            expected: rows,
            found: cols,
        });
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(KernelError::InvalidMatrix(format!(
            "non-finite entry at ({}, {})",
            pos / cols.max(1),
            pos % cols.max(1)
        )));
    }
    Ok(rows)
}

/// Checks near-symmetry and returns the exactly symmetric average `(A + A^T) / 2`.
fn symmetrize(mut values: Array2<f64>) -> Result<Array2<f64>, KernelError> {
    let n = values.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = values[[i, j]];
            let b = values[[j, i]];
            let scale = a.abs().max(b.abs()).max(1.0);
            if (a - b).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(KernelError::InvalidMatrix(format!(
                    "not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
            let mean = 0.5 * (a + b);
            values[[i, j]] = mean;
            values[[j, i]] = mean;
        }
    }
    Ok(values)
}

/// Pairwise dissimilarities between the samples of one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, KernelError> {
        let n = require_square(&values.view())?;
        let values = symmetrize(values)?;
        for i in 0..n {
            if values[[i, i]] != 0.0 {
                return Err(KernelError::InvalidMatrix(format!(
                    "distance diagonal ({i}, {i}) is {} instead of 0",
                    values[[i, i]]
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| **v < 0.0) {
            return Err(KernelError::InvalidMatrix(format!("negative distance {v}")));
        }
        Ok(Self { values })
    }

    /// Absolute differences `|x_i - x_j|` of a single scalar feature.
    pub fn from_scalar_feature(column: &[f64]) -> Result<Self, KernelError> {
        let n = column.len();
        let values = Array2::from_shape_fn((n, n), |(i, j)| (column[i] - column[j]).abs());
        Self::new(values)
    }

    /// Euclidean distances between the rows of `points`.
    pub fn euclidean(points: ArrayView2<f64>) -> Result<Self, KernelError> {
        Self::new(euclidean_cross(points, points))
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Restriction to the given samples, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let values = self.values.select(Axis(0), idx).select(Axis(1), idx);
        Self { values }
    }

    /// Rectangular block `rows x cols` of the underlying matrix.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Array2<f64> {
        self.values.select(Axis(0), rows).select(Axis(1), cols)
    }
}

/// Euclidean distances between rows of `a` and rows of `b`.
pub fn euclidean_cross(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let x = a.row(i);
            for (j, slot) in row.iter_mut().enumerate() {
                let y = b.row(j);
                let sq: f64 = x.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
                *slot = sq.sqrt();
            }
        });
    out
}

/// A symmetric Gram matrix over one set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
}

impl KernelMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, KernelError> {
        require_square(&values.view())?;
        Ok(Self {
            values: symmetrize(values)?,
        })
    }

    /// Linear kernel `<x_i, x_j>` of the rows of `points`.
    pub fn linear(points: ArrayView2<f64>) -> Self {
        let values = points.dot(&points.t());
        Self::new(values).expect("a Gram matrix of finite points is symmetric")
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.values.diag().to_vec()
    }

    pub fn is_normalized(&self) -> bool {
        self.values.diag().iter().all(|&v| v == 1.0)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), idx).select(Axis(1), idx),
        }
    }

    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Array2<f64> {
        self.values.select(Axis(0), rows).select(Axis(1), cols)
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Mean of the off-diagonal entries, used as the Gaussian bandwidth.
pub fn compute_bandwidth(dist: &DistanceMatrix) -> Result<f64, KernelError> {
    let n = dist.n_samples();
    if n < 2 {
        return Err(KernelError::TooFewSamples {
            needed: 2,
            found: n,
        });
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += dist.values[[i, j]];
            }
        }
    }
    let delta = sum / (n * (n - 1)) as f64;
    if delta > 0.0 {
        Ok(delta)
    } else {
        Err(KernelError::AllZeroDistances)
    }
}

fn gaussian_entries(dist: ArrayView2<f64>, delta: f64) -> Result<Array2<f64>, KernelError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(KernelError::NonPositiveBandwidth(delta));
    }
    let mut out = Array2::zeros(dist.dim());
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(dist.axis_iter(Axis(0)))
        .for_each(|(mut row, d_row)| {
            for (k, d) in row.iter_mut().zip(d_row.iter()) {
                *k = (-(d * d) / delta).exp();
            }
        });
    Ok(out)
}

/// `K_ij = exp(-D_ij^2 / delta)`.
pub fn gaussian_kernel(dist: &DistanceMatrix, delta: f64) -> Result<KernelMatrix, KernelError> {
    let values = gaussian_entries(dist.values(), delta)?;
    Ok(KernelMatrix { values })
}

/// Gaussian kernel between test rows and training columns, for a bandwidth
/// fixed on the training set.
pub fn gaussian_cross(dist: ArrayView2<f64>, delta: f64) -> Result<Array2<f64>, KernelError> {
    if let Some(v) = dist.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(KernelError::InvalidMatrix(format!(
            "invalid cross distance {v}"
        )));
    }
    gaussian_entries(dist, delta)
}

/// Cosine normalization `K_ij / sqrt(K_ii K_jj)`; the result has a unit diagonal.
pub fn normalize_kernel(raw: &KernelMatrix) -> Result<KernelMatrix, KernelError> {
    let diag = raw.diagonal();
    if let Some((index, &value)) = diag.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(KernelError::NonPositiveDiagonal { index, value });
    }
    let scale: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    let n = raw.n_samples();
    let mut values = Array2::zeros((n, n));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = if i == j {
                    1.0
                } else {
                    raw.values[[i, j]] / (scale[i] * scale[j])
                };
            }
        });
    Ok(KernelMatrix { values })
}

/// Normalizes a test-by-train block with the training diagonal and the
/// test self-similarities.
pub fn normalize_cross(
    raw: ArrayView2<f64>,
    train_diag: &[f64],
    test_self: &[f64],
) -> Result<Array2<f64>, KernelError> {
    let (rows, cols) = raw.dim();
    if cols != train_diag.len() {
        return Err(KernelError::DimensionMismatch {
            what: "cross kernel columns",
            expected: train_diag.len(),
            found: cols,
        });
    }
    if rows != test_self.len() {
        return Err(KernelError::DimensionMismatch {
            what: "cross kernel rows",
            expected: test_self.len(),
            found: rows,
        });
    }
    for (index, &value) in train_diag.iter().chain(test_self.iter()).enumerate() {
        if !(value > 0.0) {
            return Err(KernelError::NonPositiveDiagonal { index, value });
        }
    }
    Ok(Array2::from_shape_fn((rows, cols), |(t, i)| {
        raw[[t, i]] / (test_self[t].sqrt() * train_diag[i].sqrt())
    }))
}

/// Smallest eigenvalue of a kernel matrix.
pub fn min_eigenvalue(kernel: &KernelMatrix) -> f64 {
    let n = kernel.n_samples();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| kernel.values[[i, j]]);
    m.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Advisory positive-semidefiniteness check. Returns the smallest eigenvalue
/// when it was computed; logs a warning when it falls below [`PSD_TOLERANCE`].
pub fn check_psd(kernel: &KernelMatrix, name: &str) -> Option<f64> {
    if kernel.n_samples() > PSD_CHECK_MAX_SAMPLES {
        return None;
    }
    let lambda_min = min_eigenvalue(kernel);
    if lambda_min < PSD_TOLERANCE {
        log::warn!("kernel '{name}' is indefinite (smallest eigenvalue {lambda_min:.3e})");
    }
    Some(lambda_min)
}

/// The base kernels over one training set, all with unit diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    kernels: Vec<KernelMatrix>,
    names: Vec<String>,
}

impl KernelSet {
    /// Builds a set from kernels that are already normalized.
    pub fn new(kernels: Vec<KernelMatrix>, names: Vec<String>) -> Result<Self, KernelError> {
        if kernels.is_empty() {
            return Err(KernelError::EmptyKernelSet);
        }
        if names.len() != kernels.len() {
            return Err(KernelError::DimensionMismatch {
                what: "kernel names",
                expected: kernels.len(),
                found: names.len(),
            });
        }
        let n = kernels[0].n_samples();
        for (m, k) in kernels.iter().enumerate() {
            if k.n_samples() != n {
                return Err(KernelError::DimensionMismatch {
                    what: "kernel size",
                    expected: n,
                    found: k.n_samples(),
                });
            }
            if !k.is_normalized() {
                return Err(KernelError::InvalidMatrix(format!(
                    "kernel '{}' (#{m}) does not have a unit diagonal",
                    names[m]
                )));
            }
        }
        Ok(Self { kernels, names })
    }

    /// Normalizes every kernel before building the set.
    pub fn from_raw(kernels: Vec<KernelMatrix>, names: Vec<String>) -> Result<Self, KernelError> {
        let normalized = kernels
            .iter()
            .map(normalize_kernel)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(normalized, names)
    }

    /// Number of base kernels `d`.
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn n_samples(&self) -> usize {
        self.kernels[0].n_samples()
    }

    pub fn kernels(&self) -> &[KernelMatrix] {
        &self.kernels
    }

    pub fn kernel(&self, m: usize) -> &KernelMatrix {
        &self.kernels[m]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `K_(:)(x_i, x_j)`, the vector of all base-kernel values for one pair.
    pub fn column(&self, i: usize, j: usize) -> Vec<f64> {
        self.kernels.iter().map(|k| k.values[[i, j]]).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            kernels: self.kernels.iter().map(|k| k.select(idx)).collect(),
            names: self.names.clone(),
        }
    }

    fn check_weights(&self, w: &KernelWeights) -> Result<(), KernelError> {
        if w.len() != self.len() {
            return Err(KernelError::DimensionMismatch {
                what: "kernel weights",
                expected: self.len(),
                found: w.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<(), KernelError> {
        let n = self.n_samples();
        if index >= n {
            return Err(KernelError::IndexOutOfRange { index, n });
        }
        Ok(())
    }
}

/// Kernel values between test points and the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossKernelSet {
    kernels: Vec<Array2<f64>>,
    self_values: Vec<Vec<f64>>,
}

impl CrossKernelSet {
    pub fn new(kernels: Vec<Array2<f64>>, self_values: Vec<Vec<f64>>) -> Result<Self, KernelError> {
        if kernels.is_empty() {
            return Err(KernelError::EmptyKernelSet);
        }
        if self_values.len() != kernels.len() {
            return Err(KernelError::DimensionMismatch {
                what: "cross self-value sets",
                expected: kernels.len(),
                found: self_values.len(),
            });
        }
        let dim = kernels[0].dim();
        for (k, s) in kernels.iter().zip(&self_values) {
            if k.dim() != dim {
                return Err(KernelError::DimensionMismatch {
                    what: "cross kernel rows",
                    expected: dim.0,
                    found: k.nrows(),
                });
            }
            if s.len() != dim.0 {
                return Err(KernelError::DimensionMismatch {
                    what: "cross self values",
                    expected: dim.0,
                    found: s.len(),
                });
            }
            if k.iter().chain(s.iter()).any(|v| !v.is_finite()) {
                return Err(KernelError::InvalidMatrix(
                    "non-finite cross kernel entry".into(),
                ));
            }
        }
        Ok(Self {
            kernels,
            self_values,
        })
    }

    /// Cross kernels that are already normalized, so every `K(z, z)` is 1.
    pub fn normalized(kernels: Vec<Array2<f64>>) -> Result<Self, KernelError> {
        let self_values = kernels.iter().map(|k| vec![1.0; k.nrows()]).collect();
        Self::new(kernels, self_values)
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn n_test(&self) -> usize {
        self.kernels[0].nrows()
    }

    pub fn n_train(&self) -> usize {
        self.kernels[0].ncols()
    }

    pub fn kernels(&self) -> &[Array2<f64>] {
        &self.kernels
    }

    pub fn self_values(&self) -> &[Vec<f64>] {
        &self.self_values
    }

    /// Keeps only the given test rows.
    pub fn select_test(&self, rows: &[usize]) -> Self {
        Self {
            kernels: self
                .kernels
                .iter()
                .map(|k| k.select(Axis(0), rows))
                .collect(),
            self_values: self
                .self_values
                .iter()
                .map(|s| rows.iter().map(|&r| s[r]).collect())
                .collect(),
        }
    }
}

/// Non-negative per-kernel weights, the diagonal of the feature-space metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWeights {
    pub beta: Vec<f64>,
    pub zero_tolerance: f64,
}

impl KernelWeights {
    /// Weights with the default zero threshold `1e-6 * max(max beta, 1)`.
    pub fn new(beta: Vec<f64>) -> Result<Self, KernelError> {
        let max = beta.iter().copied().fold(1.0_f64, f64::max);
        Self::with_tolerance(beta, DEFAULT_ZERO_FACTOR * max)
    }

    pub fn with_tolerance(beta: Vec<f64>, zero_tolerance: f64) -> Result<Self, KernelError> {
        if let Some(v) = beta.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(KernelError::InvalidMatrix(format!(
                "kernel weight {v} is not a finite non-negative number"
            )));
        }
        if !(zero_tolerance.is_finite() && zero_tolerance >= 0.0) {
            return Err(KernelError::InvalidMatrix(format!(
                "invalid zero tolerance {zero_tolerance}"
            )));
        }
        Ok(Self {
            beta,
            zero_tolerance,
        })
    }

    /// All weights equal to one.
    pub fn uniform(d: usize) -> Self {
        Self::new(vec![1.0; d]).expect("unit weights are valid")
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// `||beta||_0` under the zero tolerance.
    pub fn nonzero_count(&self) -> usize {
        self.beta
            .iter()
            .filter(|&&b| b > self.zero_tolerance)
            .count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.nonzero_count() == 0
    }

    pub fn sum(&self) -> f64 {
        self.beta.iter().sum()
    }

    /// The same weights multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self, KernelError> {
        Self::with_tolerance(
            self.beta.iter().map(|b| b * factor).collect(),
            self.zero_tolerance * factor,
        )
    }
}

/// `sum_m beta_m K_m`.
pub fn combine_kernels(ks: &KernelSet, w: &KernelWeights) -> Result<KernelMatrix, KernelError> {
    ks.check_weights(w)?;
    let n = ks.n_samples();
    let mut values = Array2::<f64>::zeros((n, n));
    for (k, &b) in ks.kernels.iter().zip(&w.beta) {
        values.scaled_add(b, &k.values);
    }
    Ok(KernelMatrix { values })
}

/// Squared distance between training samples `i` and `j` under the weights.
pub fn rkhs_distance(
    ks: &KernelSet,
    w: &KernelWeights,
    i: usize,
    j: usize,
) -> Result<f64, KernelError> {
    ks.check_weights(w)?;
    ks.check_index(i)?;
    ks.check_index(j)?;
    Ok(pair_distance(ks, &w.beta, i, j))
}

#[inline]
pub(crate) fn pair_distance(ks: &KernelSet, beta: &[f64], i: usize, j: usize) -> f64 {
    // Sum over the symmetric pair (min, max) so that d(i, j) == d(j, i) bit for bit.
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    ks.kernels
        .iter()
        .zip(beta)
        .map(|(k, &w)| w * (k.values[[a, a]] + k.values[[b, b]] - 2.0 * k.values[[a, b]]))
        .sum()
}

/// Full `N x N` matrix of [`rkhs_distance`] values.
pub fn pairwise_distances(ks: &KernelSet, w: &KernelWeights) -> Result<Array2<f64>, KernelError> {
    ks.check_weights(w)?;
    let n = ks.n_samples();
    let mut out = Array2::zeros((n, n));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = pair_distance(ks, &w.beta, i, j);
            }
        });
    Ok(out)
}

/// Squared distance between test point `t` and training sample `i`.
pub fn rkhs_distance_to_test(
    cross: &CrossKernelSet,
    ks: &KernelSet,
    w: &KernelWeights,
    t: usize,
    i: usize,
) -> Result<f64, KernelError> {
    check_cross(cross, ks, w)?;
    if t >= cross.n_test() {
        return Err(KernelError::IndexOutOfRange {
            index: t,
            n: cross.n_test(),
        });
    }
    ks.check_index(i)?;
    Ok(test_distance(cross, ks, &w.beta, t, i))
}

fn check_cross(
    cross: &CrossKernelSet,
    ks: &KernelSet,
    w: &KernelWeights,
) -> Result<(), KernelError> {
    ks.check_weights(w)?;
    if cross.len() != ks.len() {
        return Err(KernelError::DimensionMismatch {
            what: "cross kernel count",
            expected: ks.len(),
            found: cross.len(),
        });
    }
    if cross.n_train() != ks.n_samples() {
        return Err(KernelError::DimensionMismatch {
            what: "cross kernel columns",
            expected: ks.n_samples(),
            found: cross.n_train(),
        });
    }
    Ok(())
}

#[inline]
fn test_distance(cross: &CrossKernelSet, ks: &KernelSet, beta: &[f64], t: usize, i: usize) -> f64 {
    cross
        .kernels
        .iter()
        .zip(&cross.self_values)
        .zip(ks.kernels.iter().zip(beta))
        .map(|((kc, zz), (k, &w))| w * (zz[t] + k.values[[i, i]] - 2.0 * kc[[t, i]]))
        .sum()
}

/// `N_test x N_train` matrix of [`rkhs_distance_to_test`] values.
pub fn test_distances(
    cross: &CrossKernelSet,
    ks: &KernelSet,
    w: &KernelWeights,
) -> Result<Array2<f64>, KernelError> {
    check_cross(cross, ks, w)?;
    let mut out = Array2::zeros((cross.n_test(), cross.n_train()));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(t, mut row)| {
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = test_distance(cross, ks, &w.beta, t, i);
            }
        });
    Ok(out)
}
