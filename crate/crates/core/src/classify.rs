//! kNN prediction under the learned feature-space distance.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernelspace::{self, CrossKernelSet, KernelError, KernelSet, KernelWeights};
use crate::lmmk::TrainedModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("k for classification must be at least 1")]
    ZeroNeighbors,
    #[error("length mismatch: {predicted} predictions vs {truth} true labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("nothing to score")]
    Empty,
    #[error(
        "dimension mismatch: model has {model} training labels, kernels have {kernels} samples"
    )]
    DimensionMismatch { model: usize, kernels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub predicted: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// `confusion[truth][predicted]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<Vec<usize>>>,
    /// The `k` nearest training samples of each test point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighbors: Option<Vec<Vec<Neighbor>>>,
    /// Set when the learned weights were all zero and uniform weights were used.
    pub used_fallback: bool,
}

impl PredictionReport {
    /// Adds accuracy and the confusion matrix against the true labels.
    pub fn score(mut self, truth: &[usize], n_classes: usize) -> Result<Self, ClassifyError> {
        let acc = accuracy(&self.predicted, truth)?;
        let c = truth
            .iter()
            .chain(&self.predicted)
            .map(|&l| l + 1)
            .max()
            .unwrap_or(0)
            .max(n_classes);
        let mut confusion = vec![vec![0usize; c]; c];
        for (&t, &p) in truth.iter().zip(&self.predicted) {
            confusion[t][p] += 1;
        }
        self.accuracy = Some(acc);
        self.confusion = Some(confusion);
        Ok(self)
    }

    pub fn without_neighbors(mut self) -> Self {
        self.neighbors = None;
        self
    }
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64, ClassifyError> {
    if predicted.len() != truth.len() {
        return Err(ClassifyError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(ClassifyError::Empty);
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Weights of the kNN-ave baseline: every kernel counts once.
pub fn uniform_weights(d: usize) -> KernelWeights {
    KernelWeights::uniform(d)
}

/// Majority vote among the nearest neighbors. Ties go to the class with the
/// smallest summed distance, then to the smallest class id.
fn vote(neighbors: &[Neighbor], train_labels: &[usize]) -> usize {
    let mut tally: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for n in neighbors {
        let e = tally.entry(train_labels[n.index]).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += n.distance;
    }
    tally
        .into_iter()
        .min_by(|(la, (ca, sa)), (lb, (cb, sb))| cb.cmp(ca).then(sa.total_cmp(sb)).then(la.cmp(lb)))
        .map(|(label, _)| label)
        .expect("at least one neighbor")
}

fn nearest_row(row: ndarray::ArrayView1<f64>, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = row
        .iter()
        .enumerate()
        .map(|(index, &distance)| Neighbor { index, distance })
        .collect();
    let order = |a: &Neighbor, b: &Neighbor| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.index.cmp(&b.index))
    };
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, order);
        all.truncate(k);
    }
    all.sort_by(order);
    all
}

/// kNN labels from a precomputed `N_test x N_train` distance matrix.
pub fn knn_from_distances(
    dist: &Array2<f64>,
    train_labels: &[usize],
    k: usize,
) -> Result<(Vec<usize>, Vec<Vec<Neighbor>>), ClassifyError> {
    if k == 0 {
        return Err(ClassifyError::ZeroNeighbors);
    }
    if dist.ncols() != train_labels.len() {
        return Err(ClassifyError::DimensionMismatch {
            model: train_labels.len(),
            kernels: dist.ncols(),
        });
    }
    let results: Vec<(usize, Vec<Neighbor>)> = dist
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let nn = nearest_row(row, k);
            (vote(&nn, train_labels), nn)
        })
        .collect();
    Ok(results.into_iter().unzip())
}

/// kNN with explicit weights over the training labels.
pub fn knn_with_weights(
    weights: &KernelWeights,
    train_labels: &[usize],
    cross: &CrossKernelSet,
    ks: &KernelSet,
    k_classify: usize,
) -> Result<PredictionReport, ClassifyError> {
    if train_labels.len() != ks.n_samples() {
        return Err(ClassifyError::DimensionMismatch {
            model: train_labels.len(),
            kernels: ks.n_samples(),
        });
    }
    let dist = kernelspace::test_distances(cross, ks, weights)?;
    let (predicted, neighbors) = knn_from_distances(&dist, train_labels, k_classify)?;
    Ok(PredictionReport {
        predicted,
        accuracy: None,
        confusion: None,
        neighbors: Some(neighbors),
        used_fallback: false,
    })
}

/// Labels each test point by majority vote among its `k_classify` nearest
/// training points under the model's weights.
pub fn knn_predict(
    model: &TrainedModel,
    cross: &CrossKernelSet,
    ks: &KernelSet,
    k_classify: usize,
) -> Result<PredictionReport, ClassifyError> {
    let used_fallback = model.is_degenerate();
    let weights = model.effective_weights();
    let mut report = knn_with_weights(&weights, &model.labels, cross, ks, k_classify)?;
    report.used_fallback = used_fallback;
    Ok(report)
}
