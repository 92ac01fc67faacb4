//! Target and impostor selection, and the margin triples built from them.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeighborhoodError {
    #[error("class {label} has a single member; targets cannot be selected")]
    SingletonClass { label: usize },
    #[error("all samples share one class; impostors cannot be selected")]
    SingleClassDataset,
    #[error("neighbor count k must be at least 1")]
    ZeroNeighbors,
    #[error("{labels} labels given for {samples} samples")]
    LabelCountMismatch { labels: usize, samples: usize },
}

/// Something that can report a dissimilarity between two training samples.
pub trait DistanceProvider: Sync {
    fn n_samples(&self) -> usize;
    fn distance(&self, i: usize, j: usize) -> f64;
}

impl DistanceProvider for Array2<f64> {
    fn n_samples(&self) -> usize {
        self.nrows()
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        self[[i, j]]
    }
}

impl DistanceProvider for ArrayView2<'_, f64> {
    fn n_samples(&self) -> usize {
        self.nrows()
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        self[[i, j]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    pub k: usize,
}

impl NeighborhoodSpec {
    pub fn new(k: usize) -> Result<Self, NeighborhoodError> {
        if k == 0 {
            return Err(NeighborhoodError::ZeroNeighbors);
        }
        Ok(Self { k })
    }
}

/// One margin constraint: `anchor` should be closer to `target` than to
/// `impostor` by a unit margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub anchor: usize,
    pub target: usize,
    pub impostor: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripleSet {
    targets: Vec<Vec<usize>>,
    impostors: Vec<Vec<usize>>,
    triples: Vec<Triple>,
}

impl TripleSet {
    pub fn targets(&self) -> &[Vec<usize>] {
        &self.targets
    }

    pub fn impostors(&self) -> &[Vec<usize>] {
        &self.impostors
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Every ordered `(anchor, target)` pair, once each.
    pub fn target_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.targets
            .iter()
            .enumerate()
            .flat_map(|(i, ts)| ts.iter().map(move |&j| (i, j)))
    }

    /// Drops triples whose impostor already sits outside the target's
    /// perimeter plus the unit margin, `d(i, l) > d(i, j) + 1`.
    pub fn filter_perimeter<D: DistanceProvider>(&self, dist: &D) -> Self {
        let triples = self
            .triples
            .iter()
            .copied()
            .filter(|t| {
                dist.distance(t.anchor, t.impostor) <= dist.distance(t.anchor, t.target) + 1.0
            })
            .collect();
        Self {
            targets: self.targets.clone(),
            impostors: self.impostors.clone(),
            triples,
        }
    }
}

fn check_inputs<D: DistanceProvider>(
    dist: &D,
    labels: &[usize],
) -> Result<BTreeMap<usize, usize>, NeighborhoodError> {
    if labels.len() != dist.n_samples() {
        return Err(NeighborhoodError::LabelCountMismatch {
            labels: labels.len(),
            samples: dist.n_samples(),
        });
    }
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    Ok(counts)
}

/// The `k` indices accepted by `keep` that are nearest to `anchor`, ties going
/// to the lower index.
fn nearest<D: DistanceProvider>(
    dist: &D,
    anchor: usize,
    k: usize,
    keep: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let mut candidates: Vec<(f64, usize)> = (0..dist.n_samples())
        .filter(|&j| j != anchor && keep(j))
        .map(|j| (dist.distance(anchor, j), j))
        .collect();
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, by_distance);
        candidates.truncate(k);
    }
    candidates.sort_by(by_distance);
    candidates.into_iter().map(|(_, j)| j).collect()
}

/// For each anchor, its `k` nearest same-label samples.
pub fn select_targets<D: DistanceProvider>(
    dist: &D,
    labels: &[usize],
    spec: NeighborhoodSpec,
) -> Result<Vec<Vec<usize>>, NeighborhoodError> {
    let counts = check_inputs(dist, labels)?;
    if spec.k == 0 {
        return Err(NeighborhoodError::ZeroNeighbors);
    }
    if let Some((&label, _)) = counts.iter().find(|(_, &c)| c == 1) {
        return Err(NeighborhoodError::SingletonClass { label });
    }
    for (label, count) in &counts {
        if *count < spec.k + 1 {
            log::warn!(
                "class {label} has {count} members; its anchors get {} targets instead of {}",
                count - 1,
                spec.k
            );
        }
    }
    Ok((0..labels.len())
        .into_par_iter()
        .map(|i| nearest(dist, i, spec.k, |j| labels[j] == labels[i]))
        .collect())
}

/// For each anchor, its `k` nearest differently-labeled samples.
pub fn select_impostors<D: DistanceProvider>(
    dist: &D,
    labels: &[usize],
    spec: NeighborhoodSpec,
) -> Result<Vec<Vec<usize>>, NeighborhoodError> {
    let counts = check_inputs(dist, labels)?;
    if spec.k == 0 {
        return Err(NeighborhoodError::ZeroNeighbors);
    }
    if counts.len() < 2 {
        return Err(NeighborhoodError::SingleClassDataset);
    }
    Ok((0..labels.len())
        .into_par_iter()
        .map(|i| nearest(dist, i, spec.k, |j| labels[j] != labels[i]))
        .collect())
}

/// Per-anchor cross product of targets and impostors, anchor-major.
pub fn build_triples(targets: Vec<Vec<usize>>, impostors: Vec<Vec<usize>>) -> TripleSet {
    debug_assert_eq!(targets.len(), impostors.len());
    let triples = targets
        .iter()
        .zip(&impostors)
        .enumerate()
        .flat_map(|(anchor, (ts, is))| {
            ts.iter().flat_map(move |&target| {
                is.iter().map(move |&impostor| Triple {
                    anchor,
                    target,
                    impostor,
                })
            })
        })
        .collect();
    TripleSet {
        targets,
        impostors,
        triples,
    }
}

/// Targets, impostors and triples in one call.
pub fn neighborhood<D: DistanceProvider>(
    dist: &D,
    labels: &[usize],
    spec: NeighborhoodSpec,
) -> Result<TripleSet, NeighborhoodError> {
    let targets = select_targets(dist, labels, spec)?;
    let impostors = select_impostors(dist, labels, spec)?;
    Ok(build_triples(targets, impostors))
}
