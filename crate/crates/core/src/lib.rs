//! Large-margin multiple kernel learning.
//!
//! Learns a sparse, non-negative weight per base kernel so that, in the
//! combined feature space, every training point is closer to its same-class
//! neighbors than to its nearest differently-labeled points by a unit margin.
//! The weights solve a linear program; test points are then classified by kNN
//! under the learned distance.
//!
//! Modules, bottom up:
//!
//! - [`kernelspace`]: base kernels, normalization, and kernel-only distances
//! - [`neighborhood`]: targets, impostors, and margin triples
//! - [`lp`]: the linear-programming engine and its certificates
//! - [`lmmk`]: LP assembly and the training loop
//! - [`classify`]: kNN prediction and the uniform-weight baseline
//! - [`pipeline`]: data ingestion, splits, evaluation, sweeps, and tuning

pub mod classify;
pub mod kernelspace;
pub mod lmmk;
pub mod lp;
pub mod neighborhood;
pub mod pipeline;

pub use classify::{accuracy, knn_predict, uniform_weights, PredictionReport};
pub use kernelspace::{CrossKernelSet, DistanceMatrix, KernelMatrix, KernelSet, KernelWeights};
pub use lmmk::{train, ConstraintForm, Hyperparams, TrainedModel};
pub use lp::{LpProblem, LpSolution, LpStatus};
pub use neighborhood::{NeighborhoodSpec, Triple, TripleSet};
