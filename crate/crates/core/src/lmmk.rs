//! The margin LP over kernel weights and the outer training loop.
//!
//! With unit-diagonal kernels the squared distance `D(i, j)` is
//! `sum_m beta_m (2 - 2 K_m(i, j))`, so both the pull term and every margin
//! constraint are linear in `beta`. Variables are `[beta (d) | xi (one per
//! triple)]`; the LP minimizes
//!
//! ```text
//! (1 - mu) * p.beta + mu * sum(xi) + lambda * sum(beta)
//! ```
//!
//! with `p_m = sum over target pairs of (1 - K_m(i, j))`, subject to
//! `row(i, j, l).beta + xi_ijl >= 1` for each triple.

use std::fmt;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernelspace::{self, KernelError, KernelSet, KernelWeights};
use crate::lp::{self, LpError, LpProblem, LpSolution, LpStatus, SolverOptions};
use crate::neighborhood::{self, NeighborhoodError, NeighborhoodSpec, Triple, TripleSet};

/// Residual bound for accepting a solved round.
pub const CERTIFICATION_TOLERANCE: f64 = 1e-6;

pub const MODEL_FORMAT: &str = "lmmk-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("no margin triples to constrain the weights")]
    EmptyTripleSet,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("{labels} labels given for {samples} training samples")]
    LabelCountMismatch { labels: usize, samples: usize },
    #[error("round {round}: LP ended with status {status:?}")]
    LpNotOptimal { round: usize, status: LpStatus },
    #[error("round {round}: LP solution failed certification (residual {residual:.3e})")]
    Uncertified { round: usize, residual: f64 },
    #[error("model document: {0}")]
    Format(String),
}

/// How each triple's margin row is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ConstraintForm {
    /// `2 (K_ij - K_il)`: `D(i, l) - D(i, j)` for unit-diagonal kernels.
    #[default]
    Derived,
    /// `2 (1 + K_ij - K_il)`, the row as usually printed.
    PaperLiteral,
}

impl fmt::Display for ConstraintForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintForm::Derived => f.write_str("derived"),
            ConstraintForm::PaperLiteral => f.write_str("paper-literal"),
        }
    }
}

impl std::str::FromStr for ConstraintForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "derived" => Ok(Self::Derived),
            "paper-literal" | "paperliteral" | "literal" => Ok(Self::PaperLiteral),
            other => Err(format!("unknown constraint form '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub k: usize,
    pub mu: f64,
    pub lambda: f64,
    pub outer_iters: usize,
    #[serde(default)]
    pub constraint_form: ConstraintForm,
    /// Keep only triples whose impostor lies within the target distance plus
    /// one at selection time.
    #[serde(default)]
    pub perimeter_filter: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 3,
            mu: 0.5,
            lambda: 0.1,
            outer_iters: 3,
            constraint_form: ConstraintForm::Derived,
            perimeter_filter: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.k == 0 {
            return Err(TrainError::InvalidHyperparams(
                "k must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(TrainError::InvalidHyperparams(format!(
                "mu must lie in [0, 1], got {}",
                self.mu
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::InvalidHyperparams(format!(
                "lambda must be a finite non-negative number, got {}",
                self.lambda
            )));
        }
        if !(1..=10).contains(&self.outer_iters) {
            return Err(TrainError::InvalidHyperparams(format!(
                "outer_iters must lie in 1..=10, got {}",
                self.outer_iters
            )));
        }
        Ok(())
    }
}

/// `p_m = sum over (anchor, target) pairs of (1 - K_m(i, j))`; each pair
/// counts once no matter how many impostors it is paired with.
pub fn pull_coefficients(ks: &KernelSet, triples: &TripleSet) -> Vec<f64> {
    let mut p = vec![0.0; ks.len()];
    for (i, j) in triples.target_pairs() {
        for (acc, k) in p.iter_mut().zip(ks.kernels()) {
            *acc += 1.0 - k.get(i, j);
        }
    }
    p
}

pub fn margin_row(ks: &KernelSet, triple: Triple, form: ConstraintForm) -> Vec<f64> {
    let offset = match form {
        ConstraintForm::Derived => 0.0,
        ConstraintForm::PaperLiteral => 1.0,
    };
    let Triple {
        anchor: i,
        target: j,
        impostor: l,
    } = triple;
    ks.kernels()
        .iter()
        .map(|k| 2.0 * (offset + k.get(i, j) - k.get(i, l)))
        .collect()
}

pub fn assemble_lp(
    ks: &KernelSet,
    triples: &TripleSet,
    hp: &Hyperparams,
) -> Result<LpProblem, TrainError> {
    if triples.is_empty() {
        return Err(TrainError::EmptyTripleSet);
    }
    let d = ks.len();
    let m = triples.len();
    let pull = pull_coefficients(ks, triples);
    let mut cost: Vec<f64> = pull.iter().map(|p| (1.0 - hp.mu) * p + hp.lambda).collect();
    cost.extend(std::iter::repeat_n(hp.mu, m));

    let rows: Vec<Vec<f64>> = triples
        .triples()
        .par_iter()
        .map(|&t| margin_row(ks, t, hp.constraint_form))
        .collect();
    let mut matrix = Array2::zeros((m, d + m));
    for (r, row) in rows.iter().enumerate() {
        for (mm, &a) in row.iter().enumerate() {
            matrix[[r, mm]] = a;
        }
        matrix[[r, d + r]] = 1.0;
    }
    Ok(LpProblem::new(cost, matrix, vec![1.0; m])?)
}

/// The training objective with true feature-space distances:
/// `(1 - mu) sum D(i, j) + mu sum max(0, 1 - D(i, l) + D(i, j)) + lambda sum beta`.
pub fn lmmk_objective(ks: &KernelSet, triples: &TripleSet, beta: &[f64], hp: &Hyperparams) -> f64 {
    let dist = |i, j| kernelspace::pair_distance(ks, beta, i, j);
    let pull: f64 = triples.target_pairs().map(|(i, j)| dist(i, j)).sum();
    let push: f64 = triples
        .triples()
        .iter()
        .map(|t| (1.0 - dist(t.anchor, t.impostor) + dist(t.anchor, t.target)).max(0.0))
        .sum();
    (1.0 - hp.mu) * pull + hp.mu * push + hp.lambda * beta.iter().sum::<f64>()
}

/// `||beta||_0` under the weights' zero tolerance.
pub fn sparsity(w: &KernelWeights) -> usize {
    w.nonzero_count()
}

/// One pass of neighbor selection and LP solving.
#[derive(Debug, Clone)]
pub struct Round {
    pub triples: TripleSet,
    pub problem: LpProblem,
    pub solution: LpSolution,
    pub beta: Vec<f64>,
    pub objective: f64,
}

impl Round {
    /// Slack values `xi`, one per triple.
    pub fn slacks(&self) -> &[f64] {
        &self.solution.values[self.beta.len()..]
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: TrainedModel,
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub weights: KernelWeights,
    pub labels: Vec<usize>,
    pub hyperparams: Hyperparams,
    /// Training objective of every round.
    pub objective_trace: Vec<f64>,
    /// Optimal LP objective of every round.
    pub lp_objective_trace: Vec<f64>,
    /// Round whose weights were kept (0-based).
    pub selected_round: usize,
    pub kernel_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

impl TrainedModel {
    /// True when every learned weight is zero and prediction must fall back to
    /// uniform weights.
    pub fn is_degenerate(&self) -> bool {
        self.weights.is_all_zero()
    }

    /// Weights used for prediction: the learned ones, or uniform weights when
    /// all of them are zero.
    pub fn effective_weights(&self) -> KernelWeights {
        if self.is_degenerate() {
            log::warn!(
                "all kernel weights are zero (lambda = {} is likely too large); \
                 falling back to uniform weights",
                self.hyperparams.lambda
            );
            KernelWeights::uniform(self.weights.len())
        } else {
            self.weights.clone()
        }
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model fields are serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| TrainError::Format(e.to_string()))?;
        if doc.format != MODEL_FORMAT {
            return Err(TrainError::Format(format!(
                "unexpected format '{}'",
                doc.format
            )));
        }
        if doc.version != MODEL_VERSION {
            return Err(TrainError::Format(format!(
                "unsupported version {}",
                doc.version
            )));
        }
        let model = doc.model;
        KernelWeights::with_tolerance(model.weights.beta.clone(), model.weights.zero_tolerance)?;
        if model.weights.len() != model.kernel_names.len() {
            return Err(TrainError::Format(
                "weight and kernel name counts differ".into(),
            ));
        }
        Ok(model)
    }
}

pub fn train(
    ks: &KernelSet,
    labels: &[usize],
    hp: &Hyperparams,
) -> Result<TrainedModel, TrainError> {
    train_detailed(ks, labels, hp).map(|run| run.model)
}

/// Trains and keeps every round's triples and LP solution.
pub fn train_detailed(
    ks: &KernelSet,
    labels: &[usize],
    hp: &Hyperparams,
) -> Result<TrainingRun, TrainError> {
    hp.validate()?;
    if labels.len() != ks.n_samples() {
        return Err(TrainError::LabelCountMismatch {
            labels: labels.len(),
            samples: ks.n_samples(),
        });
    }
    let d = ks.len();
    let spec = NeighborhoodSpec::new(hp.k)?;
    let mut geometry = KernelWeights::uniform(d);
    let mut rounds: Vec<Round> = Vec::with_capacity(hp.outer_iters);

    for round in 0..hp.outer_iters {
        let dist = kernelspace::pairwise_distances(ks, &geometry)?;
        let mut triples = neighborhood::neighborhood(&dist, labels, spec)?;
        if hp.perimeter_filter {
            triples = triples.filter_perimeter(&dist);
        }

        // Unchanged neighborhoods give the same LP; reuse the previous round.
        if let Some(prev) = rounds.last().filter(|r| r.triples == triples) {
            let repeat = prev.clone();
            rounds.push(repeat);
            continue;
        }

        let problem = assemble_lp(ks, &triples, hp)?;
        let solution = lp::solve_with(&problem, &SolverOptions::default());
        if solution.status != LpStatus::Optimal {
            return Err(TrainError::LpNotOptimal {
                round,
                status: solution.status,
            });
        }
        let report = lp::verify(&problem, &solution, CERTIFICATION_TOLERANCE);
        if !report.passed {
            let residual = report
                .primal_violation
                .max(report.bound_violation)
                .max(report.duality_residual);
            return Err(TrainError::Uncertified { round, residual });
        }
        let beta: Vec<f64> = solution.values[..d].iter().map(|b| b.max(0.0)).collect();
        let objective = lmmk_objective(ks, &triples, &beta, hp);
        log::debug!(
            "round {round}: {} triples, LP objective {:.6}, training objective {:.6}, {} simplex iterations",
            triples.len(),
            solution.objective,
            objective,
            solution.iterations
        );

        let weights = KernelWeights::new(beta.clone())?;
        geometry = if weights.is_all_zero() {
            KernelWeights::uniform(d)
        } else {
            weights
        };
        rounds.push(Round {
            triples,
            problem,
            solution,
            beta,
            objective,
        });
    }

    let selected_round = rounds
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then(a.0.cmp(&b.0)))
        .map(|(r, _)| r)
        .expect("at least one round runs");
    let weights = KernelWeights::new(rounds[selected_round].beta.clone())?;
    if weights.is_all_zero() {
        log::warn!(
            "training produced all-zero kernel weights; lambda = {} is likely too large",
            hp.lambda
        );
    }
    let model = TrainedModel {
        weights,
        labels: labels.to_vec(),
        hyperparams: *hp,
        objective_trace: rounds.iter().map(|r| r.objective).collect(),
        lp_objective_trace: rounds.iter().map(|r| r.solution.objective).collect(),
        selected_round,
        kernel_names: ks.names().to_vec(),
    };
    Ok(TrainingRun { model, rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernelspace::{
        compute_bandwidth, gaussian_kernel, rkhs_distance, DistanceMatrix, KernelMatrix,
    };
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn single_kernel(values: Array2<f64>) -> KernelSet {
        KernelSet::new(vec![KernelMatrix::new(values).unwrap()], vec!["k".into()]).unwrap()
    }

    fn gaussian_set(features: &[Vec<f64>]) -> KernelSet {
        let kernels = features
            .iter()
            .map(|col| {
                let d = DistanceMatrix::from_scalar_feature(col).unwrap();
                gaussian_kernel(&d, compute_bandwidth(&d).unwrap()).unwrap()
            })
            .collect();
        let names = (0..features.len()).map(|m| format!("f{m}")).collect();
        KernelSet::new(kernels, names).unwrap()
    }

    fn random_kernel_set(rng: &mut ChaCha8Rng, d: usize, n: usize) -> KernelSet {
        let features: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        gaussian_set(&features)
    }

    #[test]
    fn pull_examples() {
        let ks = single_kernel(array![[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let ts = neighborhood::build_triples(
            vec![vec![1], vec![], vec![]],
            vec![vec![2], vec![], vec![]],
        );
        assert_eq!(pull_coefficients(&ks, &ts), vec![0.0]);

        let ks = single_kernel(array![[1.0, 0.25, 0.0], [0.25, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(pull_coefficients(&ks, &ts), vec![0.75]);
    }

    #[test]
    fn pull_counts_each_target_pair_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ks = random_kernel_set(&mut rng, 3, 12);
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let dist = kernelspace::pairwise_distances(&ks, &KernelWeights::uniform(3)).unwrap();
        let ts =
            neighborhood::neighborhood(&dist, &labels, NeighborhoodSpec::new(2).unwrap()).unwrap();
        let mut expected = vec![0.0; 3];
        for i in 0..12 {
            for &j in &ts.targets()[i] {
                for m in 0..3 {
                    expected[m] += 1.0 - ks.kernel(m).get(i, j);
                }
            }
        }
        let p = pull_coefficients(&ks, &ts);
        for m in 0..3 {
            assert!((p[m] - expected[m]).abs() < 1e-12);
            assert!(p[m] >= 0.0);
        }
    }

    #[test]
    fn margin_row_examples() {
        let ks = single_kernel(array![[1.0, 0.9, 0.1], [0.9, 1.0, 0.3], [0.1, 0.3, 1.0]]);
        let t = Triple {
            anchor: 0,
            target: 1,
            impostor: 2,
        };
        let derived = margin_row(&ks, t, ConstraintForm::Derived);
        let literal = margin_row(&ks, t, ConstraintForm::PaperLiteral);
        assert!((derived[0] - 1.6).abs() < 1e-12);
        assert!((literal[0] - 3.6).abs() < 1e-12);

        let sym = single_kernel(array![[1.0, 0.4, 0.4], [0.4, 1.0, 0.2], [0.4, 0.2, 1.0]]);
        assert_eq!(margin_row(&sym, t, ConstraintForm::Derived), vec![0.0]);
    }

    #[test]
    fn derived_row_is_a_distance_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ks = random_kernel_set(&mut rng, 4, 10);
        for _ in 0..20 {
            let t = Triple {
                anchor: rng.random_range(0..10),
                target: rng.random_range(0..10),
                impostor: rng.random_range(0..10),
            };
            let row = margin_row(&ks, t, ConstraintForm::Derived);
            let beta: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
            let w = KernelWeights::new(beta.clone()).unwrap();
            let lhs: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let rhs = rkhs_distance(&ks, &w, t.anchor, t.impostor).unwrap()
                - rkhs_distance(&ks, &w, t.anchor, t.target).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    fn frozen_instance(seed: u64) -> (KernelSet, Vec<usize>, TripleSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ks = random_kernel_set(&mut rng, 3, 15);
        let labels: Vec<usize> = (0..15).map(|i| i % 3).collect();
        let dist = kernelspace::pairwise_distances(&ks, &KernelWeights::uniform(3)).unwrap();
        let ts =
            neighborhood::neighborhood(&dist, &labels, NeighborhoodSpec::new(2).unwrap()).unwrap();
        (ks, labels, ts)
    }

    #[test]
    fn assembled_lp_layout() {
        let (ks, _, ts) = frozen_instance(1);
        let hp = Hyperparams {
            mu: 0.7,
            lambda: 0.3,
            ..Hyperparams::default()
        };
        let p = assemble_lp(&ks, &ts, &hp).unwrap();
        let d = ks.len();
        assert_eq!(p.n_variables(), d + ts.len());
        assert_eq!(p.n_constraints(), ts.len());
        let pull = pull_coefficients(&ks, &ts);
        for m in 0..d {
            assert!((p.cost()[m] - (0.3 * pull[m] + 0.3)).abs() < 1e-12);
        }
        assert!(p.cost()[d..].iter().all(|c| (*c - 0.7).abs() < 1e-15));
        for (r, t) in ts.triples().iter().enumerate() {
            let row = margin_row(&ks, *t, ConstraintForm::Derived);
            for m in 0..d {
                assert_eq!(p.matrix()[[r, m]], row[m]);
            }
            for c in 0..ts.len() {
                assert_eq!(p.matrix()[[r, d + c]], if c == r { 1.0 } else { 0.0 });
            }
        }
        assert!(p.rhs().iter().all(|b| *b == 1.0));
        assert!(matches!(
            assemble_lp(&ks, &TripleSet::default(), &hp),
            Err(TrainError::EmptyTripleSet)
        ));
    }

    #[test]
    fn degenerate_tradeoffs() {
        let (ks, _, ts) = frozen_instance(2);
        let d = ks.len();
        let zero_mu = Hyperparams {
            mu: 0.0,
            lambda: 0.0,
            ..Hyperparams::default()
        };
        let s = lp::solve_with(
            &assemble_lp(&ks, &ts, &zero_mu).unwrap(),
            &SolverOptions::default(),
        );
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.values[..d].iter().all(|b| *b == 0.0));

        let huge = Hyperparams {
            lambda: 1e6,
            ..Hyperparams::default()
        };
        let s = lp::solve_with(
            &assemble_lp(&ks, &ts, &huge).unwrap(),
            &SolverOptions::default(),
        );
        assert!(s.values[..d].iter().all(|b| *b == 0.0));
        assert!(s.values[d..].iter().all(|x| (*x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn pull_identity_at_optimum() {
        let (ks, labels, _) = frozen_instance(3);
        let hp = Hyperparams {
            lambda: 0.05,
            outer_iters: 1,
            ..Hyperparams::default()
        };
        let run = train_detailed(&ks, &labels, &hp).unwrap();
        let round = &run.rounds[0];
        let w = KernelWeights::new(round.beta.clone()).unwrap();
        let pull = pull_coefficients(&ks, &round.triples);
        let lp_pull: f64 = (1.0 - hp.mu)
            * pull
                .iter()
                .zip(&round.beta)
                .map(|(p, b)| p * b)
                .sum::<f64>();
        let dist_sum: f64 = round
            .triples
            .target_pairs()
            .map(|(i, j)| rkhs_distance(&ks, &w, i, j).unwrap())
            .sum();
        assert!((lp_pull - 0.5 * (1.0 - hp.mu) * dist_sum).abs() < 1e-8);

        // Every margin constraint holds at the returned beta and xi.
        let beta = &round.beta;
        for (t, xi) in round.triples.triples().iter().zip(round.slacks()) {
            let row = margin_row(&ks, *t, hp.constraint_form);
            let lhs: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + xi;
            assert!(lhs >= 1.0 - 1e-7);
        }
    }

    fn blobs(seed: u64, per_class: usize, gap: f64) -> (Vec<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for c in 0..2 {
            for _ in 0..per_class {
                let z: f64 = rng.sample(StandardNormal);
                x.push(c as f64 * gap + 0.3 * z);
                y.push(c);
            }
        }
        (x, y)
    }

    #[test]
    fn separated_blobs_need_no_slack() {
        let (x, y) = blobs(9, 10, 10.0);
        let ks = gaussian_set(&[x]);
        let hp = Hyperparams {
            k: 2,
            lambda: 0.0,
            outer_iters: 1,
            ..Hyperparams::default()
        };
        let run = train_detailed(&ks, &y, &hp).unwrap();
        assert!(run.model.weights.beta[0] > 0.0);
        let w = &run.model.weights;
        let round = &run.rounds[0];
        assert!(round.slacks().iter().all(|xi| xi.abs() < 1e-9));
        for t in round.triples.triples() {
            let gap = rkhs_distance(&ks, w, t.anchor, t.impostor).unwrap()
                - rkhs_distance(&ks, w, t.anchor, t.target).unwrap();
            assert!(gap >= 1.0 - 1e-7);
        }
    }

    #[test]
    fn noise_kernel_is_dropped() {
        let (x, y) = blobs(12, 15, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let noise: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        let ks = gaussian_set(&[x, noise]);
        let hp = Hyperparams {
            k: 3,
            lambda: 1.0,
            ..Hyperparams::default()
        };
        let model = train(&ks, &y, &hp).unwrap();
        assert!(model.weights.beta[0] > model.weights.zero_tolerance);
        assert!(
            model.weights.beta[1] <= model.weights.zero_tolerance,
            "{:?}",
            model.weights
        );
    }

    #[test]
    fn best_round_is_selected() {
        let (ks, labels, _) = frozen_instance(5);
        for iters in [1, 3] {
            let hp = Hyperparams {
                outer_iters: iters,
                ..Hyperparams::default()
            };
            let model = train(&ks, &labels, &hp).unwrap();
            assert_eq!(model.objective_trace.len(), iters);
            let best = model
                .objective_trace
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            assert_eq!(model.objective_trace[model.selected_round], best);
            let mut running = f64::INFINITY;
            for v in &model.objective_trace {
                let next = running.min(*v);
                assert!(next <= running);
                running = next;
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (ks, labels, _) = frozen_instance(6);
        let hp = Hyperparams::default();
        let a = train(&ks, &labels, &hp).unwrap();
        let b = train(&ks, &labels, &hp).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn invalid_inputs() {
        let (ks, labels, _) = frozen_instance(7);
        for hp in [
            Hyperparams {
                mu: 1.5,
                ..Hyperparams::default()
            },
            Hyperparams {
                lambda: -1.0,
                ..Hyperparams::default()
            },
            Hyperparams {
                outer_iters: 0,
                ..Hyperparams::default()
            },
            Hyperparams {
                k: 0,
                ..Hyperparams::default()
            },
        ] {
            assert!(matches!(
                train(&ks, &labels, &hp),
                Err(TrainError::InvalidHyperparams(_))
            ));
        }
        assert!(matches!(
            train(&ks, &labels[..3], &Hyperparams::default()),
            Err(TrainError::LabelCountMismatch { .. })
        ));
        let mut single = labels.clone();
        single[0] = 7;
        assert!(matches!(
            train(
                &ks,
                &single,
                &Hyperparams {
                    k: 1,
                    ..Hyperparams::default()
                }
            ),
            Err(TrainError::Neighborhood(
                NeighborhoodError::SingletonClass { label: 7 }
            ))
        ));
    }

    #[test]
    fn sparsity_counts() {
        assert_eq!(sparsity(&KernelWeights::new(vec![0.0; 3]).unwrap()), 0);
        assert_eq!(
            sparsity(&KernelWeights::new(vec![1.0, 0.0, 1e-12]).unwrap()),
            1
        );
    }

    #[test]
    fn model_document_round_trip() {
        let (ks, labels, _) = frozen_instance(8);
        let model = train(&ks, &labels, &Hyperparams::default()).unwrap();
        let text = model.to_json();
        assert!(text.contains("\"format\": \"lmmk-model\""));
        let back = TrainedModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert!(TrainedModel::from_json(&text.replace("lmmk-model", "other")).is_err());
        assert!(TrainedModel::from_json("{").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn model_json_is_bit_exact(
                beta in proptest::collection::vec(0.0..1e3f64, 1..6),
                trace in proptest::collection::vec(-1e6..1e6f64, 1..4),
                mu in 0.0..1.0f64,
                lambda in 0.0..100.0f64,
            ) {
                let d = beta.len();
                let model = TrainedModel {
                    weights: KernelWeights::new(beta).unwrap(),
                    labels: vec![0, 1, 1, 0],
                    hyperparams: Hyperparams { mu, lambda, ..Hyperparams::default() },
                    objective_trace: trace.clone(),
                    lp_objective_trace: trace,
                    selected_round: 0,
                    kernel_names: (0..d).map(|m| format!("k{m}")).collect(),
                };
                let back = TrainedModel::from_json(&model.to_json()).unwrap();
                for (a, b) in back.weights.beta.iter().zip(&model.weights.beta) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
                prop_assert_eq!(back.hyperparams.mu.to_bits(), model.hyperparams.mu.to_bits());
                prop_assert_eq!(back, model);
            }
        }
    }
}
