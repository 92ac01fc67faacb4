//! Repeated-split evaluation, parameter sweeps, and cross-validated tuning.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{SplitSpec, SweepParameter, SweepSpec, TuneSpec};
use super::data::Dataset;
use super::split::{repetition_seed, stratified_folds, stratified_split, Split};
use super::PipelineError;
use crate::classify::{self, knn_predict};
use crate::kernelspace::KernelWeights;
use crate::lmmk::{self, Hyperparams, TrainedModel};

/// Mean, sample standard deviation, and range of a list of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// `std` uses the `n - 1` denominator and is 0 for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            // Summation rounding can push the mean just outside the range.
            mean: mean.clamp(
                values.iter().copied().fold(f64::INFINITY, f64::min),
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    /// kNN with uniform weights on the same split.
    pub baseline_accuracy: f64,
    pub nonzero: usize,
    pub beta_sum: f64,
    pub beta: Vec<f64>,
    pub used_fallback: bool,
    pub selected_round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedWeight {
    pub name: String,
    pub beta: f64,
}

/// Wall-clock seconds per stage, summed over repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StageTimings {
    pub kernels: f64,
    pub train: f64,
    pub predict: f64,
    pub baseline: f64,
    pub total: f64,
}

impl StageTimings {
    fn add(&mut self, other: &StageTimings) {
        self.kernels += other.kernels;
        self.train += other.train;
        self.predict += other.predict;
        self.baseline += other.baseline;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kernel_names: Vec<String>,
    pub class_names: Vec<String>,
    pub hyperparams: Hyperparams,
    pub predict_k: usize,
    pub split: SplitSpec,
    pub repetitions: Vec<Repetition>,
    pub accuracy: Summary,
    pub baseline_accuracy: Summary,
    pub nonzero: Summary,
    pub beta_sum: Summary,
    pub mean_beta: Vec<NamedWeight>,
    /// Kept out of the JSON document so reports stay reproducible byte for byte.
    #[serde(skip)]
    pub timings: StageTimings,
}

/// Models and report of one evaluation run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: EvalReport,
    pub models: Vec<TrainedModel>,
}

/// Scores of one train/test partition.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    pub model: TrainedModel,
    pub timings: StageTimings,
}

/// Trains on `split.train` and scores the learned and uniform weights on `split.test`.
pub fn evaluate_split(
    data: &Dataset,
    hp: &Hyperparams,
    predict_k: usize,
    split: &Split,
) -> Result<SplitOutcome, PipelineError> {
    let mut t = StageTimings::default();
    let clock = Instant::now();
    let sk = data.split_kernels(&split.train, &split.test)?;
    t.kernels = clock.elapsed().as_secs_f64();

    let train_labels: Vec<usize> = split.train.iter().map(|&i| data.labels()[i]).collect();
    let test_labels: Vec<usize> = split.test.iter().map(|&i| data.labels()[i]).collect();

    let clock = Instant::now();
    let model = lmmk::train(&sk.train, &train_labels, hp)?;
    t.train = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let report = knn_predict(&model, &sk.cross, &sk.train, predict_k)?;
    let acc = classify::accuracy(&report.predicted, &test_labels)?;
    t.predict = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let base = classify::knn_with_weights(
        &KernelWeights::uniform(sk.train.len()),
        &train_labels,
        &sk.cross,
        &sk.train,
        predict_k,
    )?;
    let base_acc = classify::accuracy(&base.predicted, &test_labels)?;
    t.baseline = clock.elapsed().as_secs_f64();
    Ok(SplitOutcome {
        accuracy: acc,
        baseline_accuracy: base_acc,
        model,
        timings: t,
    })
}

/// Seeded stratified splits, training and kNN scoring on each, and the
/// uniform-weight baseline on the same splits.
pub fn run_train(
    data: &Dataset,
    hp: &Hyperparams,
    predict_k: usize,
    spec: &SplitSpec,
) -> Result<TrainOutcome, PipelineError> {
    hp.validate()?;
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) || spec.repetitions == 0 {
        return Err(PipelineError::Config(format!(
            "invalid split specification {spec:?}"
        )));
    }
    let clock = Instant::now();
    let results: Vec<Result<_, PipelineError>> = (0..spec.repetitions)
        .into_par_iter()
        .map(|r| {
            let seed = repetition_seed(spec.seed, r);
            let split = stratified_split(data.labels(), spec.train_fraction, seed);
            evaluate_split(data, hp, predict_k, &split)
                .map(|out| (r, seed, split, out))
                .map_err(|e| e.in_repetition(r))
        })
        .collect();

    let d = data.n_kernels();
    let mut reps = Vec::with_capacity(spec.repetitions);
    let mut models = Vec::with_capacity(spec.repetitions);
    let mut timings = StageTimings::default();
    for res in results {
        let (index, seed, split, out) = res?;
        let SplitOutcome {
            accuracy,
            baseline_accuracy,
            model,
            timings: t,
        } = out;
        timings.add(&t);
        reps.push(Repetition {
            index,
            seed,
            n_train: split.train.len(),
            n_test: split.test.len(),
            accuracy,
            baseline_accuracy,
            nonzero: model.weights.nonzero_count(),
            beta_sum: model.weights.sum(),
            beta: model.weights.beta.clone(),
            used_fallback: model.is_degenerate(),
            selected_round: model.selected_round,
        });
        models.push(model);
    }
    timings.total = clock.elapsed().as_secs_f64();

    let collect = |f: fn(&Repetition) -> f64| -> Vec<f64> { reps.iter().map(f).collect() };
    let n = reps.len() as f64;
    let mean_beta = data
        .names()
        .iter()
        .enumerate()
        .map(|(m, name)| NamedWeight {
            name: name.clone(),
            beta: reps.iter().map(|r| r.beta[m]).sum::<f64>() / n,
        })
        .collect::<Vec<_>>();
    debug_assert_eq!(mean_beta.len(), d);
    let report = EvalReport {
        kernel_names: data.names().to_vec(),
        class_names: data.class_names().to_vec(),
        hyperparams: *hp,
        predict_k,
        split: *spec,
        accuracy: Summary::of(&collect(|r| r.accuracy)),
        baseline_accuracy: Summary::of(&collect(|r| r.baseline_accuracy)),
        nonzero: Summary::of(&collect(|r| r.nonzero as f64)),
        beta_sum: Summary::of(&collect(|r| r.beta_sum)),
        mean_beta,
        repetitions: reps,
        timings,
    };
    Ok(TrainOutcome { report, models })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub mean_baseline_accuracy: Option<f64>,
    pub mean_nonzero: Option<f64>,
    pub mean_beta_sum: Option<f64>,
    pub fallback_count: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub base_hyperparams: Hyperparams,
    pub split: SplitSpec,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// Columnar CSV for plotting; failed points leave their cells empty.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{},mean_accuracy,std_accuracy,mean_baseline_accuracy,mean_nonzero,mean_beta_sum,fallback_count,error\n",
            self.parameter
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for p in &self.points {
            out.push_str(&format!(
                "{:?},{},{},{},{},{},{},{}\n",
                p.value,
                opt(p.mean_accuracy),
                opt(p.std_accuracy),
                opt(p.mean_baseline_accuracy),
                opt(p.mean_nonzero),
                opt(p.mean_beta_sum),
                p.fallback_count.map(|c| c.to_string()).unwrap_or_default(),
                p.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            ));
        }
        out
    }
}

/// One `run_train` per grid value with shared seeds. A failing point is
/// recorded and the sweep continues.
pub fn run_sweep(
    data: &Dataset,
    base: &Hyperparams,
    predict_k: Option<usize>,
    split: &SplitSpec,
    sweep: &SweepSpec,
) -> Result<SweepReport, PipelineError> {
    if sweep.values.is_empty() {
        return Err(PipelineError::Config("sweep grid is empty".into()));
    }
    let points = sweep
        .values
        .iter()
        .map(|&value| {
            let outcome = sweep
                .parameter
                .apply(base, value)
                .and_then(|hp| run_train(data, &hp, predict_k.unwrap_or(hp.k), split));
            match outcome {
                Ok(o) => {
                    let r = &o.report;
                    SweepPoint {
                        value,
                        mean_accuracy: Some(r.accuracy.mean),
                        std_accuracy: Some(r.accuracy.std),
                        mean_baseline_accuracy: Some(r.baseline_accuracy.mean),
                        mean_nonzero: Some(r.nonzero.mean),
                        mean_beta_sum: Some(r.beta_sum.mean),
                        fallback_count: Some(
                            r.repetitions.iter().filter(|x| x.used_fallback).count(),
                        ),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("sweep point {} = {value}: {e}", sweep.parameter);
                    SweepPoint {
                        value,
                        mean_accuracy: None,
                        std_accuracy: None,
                        mean_baseline_accuracy: None,
                        mean_nonzero: None,
                        mean_beta_sum: None,
                        fallback_count: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(SweepReport {
        parameter: sweep.parameter,
        base_hyperparams: *base,
        split: *split,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunePoint {
    pub k: usize,
    pub mu: f64,
    pub lambda: f64,
    pub mean_accuracy: Option<f64>,
    pub mean_nonzero: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub folds: usize,
    pub seed: u64,
    pub n_train: usize,
    /// Grid over `(k, mu)` at the base `lambda`.
    pub stage_k_mu: Vec<TunePoint>,
    /// Grid over `lambda` at the selected `(k, mu)`.
    pub stage_lambda: Vec<TunePoint>,
    pub selected: Hyperparams,
}

fn cv_score(
    data: &Dataset,
    folds: &[Split],
    hp: &Hyperparams,
    predict_k: Option<usize>,
) -> Result<(f64, f64), PipelineError> {
    let mut acc = 0.0;
    let mut nnz = 0.0;
    for f in folds {
        let out = evaluate_split(data, hp, predict_k.unwrap_or(hp.k), f)?;
        acc += out.accuracy;
        nnz += out.model.weights.nonzero_count() as f64;
    }
    let n = folds.len() as f64;
    Ok((acc / n, nnz / n))
}

fn score_grid(
    data: &Dataset,
    folds: &[Split],
    grid: Vec<Hyperparams>,
    predict_k: Option<usize>,
) -> Vec<TunePoint> {
    grid.into_par_iter()
        .map(|hp| {
            let res = cv_score(data, folds, &hp, predict_k);
            let (mean_accuracy, mean_nonzero, error) = match res {
                Ok((a, n)) => (Some(a), Some(n), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            TunePoint {
                k: hp.k,
                mu: hp.mu,
                lambda: hp.lambda,
                mean_accuracy,
                mean_nonzero,
                error,
            }
        })
        .collect()
}

/// Highest accuracy; ties go to the sparser model, then to grid order.
fn best(points: &[TunePoint]) -> Option<&TunePoint> {
    points
        .iter()
        .filter(|p| p.mean_accuracy.is_some())
        .min_by(|a, b| {
            b.mean_accuracy
                .unwrap()
                .total_cmp(&a.mean_accuracy.unwrap())
                .then(a.mean_nonzero.unwrap().total_cmp(&b.mean_nonzero.unwrap()))
        })
}

/// Cross-validated grid search on `train` (indices into `data`): `(k, mu)`
/// first at the base `lambda`, then `lambda` at the chosen pair.
pub fn tune(
    data: &Dataset,
    train: &[usize],
    base: &Hyperparams,
    predict_k: Option<usize>,
    spec: &TuneSpec,
    seed: u64,
) -> Result<TuneReport, PipelineError> {
    if spec.folds < 2 || spec.k.is_empty() || spec.mu.is_empty() || spec.lambda.is_empty() {
        return Err(PipelineError::Config(
            "tuning needs >= 2 folds and nonempty grids".into(),
        ));
    }
    let folds = stratified_folds(data.labels(), train, spec.folds, seed);
    let grid = spec
        .k
        .iter()
        .flat_map(|&k| {
            spec.mu
                .iter()
                .map(move |&mu| Hyperparams { k, mu, ..*base })
        })
        .collect();
    let stage_k_mu = score_grid(data, &folds, grid, predict_k);
    let first = best(&stage_k_mu).ok_or_else(|| {
        PipelineError::AllFailed(
            stage_k_mu
                .iter()
                .find_map(|p| p.error.clone())
                .unwrap_or_default(),
        )
    })?;
    let (k, mu) = (first.k, first.mu);
    let grid = spec
        .lambda
        .iter()
        .map(|&lambda| Hyperparams {
            k,
            mu,
            lambda,
            ..*base
        })
        .collect();
    let stage_lambda = score_grid(data, &folds, grid, predict_k);
    let second = best(&stage_lambda).ok_or_else(|| {
        PipelineError::AllFailed(
            stage_lambda
                .iter()
                .find_map(|p| p.error.clone())
                .unwrap_or_default(),
        )
    })?;
    let selected = Hyperparams {
        k,
        mu,
        lambda: second.lambda,
        ..*base
    };
    Ok(TuneReport {
        folds: spec.folds,
        seed,
        n_train: train.len(),
        stage_k_mu,
        stage_lambda,
        selected,
    })
}

/// Training indices of the first repetition, where tuning runs.
pub fn tuning_split(data: &Dataset, spec: &SplitSpec) -> Split {
    stratified_split(
        data.labels(),
        spec.train_fraction,
        repetition_seed(spec.seed, 0),
    )
}
