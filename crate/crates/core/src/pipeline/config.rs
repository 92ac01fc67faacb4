//! Run configuration, read from JSON and overridable field by field.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::lmmk::Hyperparams;

/// How base kernels are derived from the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// One Gaussian kernel per raw feature column.
    #[default]
    PerFeature,
    /// One Gaussian kernel per named block of columns (`block/feature` headers).
    PerRepresentation,
    /// Kernel or distance matrices supplied directly.
    Precomputed,
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelMode::PerFeature => "per-feature",
            KernelMode::PerRepresentation => "per-representation",
            KernelMode::Precomputed => "precomputed",
        })
    }
}

impl FromStr for KernelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "per-feature" | "perfeature" | "feature" => Ok(Self::PerFeature),
            "per-representation" | "perrepresentation" | "representation" => {
                Ok(Self::PerRepresentation)
            }
            "precomputed" => Ok(Self::Precomputed),
            other => Err(format!("unknown kernel mode '{other}'")),
        }
    }
}

/// Whether a precomputed matrix holds similarities or dissimilarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    #[default]
    Kernel,
    /// Turned into a Gaussian kernel with the mean-distance bandwidth.
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub kind: MatrixKind,
    /// Raw self-similarities `K(z, z)` of the query points, for test-by-train
    /// kernel blocks that are not already normalized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_values: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            repetitions: 10,
            seed: 0,
        }
    }
}

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    K,
    Mu,
    Lambda,
    OuterIters,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::K => "k",
            SweepParameter::Mu => "mu",
            SweepParameter::Lambda => "lambda",
            SweepParameter::OuterIters => "outer-iters",
        })
    }
}

impl FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "k" => Ok(Self::K),
            "mu" => Ok(Self::Mu),
            "lambda" => Ok(Self::Lambda),
            "outer-iters" => Ok(Self::OuterIters),
            other => Err(format!("unknown sweep parameter '{other}'")),
        }
    }
}

impl SweepParameter {
    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &Hyperparams, value: f64) -> Result<Hyperparams, PipelineError> {
        let mut hp = *base;
        let count = |v: f64| -> Result<usize, PipelineError> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(PipelineError::Config(format!(
                    "{self} must be a whole number, got {v}"
                )))
            }
        };
        match self {
            SweepParameter::K => hp.k = count(value)?,
            SweepParameter::Mu => hp.mu = value,
            SweepParameter::Lambda => hp.lambda = value,
            SweepParameter::OuterIters => hp.outer_iters = count(value)?,
        }
        Ok(hp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Grids for cross-validated tuning on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSpec {
    pub folds: usize,
    pub k: Vec<usize>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for TuneSpec {
    fn default() -> Self {
        Self {
            folds: 3,
            k: vec![1, 3, 5],
            mu: vec![0.25, 0.5, 0.75],
            lambda: vec![0.0, 0.1, 1.0, 10.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Headered CSV of raw features, one row per sample.
    pub features: Option<PathBuf>,
    /// Base matrices for precomputed mode.
    pub matrices: Vec<MatrixSpec>,
    /// Headered CSV of class labels.
    pub labels: Option<PathBuf>,
    pub kernel_mode: KernelMode,
    pub hyperparams: Hyperparams,
    /// Neighbors used for prediction; defaults to the training `k`.
    pub predict_k: Option<usize>,
    pub split: SplitSpec,
    pub sweep: Option<SweepSpec>,
    pub tune: TuneSpec,
    /// Query points for `predict`: a feature CSV, or test-by-train matrices.
    pub test_features: Option<PathBuf>,
    pub test_matrices: Vec<MatrixSpec>,
    pub test_labels: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a JSON config; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.features,
            &mut self.labels,
            &mut self.test_features,
            &mut self.test_labels,
            &mut self.output,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for m in self
            .matrices
            .iter_mut()
            .chain(self.test_matrices.iter_mut())
        {
            fix(&mut m.path);
            if let Some(s) = m.self_values.as_mut() {
                fix(s);
            }
        }
    }

    pub fn prediction_k(&self) -> usize {
        self.predict_k.unwrap_or(self.hyperparams.k)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: String| Err(PipelineError::Config(msg));
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return fail(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.split.train_fraction
            ));
        }
        if self.split.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        if self.predict_k == Some(0) {
            return fail("predict_k must be at least 1".into());
        }
        self.hyperparams
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.labels.is_none() {
            return fail("no labels file given".into());
        }
        match self.kernel_mode {
            KernelMode::PerFeature | KernelMode::PerRepresentation => {
                if self.features.is_none() {
                    return fail(format!(
                        "kernel mode {} needs a features file",
                        self.kernel_mode
                    ));
                }
            }
            KernelMode::Precomputed => {
                if self.matrices.is_empty() {
                    return fail("precomputed mode needs at least one matrix".into());
                }
            }
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> Result<&SweepSpec, PipelineError> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| PipelineError::Config("no sweep specification".into()))?;
        if sweep.values.is_empty() {
            return Err(PipelineError::Config("sweep grid is empty".into()));
        }
        Ok(sweep)
    }

    pub fn validate_tune(&self) -> Result<(), PipelineError> {
        let t = &self.tune;
        if t.folds < 2 {
            return Err(PipelineError::Config(
                "tuning needs at least 2 folds".into(),
            ));
        }
        if t.k.is_empty() || t.mu.is_empty() || t.lambda.is_empty() {
            return Err(PipelineError::Config(
                "tuning grids must be nonempty".into(),
            ));
        }
        Ok(())
    }
}
