//! Seeded synthetic datasets: Gaussian classes with informative and noise dimensions.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::KernelMode;
use super::data::Dataset;
use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub n_classes: usize,
    /// Dimensions whose class means differ.
    pub informative: usize,
    /// Pure standard-normal dimensions.
    pub noise: usize,
    /// Radius of the circle the class means sit on.
    pub separation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    /// Informative columns first, then noise.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub header: Vec<String>,
}

/// Class `c` has mean `separation * cos(2 pi c / C + pi m / informative)` on
/// informative dimension `m` and zero elsewhere; all dimensions have unit
/// variance. Samples are ordered class by class.
pub fn gaussian_classes(spec: &SyntheticSpec) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dims = spec.informative + spec.noise;
    let n = spec.n_per_class * spec.n_classes;
    let mut features = Array2::zeros((n, dims));
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.n_classes {
        for s in 0..spec.n_per_class {
            let row = c * spec.n_per_class + s;
            for m in 0..dims {
                let mean = if m < spec.informative {
                    let phase = 2.0 * PI * c as f64 / spec.n_classes as f64
                        + PI * m as f64 / spec.informative as f64;
                    spec.separation * phase.cos()
                } else {
                    0.0
                };
                let z: f64 = StandardNormal.sample(&mut rng);
                features[[row, m]] = mean + z;
            }
            labels.push(c);
        }
    }
    let header = (0..dims)
        .map(|m| {
            if m < spec.informative {
                format!("info{m}")
            } else {
                format!("noise{}", m - spec.informative)
            }
        })
        .collect();
    Synthetic {
        features,
        labels,
        header,
    }
}

impl Synthetic {
    pub fn class_names(&self) -> Vec<String> {
        let n = self.labels.iter().max().map_or(0, |m| m + 1);
        (0..n).map(|c| format!("class{c}")).collect()
    }

    /// Per-representation mode puts every column in its own block.
    pub fn dataset(&self, mode: KernelMode) -> Result<Dataset, PipelineError> {
        let header: Vec<String> = match mode {
            KernelMode::PerRepresentation => self.header.iter().map(|h| format!("{h}/0")).collect(),
            _ => self.header.clone(),
        };
        Dataset::from_features(
            self.features.view(),
            &header,
            self.labels.clone(),
            self.class_names(),
            mode,
        )
    }

    /// Writes `features` and `labels` as headered CSV files.
    pub fn write_csv(&self, features: &Path, labels: &Path) -> Result<(), PipelineError> {
        let mut text = self.header.join(",");
        text.push('\n');
        for row in self.features.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        std::fs::write(features, text).map_err(|e| PipelineError::io(features, e))?;
        let names = self.class_names();
        let mut text = String::from("label\n");
        for &l in &self.labels {
            writeln!(text, "{}", names[l]).unwrap();
        }
        std::fs::write(labels, text).map_err(|e| PipelineError::io(labels, e))
    }
}
