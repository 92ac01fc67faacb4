//! Command-line driver for large-margin multiple kernel learning.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lmmk::classify::{self, PredictionReport};
use lmmk::lmmk::ConstraintForm;
use lmmk::pipeline::data::{self, write_matrix_binary};
use lmmk::pipeline::{
    self, ErrorKind, KernelMode, MatrixKind, MatrixSpec, PipelineError, RunConfig, SweepParameter,
    SweepSpec,
};
use lmmk::TrainedModel;

#[derive(Parser)]
#[command(
    name = "lmmk",
    version,
    about = "Large-margin multiple kernel learning for kNN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build normalized base kernels on all samples and write them as binary matrices.
    BuildKernels {
        #[command(flatten)]
        common: Common,
    },
    /// Train on all labeled samples and write the model.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Label query points with a trained model.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test_features: Option<PathBuf>,
        #[arg(long)]
        test_labels: Option<PathBuf>,
        #[arg(long)]
        predict_k: Option<usize>,
    },
    /// Repeated stratified splits: learned weights against the uniform baseline.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Also write the model of the first repetition.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// One evaluation per value of a hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: Option<SweepParameter>,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Columnar CSV for plotting.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Cross-validated grid search on the training split.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        folds: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long)]
    constraint_form: Option<ConstraintForm>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kernel_mode: Option<KernelMode>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, PipelineError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let hp = &mut c.hyperparams;
        if let Some(v) = self.k {
            hp.k = v;
        }
        if let Some(v) = self.mu {
            hp.mu = v;
        }
        if let Some(v) = self.lambda {
            hp.lambda = v;
        }
        if let Some(v) = self.outer_iters {
            hp.outer_iters = v;
        }
        if let Some(v) = self.constraint_form {
            hp.constraint_form = v;
        }
        if let Some(v) = self.train_fraction {
            c.split.train_fraction = v;
        }
        if let Some(v) = self.reps {
            c.split.repetitions = v;
        }
        if let Some(v) = self.seed {
            c.split.seed = v;
        }
        if let Some(v) = self.kernel_mode {
            c.kernel_mode = v;
        }
        if let Some(v) = &self.features {
            c.features = Some(v.clone());
        }
        if let Some(v) = &self.labels {
            c.labels = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.output = Some(v.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

/// Writes the command's JSON document to the output path or stdout.
fn emit<T: Serialize>(config: &RunConfig, doc: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(doc).expect("reports are serializable") + "\n";
    match &config.output {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct KernelManifest {
    n_samples: usize,
    matrices: Vec<MatrixSpec>,
    bandwidths: Vec<Option<f64>>,
}

fn build_kernels(config: &RunConfig) -> Result<(), PipelineError> {
    let out_dir = config
        .output
        .clone()
        .ok_or_else(|| PipelineError::Config("build-kernels needs --out <directory>".into()))?;
    std::fs::create_dir_all(&out_dir).map_err(|e| PipelineError::io(&out_dir, e))?;
    let data = pipeline::ingest(config)?;
    let all: Vec<usize> = (0..data.n_samples()).collect();
    let (ks, bandwidths) = data.train_kernels(&all)?;
    let mut matrices = Vec::new();
    for (m, kernel) in ks.kernels().iter().enumerate() {
        let file = format!("kernel_{m:03}.bin");
        write_matrix_binary(&out_dir.join(&file), kernel.values())?;
        matrices.push(MatrixSpec {
            name: ks.names()[m].clone(),
            path: file.into(),
            kind: MatrixKind::Kernel,
            self_values: None,
        });
    }
    let manifest = KernelManifest {
        n_samples: ks.n_samples(),
        matrices,
        bandwidths,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest is serializable") + "\n";
    write_text(&out_dir.join("manifest.json"), &text)?;
    print!("{text}");
    Ok(())
}

fn train(config: &RunConfig) -> Result<(), PipelineError> {
    let data = pipeline::ingest(config)?;
    let all: Vec<usize> = (0..data.n_samples()).collect();
    let (ks, _) = data.train_kernels(&all)?;
    let model = lmmk::train(&ks, data.labels(), &config.hyperparams)?;
    let text = model.to_json() + "\n";
    match &config.output {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct PredictionDocument {
    k: usize,
    predicted: Vec<String>,
    predicted_ids: Vec<usize>,
    accuracy: Option<f64>,
    confusion: Option<Vec<Vec<usize>>>,
    class_names: Vec<String>,
    used_fallback: bool,
}

fn predict(config: &RunConfig, model_path: &Path) -> Result<(), PipelineError> {
    let text = std::fs::read_to_string(model_path).map_err(|e| PipelineError::io(model_path, e))?;
    let model = TrainedModel::from_json(&text)?;
    let data = pipeline::ingest(config)?;
    if model.labels != data.labels() || model.kernel_names != data.names() {
        return Err(PipelineError::Config(
            "the model was not trained on the configured samples".into(),
        ));
    }
    let all: Vec<usize> = (0..data.n_samples()).collect();
    let (ks, bandwidths) = data.train_kernels(&all)?;
    let query = pipeline::ingest_query(config)?;
    let cross = data.query_kernels(&all, &bandwidths, &query)?;
    let k = config.prediction_k();
    let mut report: PredictionReport =
        classify::knn_predict(&model, &cross, &ks, k)?.without_neighbors();
    if let Some(p) = &config.test_labels {
        let truth = data::encode_with(&data::read_labels(p)?, data.class_names())?;
        report = report.score(&truth, data.n_classes())?;
    }
    let doc = PredictionDocument {
        k,
        predicted: report
            .predicted
            .iter()
            .map(|&c| data.class_names()[c].clone())
            .collect(),
        predicted_ids: report.predicted,
        accuracy: report.accuracy,
        confusion: report.confusion,
        class_names: data.class_names().to_vec(),
        used_fallback: report.used_fallback,
    };
    emit(config, &doc)
}

fn evaluate(config: &RunConfig, model_out: Option<&Path>) -> Result<(), PipelineError> {
    let data = pipeline::ingest(config)?;
    let outcome = pipeline::run_train(
        &data,
        &config.hyperparams,
        config.prediction_k(),
        &config.split,
    )?;
    if let Some(p) = model_out {
        write_text(p, &(outcome.models[0].to_json() + "\n"))?;
    }
    if let Some(out) = &config.output {
        let mut sidecar = out.clone().into_os_string();
        sidecar.push(".timings.json");
        let text =
            serde_json::to_string_pretty(&outcome.report.timings).expect("serializable") + "\n";
        write_text(Path::new(&sidecar), &text)?;
    }
    emit(config, &outcome.report)
}

fn sweep(config: &RunConfig, csv: Option<&Path>) -> Result<(), PipelineError> {
    let spec = config.validate_sweep()?;
    let data = pipeline::ingest(config)?;
    let report = pipeline::run_sweep(
        &data,
        &config.hyperparams,
        config.predict_k,
        &config.split,
        spec,
    )?;
    if let Some(p) = csv {
        write_text(p, &report.to_csv())?;
    }
    emit(config, &report)
}

fn tune(config: &RunConfig) -> Result<(), PipelineError> {
    config.validate_tune()?;
    let data = pipeline::ingest(config)?;
    let split = pipeline::tuning_split(&data, &config.split);
    let report = pipeline::tune(
        &data,
        &split.train,
        &config.hyperparams,
        config.predict_k,
        &config.tune,
        config.split.seed,
    )?;
    emit(config, &report)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Some(n) = pipeline::threads_from_env()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::BuildKernels { common } => build_kernels(&common.config()?),
        Command::Train { common } => train(&common.config()?),
        Command::Predict {
            common,
            model,
            test_features,
            test_labels,
            predict_k,
        } => {
            let mut c = common.config()?;
            if test_features.is_some() {
                c.test_features = test_features;
            }
            if test_labels.is_some() {
                c.test_labels = test_labels;
            }
            if predict_k.is_some() {
                c.predict_k = predict_k;
            }
            c.validate()?;
            predict(&c, &model)
        }
        Command::Evaluate { common, model_out } => {
            evaluate(&common.config()?, model_out.as_deref())
        }
        Command::Sweep {
            common,
            param,
            values,
            csv,
        } => {
            let mut c = common.config()?;
            match (param, values) {
                (Some(parameter), Some(values)) => c.sweep = Some(SweepSpec { parameter, values }),
                (Some(parameter), None) => match c.sweep.as_mut() {
                    Some(s) => s.parameter = parameter,
                    None => return Err(PipelineError::Config("--param needs --values".into())),
                },
                (None, Some(values)) => match c.sweep.as_mut() {
                    Some(s) => s.values = values,
                    None => return Err(PipelineError::Config("--values needs --param".into())),
                },
                (None, None) => {}
            }
            sweep(&c, csv.as_deref())
        }
        Command::Tune { common, folds } => {
            let mut c = common.config()?;
            if let Some(f) = folds {
                c.tune.folds = f;
            }
            tune(&c)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Solver => 4,
            })
        }
    }
}
