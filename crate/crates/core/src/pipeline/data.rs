//! File formats, ingestion, and per-split kernel construction.
//!
//! Labels and raw features are headered CSV files. Matrices are either
//! headered CSV (the header row is ignored) or a binary block:
//!
//! ```text
//! bytes 0..8    magic "LMMKMAT1"
//! bytes 8..12   rows, u32 little-endian
//! bytes 12..16  cols, u32 little-endian
//! then          rows * cols f64 little-endian, row-major
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::config::{KernelMode, MatrixKind, MatrixSpec, RunConfig};
use super::PipelineError;
use crate::kernelspace::{
    self, CrossKernelSet, DistanceMatrix, KernelError, KernelMatrix, KernelSet,
};

pub const MATRIX_MAGIC: &[u8; 8] = b"LMMKMAT1";

fn csv_reader(path: &Path) -> Result<csv::Reader<File>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> PipelineError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    PipelineError::Parse {
        path: path.to_path_buf(),
        line,
        column: 0,
        message: e.to_string(),
    }
}

/// A numeric table with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub values: Array2<f64>,
}

/// Reads a headered CSV whose cells are all numbers.
pub fn read_table(path: &Path) -> Result<Table, PipelineError> {
    let mut reader = csv_reader(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let width = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows + 2);
        if record.len() != width {
            return Err(PipelineError::Parse {
                path: path.to_path_buf(),
                line,
                column: record.len().min(width) + 1,
                message: format!(
                    "row {} has {} fields, header has {width}",
                    rows + 1,
                    record.len()
                ),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| PipelineError::Parse {
                path: path.to_path_buf(),
                line,
                column: c + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(PipelineError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: c + 1,
                    message: format!("'{cell}' is not finite"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, width), data).expect("row widths checked");
    Ok(Table { header, values })
}

/// Reads the label column: the one named `label`, otherwise the last one.
pub fn read_labels(path: &Path) -> Result<Vec<String>, PipelineError> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() {
        return Err(PipelineError::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "missing header".into(),
        });
    }
    let column = header
        .iter()
        .position(|h| h.eq_ignore_ascii_case("label"))
        .unwrap_or(header.len() - 1);
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(labels.len() + 2);
        if record.len() != header.len() {
            return Err(PipelineError::Parse {
                path: path.to_path_buf(),
                line,
                column: record.len().min(header.len()) + 1,
                message: format!(
                    "row {} has {} fields, header has {}",
                    labels.len() + 1,
                    record.len(),
                    header.len()
                ),
            });
        }
        let label = &record[column];
        if label.is_empty() {
            return Err(PipelineError::Parse {
                path: path.to_path_buf(),
                line,
                column: column + 1,
                message: "empty label".into(),
            });
        }
        labels.push(label.to_string());
    }
    Ok(labels)
}

/// Maps label strings to ids in sorted order of the distinct labels.
pub fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let classes: Vec<String> = raw
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let ids = raw
        .iter()
        .map(|l| {
            classes
                .binary_search(l)
                .expect("label is in its own class list")
        })
        .collect();
    (ids, classes)
}

/// Maps labels onto an existing class list.
pub fn encode_with(raw: &[String], classes: &[String]) -> Result<Vec<usize>, PipelineError> {
    raw.iter()
        .map(|l| {
            classes
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| PipelineError::UnknownLabel(l.clone()))
        })
        .collect()
}

/// Reads a matrix in binary or headered CSV form.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>, PipelineError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| PipelineError::io(path, e))?;
    if !bytes.starts_with(MATRIX_MAGIC) {
        return Ok(read_table(path)?.values);
    }
    let bad = |message: String| PipelineError::Parse {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message,
    };
    if bytes.len() < 16 {
        return Err(bad("truncated binary header".into()));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != rows * cols * 8 {
        return Err(bad(format!(
            "binary body holds {} bytes, expected {} for {rows}x{cols}",
            body.len(),
            rows * cols * 8
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn write_matrix_binary(path: &Path, m: ArrayView2<f64>) -> Result<(), PipelineError> {
    let (rows, cols) = m.dim();
    let err = |e| PipelineError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    w.write_all(MATRIX_MAGIC).map_err(err)?;
    w.write_all(&(rows as u32).to_le_bytes()).map_err(err)?;
    w.write_all(&(cols as u32).to_le_bytes()).map_err(err)?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes()).map_err(err)?;
    }
    w.flush().map_err(err)
}

pub fn write_matrix_csv(path: &Path, m: ArrayView2<f64>) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let to_err = |e: csv::Error| PipelineError::Config(format!("{}: {e}", path.display()));
    w.write_record((0..m.ncols()).map(|j| format!("c{j}")))
        .map_err(to_err)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Where one base kernel comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseSource {
    /// Samples by dimensions; Euclidean distance, then a Gaussian kernel.
    /// `columns` locates the block in the raw feature table.
    Points {
        columns: Vec<usize>,
        values: Array2<f64>,
    },
    /// Precomputed distances, turned into a Gaussian kernel.
    Distance(DistanceMatrix),
    /// Precomputed kernel, normalized on load.
    Kernel {
        kernel: KernelMatrix,
        raw_diagonal: Vec<f64>,
    },
}

/// Query points for prediction outside the loaded sample set.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    /// Raw feature rows with the same columns as the training table.
    Features(Array2<f64>),
    /// One query-by-sample matrix per base kernel, with optional raw
    /// self-similarities for kernel sources.
    Matrices(Vec<(Array2<f64>, Option<Vec<f64>>)>),
}

impl Query {
    pub fn n_queries(&self) -> usize {
        match self {
            Query::Features(f) => f.nrows(),
            Query::Matrices(m) => m.first().map_or(0, |(a, _)| a.nrows()),
        }
    }
}

/// Kernels for one train/test partition.
#[derive(Debug, Clone)]
pub struct SplitKernels {
    pub train: KernelSet,
    pub cross: CrossKernelSet,
    /// Gaussian bandwidth per kernel, fitted on the training part.
    pub bandwidths: Vec<Option<f64>>,
}

/// Labeled samples with their base-kernel sources.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    sources: Vec<BaseSource>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    n_samples: usize,
}

impl Dataset {
    /// Raw features in per-feature or per-representation mode.
    pub fn from_features(
        features: ArrayView2<f64>,
        header: &[String],
        labels: Vec<usize>,
        class_names: Vec<String>,
        mode: KernelMode,
    ) -> Result<Self, PipelineError> {
        if header.len() != features.ncols() {
            return Err(PipelineError::ShapeMismatch {
                what: "feature header",
                expected: features.ncols(),
                found: header.len(),
            });
        }
        let groups: Vec<(String, Vec<usize>)> = match mode {
            KernelMode::PerFeature => header
                .iter()
                .enumerate()
                .map(|(j, h)| (h.clone(), vec![j]))
                .collect(),
            KernelMode::PerRepresentation => {
                let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
                for (j, h) in header.iter().enumerate() {
                    let Some((block, _)) = h.split_once('/') else {
                        return Err(PipelineError::Parse {
                            path: Default::default(),
                            line: 1,
                            column: j + 1,
                            message: format!("column '{h}' has no 'block/' prefix"),
                        });
                    };
                    match groups.iter_mut().find(|(b, _)| b == block) {
                        Some((_, cols)) => cols.push(j),
                        None => groups.push((block.to_string(), vec![j])),
                    }
                }
                groups
            }
            KernelMode::Precomputed => {
                return Err(PipelineError::Config(
                    "precomputed mode takes matrices, not features".into(),
                ))
            }
        };
        let (names, sources) = groups
            .into_iter()
            .map(|(name, columns)| {
                let values = features.select(Axis(1), &columns);
                (name, BaseSource::Points { columns, values })
            })
            .unzip();
        Self::new(names, sources, labels, class_names)
    }

    /// Precomputed matrices; kernels are normalized to a unit diagonal here.
    pub fn from_matrices(
        matrices: Vec<(String, MatrixKind, Array2<f64>)>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, PipelineError> {
        let mut names = Vec::new();
        let mut sources = Vec::new();
        for (name, kind, values) in matrices {
            let source = match kind {
                MatrixKind::Distance => BaseSource::Distance(DistanceMatrix::new(values)?),
                MatrixKind::Kernel => {
                    let raw = KernelMatrix::new(values)?;
                    kernelspace::check_psd(&raw, &name);
                    let raw_diagonal = raw.diagonal();
                    BaseSource::Kernel {
                        kernel: kernelspace::normalize_kernel(&raw)?,
                        raw_diagonal,
                    }
                }
            };
            names.push(name);
            sources.push(source);
        }
        Self::new(names, sources, labels, class_names)
    }

    fn new(
        names: Vec<String>,
        sources: Vec<BaseSource>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, PipelineError> {
        if sources.is_empty() {
            return Err(KernelError::EmptyKernelSet.into());
        }
        let n_samples = labels.len();
        for (name, s) in names.iter().zip(&sources) {
            let n = match s {
                BaseSource::Points { values, .. } => values.nrows(),
                BaseSource::Distance(d) => d.n_samples(),
                BaseSource::Kernel { kernel, .. } => kernel.n_samples(),
            };
            if n != n_samples {
                return Err(PipelineError::ShapeMismatch {
                    what: if name.is_empty() {
                        "samples"
                    } else {
                        "samples per label"
                    },
                    expected: n_samples,
                    found: n,
                });
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(PipelineError::UnknownLabel(bad.to_string()));
        }
        Ok(Self {
            names,
            sources,
            labels,
            class_names,
            n_samples,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sources(&self) -> &[BaseSource] {
        &self.sources
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_kernels(&self) -> usize {
        self.sources.len()
    }

    /// Normalized kernels on the `train` samples, with fitted bandwidths.
    pub fn train_kernels(
        &self,
        train: &[usize],
    ) -> Result<(KernelSet, Vec<Option<f64>>), PipelineError> {
        self.check_indices(train)?;
        let built: Vec<(KernelMatrix, Option<f64>)> = self
            .sources
            .par_iter()
            .map(|s| -> Result<_, KernelError> {
                match s {
                    BaseSource::Points { values, .. } => {
                        let pts = values.select(Axis(0), train);
                        gaussian_on(&DistanceMatrix::euclidean(pts.view())?)
                    }
                    BaseSource::Distance(d) => gaussian_on(&d.select(train)),
                    BaseSource::Kernel { kernel, .. } => Ok((kernel.select(train), None)),
                }
            })
            .collect::<Result<_, _>>()?;
        let (kernels, bandwidths): (Vec<_>, Vec<_>) = built.into_iter().unzip();
        Ok((KernelSet::new(kernels, self.names.clone())?, bandwidths))
    }

    /// Training kernels on `train` and cross kernels from `test` to `train`.
    pub fn split_kernels(
        &self,
        train: &[usize],
        test: &[usize],
    ) -> Result<SplitKernels, PipelineError> {
        self.check_indices(test)?;
        let (ks, bandwidths) = self.train_kernels(train)?;
        let cross: Vec<Array2<f64>> = self
            .sources
            .par_iter()
            .zip(&bandwidths)
            .map(|(s, delta)| -> Result<_, KernelError> {
                match s {
                    BaseSource::Points { values, .. } => {
                        let a = values.select(Axis(0), test);
                        let b = values.select(Axis(0), train);
                        let d = kernelspace::euclidean_cross(a.view(), b.view());
                        kernelspace::gaussian_cross(d.view(), delta.expect("fitted"))
                    }
                    BaseSource::Distance(d) => kernelspace::gaussian_cross(
                        d.block(test, train).view(),
                        delta.expect("fitted"),
                    ),
                    BaseSource::Kernel { kernel, .. } => Ok(kernel.block(test, train)),
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(SplitKernels {
            train: ks,
            cross: CrossKernelSet::normalized(cross)?,
            bandwidths,
        })
    }

    /// Cross kernels from external query points to the `train` samples.
    pub fn query_kernels(
        &self,
        train: &[usize],
        bandwidths: &[Option<f64>],
        query: &Query,
    ) -> Result<CrossKernelSet, PipelineError> {
        self.check_indices(train)?;
        let mut cross = Vec::with_capacity(self.sources.len());
        let mut self_values = Vec::with_capacity(self.sources.len());
        for (m, (s, delta)) in self.sources.iter().zip(bandwidths).enumerate() {
            let (block, selfs) = match (s, query) {
                (BaseSource::Points { columns, values }, Query::Features(f)) => {
                    if columns.iter().any(|&c| c >= f.ncols()) {
                        return Err(PipelineError::ShapeMismatch {
                            what: "query feature columns",
                            expected: columns.iter().max().map_or(0, |c| c + 1),
                            found: f.ncols(),
                        });
                    }
                    let a = f.select(Axis(1), columns);
                    let b = values.select(Axis(0), train);
                    let d = kernelspace::euclidean_cross(a.view(), b.view());
                    (
                        kernelspace::gaussian_cross(d.view(), delta.expect("fitted"))?,
                        None,
                    )
                }
                (BaseSource::Distance(_), Query::Matrices(ms)) => {
                    let raw = query_matrix(ms, m, self.n_samples)?;
                    let d = raw.select(Axis(1), train);
                    (
                        kernelspace::gaussian_cross(d.view(), delta.expect("fitted"))?,
                        None,
                    )
                }
                (BaseSource::Kernel { raw_diagonal, .. }, Query::Matrices(ms)) => {
                    let raw = query_matrix(ms, m, self.n_samples)?.select(Axis(1), train);
                    match &ms[m].1 {
                        // Without self-similarities the block is taken as normalized.
                        None => (raw, None),
                        Some(selfs) => {
                            let diag: Vec<f64> = train.iter().map(|&i| raw_diagonal[i]).collect();
                            (
                                kernelspace::normalize_cross(raw.view(), &diag, selfs)?,
                                None,
                            )
                        }
                    }
                }
                _ => {
                    return Err(PipelineError::Config(
                        "query input does not match the kernel mode".into(),
                    ))
                }
            };
            let rows = block.nrows();
            cross.push(block);
            self_values.push(selfs.unwrap_or_else(|| vec![1.0; rows]));
        }
        Ok(CrossKernelSet::new(cross, self_values)?)
    }

    fn check_indices(&self, idx: &[usize]) -> Result<(), PipelineError> {
        match idx.iter().find(|&&i| i >= self.n_samples) {
            Some(&index) => Err(KernelError::IndexOutOfRange {
                index,
                n: self.n_samples,
            }
            .into()),
            None => Ok(()),
        }
    }
}

fn gaussian_on(d: &DistanceMatrix) -> Result<(KernelMatrix, Option<f64>), KernelError> {
    let delta = kernelspace::compute_bandwidth(d)?;
    Ok((kernelspace::gaussian_kernel(d, delta)?, Some(delta)))
}

fn query_matrix(
    ms: &[(Array2<f64>, Option<Vec<f64>>)],
    m: usize,
    n_samples: usize,
) -> Result<&Array2<f64>, PipelineError> {
    let (raw, _) = ms.get(m).ok_or(PipelineError::ShapeMismatch {
        what: "query matrices",
        expected: m + 1,
        found: ms.len(),
    })?;
    if raw.ncols() != n_samples {
        return Err(PipelineError::ShapeMismatch {
            what: "query matrix columns",
            expected: n_samples,
            found: raw.ncols(),
        });
    }
    Ok(raw)
}

fn load_matrices(
    specs: &[MatrixSpec],
) -> Result<Vec<(String, MatrixKind, Array2<f64>)>, PipelineError> {
    specs
        .iter()
        .map(|s| Ok((s.name.clone(), s.kind, read_matrix(&s.path)?)))
        .collect()
}

/// Loads the labeled samples named by `config`.
pub fn ingest(config: &RunConfig) -> Result<Dataset, PipelineError> {
    let labels_path = config
        .labels
        .as_deref()
        .ok_or_else(|| PipelineError::Config("no labels file given".into()))?;
    let (labels, classes) = encode_labels(&read_labels(labels_path)?);
    let dataset = match config.kernel_mode {
        KernelMode::PerFeature | KernelMode::PerRepresentation => {
            let path = config
                .features
                .as_deref()
                .ok_or_else(|| PipelineError::Config("no features file given".into()))?;
            let table = read_table(path)?;
            if table.values.nrows() != labels.len() {
                return Err(PipelineError::ShapeMismatch {
                    what: "feature rows vs labels",
                    expected: labels.len(),
                    found: table.values.nrows(),
                });
            }
            Dataset::from_features(
                table.values.view(),
                &table.header,
                labels,
                classes,
                config.kernel_mode,
            )
            .map_err(|e| e.with_path(path))?
        }
        KernelMode::Precomputed => {
            Dataset::from_matrices(load_matrices(&config.matrices)?, labels, classes)?
        }
    };
    log::info!(
        "loaded {} samples, {} classes, {} base kernels",
        dataset.n_samples(),
        dataset.n_classes(),
        dataset.n_kernels()
    );
    Ok(dataset)
}

/// Loads the query points named by `config` for prediction.
pub fn ingest_query(config: &RunConfig) -> Result<Query, PipelineError> {
    match config.kernel_mode {
        KernelMode::PerFeature | KernelMode::PerRepresentation => {
            let path = config
                .test_features
                .as_deref()
                .ok_or_else(|| PipelineError::Config("no test features file given".into()))?;
            Ok(Query::Features(read_table(path)?.values))
        }
        KernelMode::Precomputed => {
            if config.test_matrices.len() != config.matrices.len() {
                return Err(PipelineError::Config(format!(
                    "{} test matrices given for {} base matrices",
                    config.test_matrices.len(),
                    config.matrices.len()
                )));
            }
            let mut out = Vec::new();
            let mut rows = None;
            for spec in &config.test_matrices {
                let m = read_matrix(&spec.path)?;
                let selfs = match &spec.self_values {
                    Some(p) => {
                        let t = read_table(p)?.values;
                        if t.ncols() != 1 || t.nrows() != m.nrows() {
                            return Err(PipelineError::ShapeMismatch {
                                what: "self-value rows",
                                expected: m.nrows(),
                                found: t.nrows(),
                            });
                        }
                        Some(t.column(0).to_vec())
                    }
                    None => None,
                };
                if *rows.get_or_insert(m.nrows()) != m.nrows() {
                    return Err(PipelineError::ShapeMismatch {
                        what: "test matrix rows",
                        expected: rows.unwrap(),
                        found: m.nrows(),
                    });
                }
                out.push((m, selfs));
            }
            Ok(Query::Matrices(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(text.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn per_feature_csv_gives_abs_difference_distances() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "x.csv", "a,b\n0,1\n2,1.5\n5,-1\n");
        let table = read_table(&f).unwrap();
        let ds = Dataset::from_features(
            table.values.view(),
            &table.header,
            vec![0, 0, 1],
            vec!["p".into(), "q".into()],
            KernelMode::PerFeature,
        )
        .unwrap();
        assert_eq!(ds.n_kernels(), 2);
        let expect = [
            array![[0.0, 2.0, 5.0], [2.0, 0.0, 3.0], [5.0, 3.0, 0.0]],
            array![[0.0, 0.5, 2.0], [0.5, 0.0, 2.5], [2.0, 2.5, 0.0]],
        ];
        for (s, e) in ds.sources().iter().zip(&expect) {
            let BaseSource::Points { values, .. } = s else {
                panic!()
            };
            let d = DistanceMatrix::euclidean(values.view()).unwrap();
            assert_eq!(d.values(), e.view());
        }
    }

    #[test]
    fn precomputed_kernel_is_normalized_on_load() {
        let raw = array![[4.0, 1.0, 0.5], [1.0, 1.0, 0.2], [0.5, 0.2, 1.0]];
        let ds = Dataset::from_matrices(
            vec![("k".into(), MatrixKind::Kernel, raw.clone())],
            vec![0, 1, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let BaseSource::Kernel {
            kernel,
            raw_diagonal,
        } = &ds.sources()[0]
        else {
            panic!()
        };
        assert_eq!(raw_diagonal, &vec![4.0, 1.0, 1.0]);
        for i in 0..3 {
            assert_eq!(kernel.get(i, i), 1.0);
            for j in 0..3 {
                let oracle = raw[[i, j]] / (raw[[i, i]] * raw[[j, j]]).sqrt();
                assert!((kernel.get(i, j) - oracle).abs() < 1e-15);
            }
        }
        assert!((kernel.get(0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "x.csv", "a,b\n1,2\n3\n");
        match read_table(&f) {
            Err(PipelineError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("row 2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let f = write(dir.path(), "y.csv", "a,b\n1,2\n3,x\n");
        match read_table(&f) {
            Err(PipelineError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn labels_map_to_sorted_ids() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "y.csv", "id,label\n1,cat\n2,ant\n3,cat\n");
        let raw = read_labels(&f).unwrap();
        let (ids, classes) = encode_labels(&raw);
        assert_eq!(ids, vec![1, 0, 1]);
        assert_eq!(classes, vec!["ant", "cat"]);
        assert!(matches!(
            encode_with(&["dog".to_string()], &classes),
            Err(PipelineError::UnknownLabel(l)) if l == "dog"
        ));
    }

    #[test]
    fn binary_matrix_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = array![[1.0, 0.1 + 0.2], [f64::MIN_POSITIVE, -3.5e300]];
        let p = dir.path().join("m.bin");
        write_matrix_binary(&p, m.view()).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
        let q = dir.path().join("m.csv");
        write_matrix_csv(&q, m.view()).unwrap();
        assert_eq!(read_matrix(&q).unwrap(), m);
        std::fs::write(&p, &std::fs::read(&p).unwrap()[..20]).unwrap();
        assert!(matches!(read_matrix(&p), Err(PipelineError::Parse { .. })));
    }

    #[test]
    fn representation_blocks_group_by_prefix() {
        let x = array![[0.0, 1.0, 2.0], [3.0, 4.0, 6.0], [1.0, 1.0, 1.0]];
        let header: Vec<String> = ["hog/0", "sift/0", "hog/1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let ds = Dataset::from_features(
            x.view(),
            &header,
            vec![0, 1, 0],
            vec!["a".into(), "b".into()],
            KernelMode::PerRepresentation,
        )
        .unwrap();
        assert_eq!(ds.names(), &["hog".to_string(), "sift".to_string()]);
        let BaseSource::Points { values, columns } = &ds.sources()[0] else {
            panic!()
        };
        assert_eq!(columns, &vec![0, 2]);
        let d = DistanceMatrix::euclidean(values.view()).unwrap();
        assert!((d.get(0, 1) - (9.0f64 + 16.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn split_cross_kernels_match_full_gaussian_blocks() {
        // Cross kernels use the bandwidth fitted on the training part only.
        let x = array![[0.0], [1.0], [3.0], [7.0], [2.0]];
        let ds = Dataset::from_features(
            x.view(),
            &["f".to_string()],
            vec![0, 0, 1, 1, 0],
            vec!["a".into(), "b".into()],
            KernelMode::PerFeature,
        )
        .unwrap();
        let train = [0, 1, 2, 3];
        let sk = ds.split_kernels(&train, &[4]).unwrap();
        // Mean off-diagonal distance of {0,1,3,7}: (1+3+7+2+6+4)/6.
        let delta = 23.0 / 6.0;
        assert!((sk.bandwidths[0].unwrap() - delta).abs() < 1e-12);
        for (c, &i) in train.iter().enumerate() {
            let d: f64 = (2.0 - x[[i, 0]]).abs();
            let oracle = (-d * d / delta).exp();
            assert!((sk.cross.kernels()[0][[0, c]] - oracle).abs() < 1e-15);
        }
        let q = Query::Features(array![[2.0]]);
        let via_query = ds.query_kernels(&train, &sk.bandwidths, &q).unwrap();
        assert_eq!(via_query.kernels()[0], sk.cross.kernels()[0]);
    }
}
