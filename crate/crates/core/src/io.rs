//! File formats.
//!
//! * A dataset directory holds one CSV per task, with header
//!   `feature_1,…,feature_d,target`, plus `manifest.json` listing the files
//!   in task order. Generated datasets also carry `truth_alpha.csv` and
//!   `truth_support.csv`.
//! * Matrices are written one row per line under a header naming the
//!   columns. Numbers use the shortest representation that parses back to
//!   the same `f64`, so load followed by save reproduces a file byte for byte.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{MultitaskDataset, TaskData};
use crate::datagen::{GroundTruth, Pattern};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_ALPHA_FILE: &str = "truth_alpha.csv";
pub const TRUTH_SUPPORT_FILE: &str = "truth_support.csv";

/// Describes a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub tasks: usize,
    /// Examples in each task, in file order.
    pub n: Vec<usize>,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Pattern>,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthFiles>,
    /// SHA-256 of the configuration that produced the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFiles {
    pub alpha: String,
    pub support: String,
    pub irrelevant_features: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub task_groups: Vec<usize>,
}

impl DatasetManifest {
    /// Manifest for `data` with files named `task_01.csv`, `task_02.csv`, ….
    pub fn for_dataset(data: &MultitaskDataset) -> Self {
        let width = data.n_tasks().to_string().len().max(2);
        DatasetManifest {
            tasks: data.n_tasks(),
            n: data.tasks().iter().map(TaskData::n_samples).collect(),
            d: data.n_features(),
            seed: None,
            pattern: None,
            files: (1..=data.n_tasks()).map(|t| format!("task_{t:0width$}.csv")).collect(),
            truth: None,
            config_hash: None,
        }
    }
}

/// Hex SHA-256 of the compact JSON encoding of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Shortest round-tripping decimal, switching to exponent form for very
/// large or small magnitudes.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_f64(path: &Path, line: usize, column: &str, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::data(path, format!("line {line}, column {column}: {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::data(path, format!("line {line}, column {column}: non-finite value {field}")));
    }
    Ok(v)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::data(path, e.to_string()))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Writes a matrix with the given column names.
pub fn write_matrix_csv(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    if header.len() != m.ncols() {
        return Err(Error::dims(format!("{} column names for {} columns", header.len(), m.ncols())));
    }
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&v| format_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric matrix and its header.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv_reader(path)?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::data(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::data(path, "missing header"));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::data(path, e.to_string()))?;
        let line = i + 2;
        if record.len() != header.len() {
            return Err(Error::data(
                path,
                format!("line {line} has {} fields, header has {}", record.len(), header.len()),
            ));
        }
        for (field, name) in record.iter().zip(&header) {
            values.push(parse_f64(path, line, name, field)?);
        }
        rows += 1;
    }
    let m = DMatrix::from_row_slice(rows, header.len(), &values);
    Ok((header, m))
}

/// `feature_1, …, feature_d`.
pub fn feature_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("feature_{j}")).collect()
}

pub fn write_task_csv(path: &Path, task: &TaskData) -> Result<()> {
    let mut header = feature_names(task.x.ncols());
    header.push("target".into());
    let mut m = DMatrix::zeros(task.n_samples(), task.x.ncols() + 1);
    m.view_mut((0, 0), (task.n_samples(), task.x.ncols())).copy_from(&task.x);
    m.set_column(task.x.ncols(), &task.y);
    write_matrix_csv(path, &header, &m)
}

/// Reads one task file; the last column must be `target`.
pub fn read_task_csv(path: &Path, id: impl Into<String>) -> Result<TaskData> {
    let (header, m) = read_matrix_csv(path)?;
    if header.last().map(String::as_str) != Some("target") {
        return Err(Error::data(path, "last column must be named target"));
    }
    if m.nrows() == 0 {
        return Err(Error::data(path, "no examples"));
    }
    let d = header.len() - 1;
    let x = m.columns(0, d).into_owned();
    let y = DVector::from_iterator(m.nrows(), m.column(d).iter().copied());
    TaskData::new(id, x, y).map_err(|e| Error::data(path, e.to_string()))
}

fn task_id(file: &str) -> String {
    file.strip_suffix(".csv").unwrap_or(file).to_string()
}

/// Writes the task files and the manifest. Truth files, when listed in the
/// manifest, are written by [`write_ground_truth`].
pub fn write_dataset(dir: &Path, data: &MultitaskDataset, manifest: &DatasetManifest) -> Result<()> {
    if manifest.files.len() != data.n_tasks() {
        return Err(Error::dims(format!(
            "manifest lists {} files for {} tasks",
            manifest.files.len(),
            data.n_tasks()
        )));
    }
    fs::create_dir_all(dir)?;
    for (task, file) in data.tasks().iter().zip(&manifest.files) {
        write_task_csv(&dir.join(file), task)?;
    }
    write_json(&dir.join(MANIFEST_FILE), manifest)
}

/// Task files named `task_*.csv`, sorted, for directories without a manifest.
fn discover_task_files(dir: &Path) -> Result<Vec<String>> {
    let mut files: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::data(dir, e.to_string()))?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter(|name| name.starts_with("task_") && name.ends_with(".csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::data(dir, format!("no {MANIFEST_FILE} and no task_*.csv files")));
    }
    Ok(files)
}

/// Loads a dataset directory. Without a manifest every `task_*.csv` file is
/// read in name order. Disagreeing feature counts are reported per file.
pub fn read_dataset(dir: &Path) -> Result<(MultitaskDataset, DatasetManifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Option<DatasetManifest> = if manifest_path.exists() {
        Some(read_json(&manifest_path)?)
    } else {
        None
    };
    let files = match &manifest {
        Some(m) => m.files.clone(),
        None => discover_task_files(dir)?,
    };
    let tasks = files
        .iter()
        .map(|f| read_task_csv(&dir.join(f), task_id(f)))
        .collect::<Result<Vec<_>>>()?;

    let d = tasks[0].x.ncols();
    let expected = manifest.as_ref().map_or(d, |m| m.d);
    let mismatches: Vec<String> = files
        .iter()
        .zip(&tasks)
        .filter(|(_, t)| t.x.ncols() != expected)
        .map(|(f, t)| format!("{f}: {} features (expected {expected})", t.x.ncols()))
        .collect();
    if !mismatches.is_empty() {
        return Err(Error::data(dir, format!("feature count mismatch: {}", mismatches.join("; "))));
    }
    let data = MultitaskDataset::new(tasks).map_err(|e| Error::data(dir, e.to_string()))?;
    if let Some(m) = &manifest {
        let n: Vec<usize> = data.tasks().iter().map(TaskData::n_samples).collect();
        if m.tasks != data.n_tasks() || m.n != n {
            return Err(Error::data(&manifest_path, "task count or example counts disagree with the task files"));
        }
    }
    let manifest = manifest.unwrap_or_else(|| DatasetManifest { files, ..DatasetManifest::for_dataset(&data) });
    Ok((data, manifest))
}

fn task_names(t: usize) -> Vec<String> {
    (1..=t).map(|i| format!("task_{i}")).collect()
}

/// Writes `truth_alpha.csv` and `truth_support.csv` (features as rows) and
/// returns the manifest entry describing them.
pub fn write_ground_truth(dir: &Path, truth: &GroundTruth) -> Result<TruthFiles> {
    let header = task_names(truth.alpha.ncols());
    write_matrix_csv(&dir.join(TRUTH_ALPHA_FILE), &header, &truth.alpha)?;
    let support = truth.support.map(|s| if s { 1.0 } else { 0.0 });
    write_matrix_csv(&dir.join(TRUTH_SUPPORT_FILE), &header, &support)?;
    Ok(TruthFiles {
        alpha: TRUTH_ALPHA_FILE.into(),
        support: TRUTH_SUPPORT_FILE.into(),
        irrelevant_features: truth.irrelevant_features.clone(),
        task_groups: truth.task_groups.clone(),
    })
}

/// Loads the ground truth named by a manifest.
pub fn read_ground_truth(dir: &Path, files: &TruthFiles) -> Result<GroundTruth> {
    let (_, alpha) = read_matrix_csv(&dir.join(&files.alpha))?;
    let support_path = dir.join(&files.support);
    let (_, support) = read_matrix_csv(&support_path)?;
    if support.shape() != alpha.shape() {
        return Err(Error::data(&support_path, "support and alpha shapes differ"));
    }
    Ok(GroundTruth {
        alpha,
        support: support.map(|v| v != 0.0),
        irrelevant_features: files.irrelevant_features.clone(),
        task_groups: files.task_groups.clone(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::data(path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))
}

/// True when `dir` exists and has at least one entry.
pub fn is_nonempty_dir(dir: &Path) -> bool {
    fs::read_dir(dir).map(|mut entries| entries.next().is_some()).unwrap_or(false)
}
