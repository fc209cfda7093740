//! Dataset model and CSV ingestion for profiled traces.
//!
//! A dataset is three plain CSV files:
//!
//! - trace: `input_id,model_id,goal_met,score,latency_ms,energy_mj`
//! - features: `input_id,f_<name>...,c_<index>...`
//! - models (optional sidecar): `model_id,display_name,memory_mb`
//!
//! Every input in the features file must have exactly one trace record per
//! candidate model. Exactly one of `goal_met` / `score` is populated per row,
//! and the same column is used across the whole file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Literal used for the Failure label in CSV files; reserved as a model id.
pub const FAILURE_LITERAL: &str = "FAILURE";

const TRACE_HEADER: [&str; 6] = [
    "input_id",
    "model_id",
    "goal_met",
    "score",
    "latency_ms",
    "energy_mj",
];
const MODELS_HEADER: [&str; 3] = ["model_id", "display_name", "memory_mb"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: line {line}: row uses `{found}` but earlier rows use `{expected}`")]
    ModeConflict {
        path: PathBuf,
        line: u64,
        expected: &'static str,
        found: &'static str,
    },
    #[error("incomplete trace matrix: no record for input `{input_id}` on model `{model_id}`")]
    Incomplete { input_id: String, model_id: String },
    #[error("invalid dataset: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub model_id: String,
    pub display_name: String,
    pub memory_mb: Option<f64>,
}

impl CandidateModel {
    pub fn new(model_id: impl Into<String>) -> Self {
        let model_id = model_id.into();
        Self {
            display_name: model_id.clone(),
            model_id,
            memory_mb: None,
        }
    }
}

/// Per-record result: a boolean goal flag or a raw quality score in [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    GoalMet(bool),
    Score(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetMode {
    BooleanGoal,
    Scored,
}

impl DatasetMode {
    fn column(self) -> &'static str {
        match self {
            DatasetMode::BooleanGoal => "goal_met",
            DatasetMode::Scored => "score",
        }
    }
}

impl Outcome {
    pub fn mode(&self) -> DatasetMode {
        match self {
            Outcome::GoalMet(_) => DatasetMode::BooleanGoal,
            Outcome::Score(_) => DatasetMode::Scored,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub input_id: String,
    pub model_id: String,
    pub outcome: Outcome,
    pub latency_ms: f64,
    pub energy_mj: Option<f64>,
}

/// Feature vector for one input. `counts` is sparse: ascending indices,
/// nonzero values only.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureRow {
    pub input_id: String,
    pub dense: Vec<f64>,
    pub counts: Vec<(usize, u64)>,
}

impl FeatureRow {
    pub fn new(input_id: impl Into<String>, dense: Vec<f64>) -> Self {
        Self {
            input_id: input_id.into(),
            dense,
            counts: Vec::new(),
        }
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.counts[pos].1)
            .unwrap_or(0)
    }

    /// Expands the sparse counts into a dense vector of length `vocab_size`.
    pub fn dense_counts(&self, vocab_size: usize) -> Vec<u64> {
        let mut out = vec![0; vocab_size];
        for &(i, c) in &self.counts {
            if i < vocab_size {
                out[i] = c;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub models: Vec<CandidateModel>,
    pub records: Vec<TraceRecord>,
    pub features: Vec<FeatureRow>,
    pub mode: DatasetMode,
    /// Names of the dense columns, without the `f_` prefix.
    pub dense_names: Vec<String>,
    /// Number of `c_` count columns.
    pub vocab_size: usize,
}

/// One broken invariant, with enough location detail to find it in the files.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateModel { model_id: String },
    ReservedModelId { model_id: String },
    NegativeMemory { model_id: String, memory_mb: f64 },
    DuplicateRecord { input_id: String, model_id: String },
    NonPositiveLatency { input_id: String, model_id: String, latency_ms: f64 },
    ScoreOutOfRange { input_id: String, model_id: String, score: f64 },
    NegativeEnergy { input_id: String, model_id: String, energy_mj: f64 },
    ModeMismatch { input_id: String, model_id: String },
    UnknownModel { input_id: String, model_id: String },
    UnknownInput { input_id: String, model_id: String },
    DuplicateFeatureRow { input_id: String },
    WidthMismatch { input_id: String, expected: usize, found: usize },
    CountIndexOutOfRange { input_id: String, index: usize, vocab_size: usize },
    MissingRecord { input_id: String, model_id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateModel { model_id } => write!(f, "duplicate model `{model_id}`"),
            ReservedModelId { model_id } => {
                write!(f, "model id `{model_id}` is reserved for the failure label")
            }
            NegativeMemory { model_id, memory_mb } => {
                write!(f, "model `{model_id}`: negative memory_mb {memory_mb}")
            }
            DuplicateRecord { input_id, model_id } => {
                write!(f, "duplicate record ({input_id}, {model_id})")
            }
            NonPositiveLatency { input_id, model_id, latency_ms } => {
                write!(f, "record ({input_id}, {model_id}): latency_ms {latency_ms} is not positive")
            }
            ScoreOutOfRange { input_id, model_id, score } => {
                write!(f, "record ({input_id}, {model_id}): score {score} outside [0,1]")
            }
            NegativeEnergy { input_id, model_id, energy_mj } => {
                write!(f, "record ({input_id}, {model_id}): negative energy_mj {energy_mj}")
            }
            ModeMismatch { input_id, model_id } => {
                write!(f, "record ({input_id}, {model_id}): outcome kind differs from dataset mode")
            }
            UnknownModel { input_id, model_id } => {
                write!(f, "record ({input_id}, {model_id}): unknown model")
            }
            UnknownInput { input_id, model_id } => {
                write!(f, "record ({input_id}, {model_id}): input has no feature row")
            }
            DuplicateFeatureRow { input_id } => write!(f, "duplicate feature row `{input_id}`"),
            WidthMismatch { input_id, expected, found } => {
                write!(f, "feature row `{input_id}`: {found} dense values, expected {expected}")
            }
            CountIndexOutOfRange { input_id, index, vocab_size } => write!(
                f,
                "feature row `{input_id}`: count index {index} outside vocabulary of {vocab_size}"
            ),
            MissingRecord { input_id, model_id } => {
                write!(f, "missing record ({input_id}, {model_id})")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Dataset {
    pub fn model_ids(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.model_id.as_str()).collect()
    }

    pub fn input_ids(&self) -> Vec<&str> {
        self.features.iter().map(|r| r.input_id.as_str()).collect()
    }

    pub fn dense_width(&self) -> usize {
        self.dense_names.len()
    }

    pub fn feature_row(&self, input_id: &str) -> Option<&FeatureRow> {
        self.features.iter().find(|r| r.input_id == input_id)
    }

    /// Records for one input, in stored order.
    pub fn records_for<'a>(&'a self, input_id: &'a str) -> impl Iterator<Item = &'a TraceRecord> {
        self.records.iter().filter(move |r| r.input_id == input_id)
    }

    /// Whether any record lacks an energy measurement.
    pub fn energy_available(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.energy_mj.is_some())
    }

    /// Sorts models, records and feature rows by id. Two datasets holding the
    /// same content compare equal after canonicalisation.
    pub fn canonicalize(&mut self) {
        self.models.sort_by(|a, b| a.model_id.cmp(&b.model_id));
        self.records.sort_by(|a, b| {
            (a.input_id.as_str(), a.model_id.as_str()).cmp(&(b.input_id.as_str(), b.model_id.as_str()))
        });
        self.features.sort_by(|a, b| a.input_id.cmp(&b.input_id));
    }

    /// Keeps only the given inputs (records and feature rows).
    pub fn subset(&self, input_ids: &HashSet<&str>) -> Dataset {
        Dataset {
            models: self.models.clone(),
            records: self
                .records
                .iter()
                .filter(|r| input_ids.contains(r.input_id.as_str()))
                .cloned()
                .collect(),
            features: self
                .features
                .iter()
                .filter(|r| input_ids.contains(r.input_id.as_str()))
                .cloned()
                .collect(),
            mode: self.mode,
            dense_names: self.dense_names.clone(),
            vocab_size: self.vocab_size,
        }
    }
}

/// Lists every invariant violation in `dataset`. Violations are data: this
/// never fails.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();

    let mut model_set = HashSet::new();
    for m in &dataset.models {
        if !model_set.insert(m.model_id.as_str()) {
            violations.push(Violation::DuplicateModel { model_id: m.model_id.clone() });
        }
        if m.model_id == FAILURE_LITERAL {
            violations.push(Violation::ReservedModelId { model_id: m.model_id.clone() });
        }
        if let Some(mem) = m.memory_mb {
            if !(mem >= 0.0) {
                violations.push(Violation::NegativeMemory { model_id: m.model_id.clone(), memory_mb: mem });
            }
        }
    }

    let width = dataset.dense_width();
    let mut input_set = HashSet::new();
    for row in &dataset.features {
        if !input_set.insert(row.input_id.as_str()) {
            violations.push(Violation::DuplicateFeatureRow { input_id: row.input_id.clone() });
        }
        if row.dense.len() != width {
            violations.push(Violation::WidthMismatch {
                input_id: row.input_id.clone(),
                expected: width,
                found: row.dense.len(),
            });
        }
        for &(index, _) in &row.counts {
            if index >= dataset.vocab_size {
                violations.push(Violation::CountIndexOutOfRange {
                    input_id: row.input_id.clone(),
                    index,
                    vocab_size: dataset.vocab_size,
                });
            }
        }
    }

    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for r in &dataset.records {
        let (input_id, model_id) = (r.input_id.clone(), r.model_id.clone());
        if !seen.insert((r.input_id.as_str(), r.model_id.as_str())) {
            violations.push(Violation::DuplicateRecord { input_id: input_id.clone(), model_id: model_id.clone() });
        }
        if !(r.latency_ms > 0.0) {
            violations.push(Violation::NonPositiveLatency {
                input_id: input_id.clone(),
                model_id: model_id.clone(),
                latency_ms: r.latency_ms,
            });
        }
        if let Outcome::Score(s) = r.outcome {
            if !(0.0..=1.0).contains(&s) {
                violations.push(Violation::ScoreOutOfRange {
                    input_id: input_id.clone(),
                    model_id: model_id.clone(),
                    score: s,
                });
            }
        }
        if r.outcome.mode() != dataset.mode {
            violations.push(Violation::ModeMismatch { input_id: input_id.clone(), model_id: model_id.clone() });
        }
        if let Some(e) = r.energy_mj {
            if !(e >= 0.0) {
                violations.push(Violation::NegativeEnergy {
                    input_id: input_id.clone(),
                    model_id: model_id.clone(),
                    energy_mj: e,
                });
            }
        }
        if !model_set.contains(r.model_id.as_str()) {
            violations.push(Violation::UnknownModel { input_id: input_id.clone(), model_id: model_id.clone() });
        }
        if !input_set.contains(r.input_id.as_str()) {
            violations.push(Violation::UnknownInput { input_id, model_id });
        }
    }

    for row in &dataset.features {
        for m in &dataset.models {
            if !seen.contains(&(row.input_id.as_str(), m.model_id.as_str())) {
                violations.push(Violation::MissingRecord {
                    input_id: row.input_id.clone(),
                    model_id: m.model_id.clone(),
                });
            }
        }
    }

    ValidationReport { violations }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, err: csv::Error) -> TraceError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => TraceError::Io { path: path.to_path_buf(), source },
        other => TraceError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>, TraceError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_f64(path: &Path, line: u64, column: &str, text: &str) -> Result<f64, TraceError> {
    text.trim().parse::<f64>().map_err(|_| TraceError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("column `{column}`: `{text}` is not a number"),
    })
}

fn read_header(path: &Path, reader: &mut csv::Reader<File>) -> Result<Vec<String>, TraceError> {
    let headers = reader.headers().map_err(|e| csv_err(path, e))?;
    Ok(headers.iter().map(|h| h.trim().to_string()).collect())
}

fn check_header(path: &Path, found: &[String], expected: &[&str]) -> Result<(), TraceError> {
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(TraceError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        });
    }
    Ok(())
}

fn read_trace(path: &Path) -> Result<(Vec<TraceRecord>, Option<DatasetMode>), TraceError> {
    let mut reader = open_csv(path)?;
    let header = read_header(path, &mut reader)?;
    check_header(path, &header, &TRACE_HEADER)?;

    let mut records = Vec::new();
    let mut mode: Option<DatasetMode> = None;
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let parse_err = |message: String| TraceError::Parse { path: path.to_path_buf(), line, message };

        let (input_id, model_id) = (field(0), field(1));
        if input_id.is_empty() || model_id.is_empty() {
            return Err(parse_err("empty input_id or model_id".into()));
        }
        let outcome = match (field(2), field(3)) {
            ("", "") => return Err(parse_err("neither goal_met nor score is set".into())),
            (g, s) if !g.is_empty() && !s.is_empty() => {
                return Err(parse_err(format!("both goal_met (`{g}`) and score (`{s}`) are set")))
            }
            ("0", "") => Outcome::GoalMet(false),
            ("1", "") => Outcome::GoalMet(true),
            (g, "") => return Err(parse_err(format!("goal_met must be 0 or 1, found `{g}`"))),
            (_, s) => Outcome::Score(parse_f64(path, line, "score", s)?),
        };
        match mode {
            None => mode = Some(outcome.mode()),
            Some(m) if m != outcome.mode() => {
                return Err(TraceError::ModeConflict {
                    path: path.to_path_buf(),
                    line,
                    expected: m.column(),
                    found: outcome.mode().column(),
                })
            }
            _ => {}
        }
        let latency_ms = parse_f64(path, line, "latency_ms", field(4))?;
        let energy_mj = match field(5) {
            "" => None,
            e => Some(parse_f64(path, line, "energy_mj", e)?),
        };
        records.push(TraceRecord {
            input_id: input_id.to_string(),
            model_id: model_id.to_string(),
            outcome,
            latency_ms,
            energy_mj,
        });
    }
    Ok((records, mode))
}

struct FeatureFile {
    rows: Vec<FeatureRow>,
    dense_names: Vec<String>,
    vocab_size: usize,
}

/// Reads a features CSV on its own: rows in file order and the vocabulary size.
pub fn read_feature_rows(path: &Path) -> Result<(Vec<FeatureRow>, usize), TraceError> {
    let file = read_features(path)?;
    Ok((file.rows, file.vocab_size))
}

fn read_features(path: &Path) -> Result<FeatureFile, TraceError> {
    let mut reader = open_csv(path)?;
    let header = read_header(path, &mut reader)?;
    let header_err = |message: String| TraceError::Parse { path: path.to_path_buf(), line: 1, message };
    if header.first().map(String::as_str) != Some("input_id") {
        return Err(header_err("first column must be `input_id`".into()));
    }
    let mut dense_names = Vec::new();
    let mut vocab_size = 0usize;
    for name in &header[1..] {
        if let Some(rest) = name.strip_prefix("f_") {
            if vocab_size > 0 {
                return Err(header_err(format!("dense column `{name}` after count columns")));
            }
            dense_names.push(rest.to_string());
        } else if let Some(rest) = name.strip_prefix("c_") {
            match rest.parse::<usize>() {
                Ok(i) if i == vocab_size => vocab_size += 1,
                _ => return Err(header_err(format!("count column `{name}` out of sequence, expected `c_{vocab_size}`"))),
            }
        } else {
            return Err(header_err(format!("column `{name}` has neither `f_` nor `c_` prefix")));
        }
    }

    let width = dense_names.len();
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != header.len() {
            return Err(TraceError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("{} fields, header has {}", row.len(), header.len()),
            });
        }
        let input_id = row[0].trim();
        if input_id.is_empty() {
            return Err(TraceError::Parse { path: path.to_path_buf(), line, message: "empty input_id".into() });
        }
        let mut dense = Vec::with_capacity(width);
        for (j, text) in row.iter().skip(1).take(width).enumerate() {
            dense.push(parse_f64(path, line, &header[1 + j], text)?);
        }
        let mut counts = Vec::new();
        for (j, text) in row.iter().skip(1 + width).enumerate() {
            let value = text.trim().parse::<u64>().map_err(|_| TraceError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column `{}`: `{text}` is not a nonnegative integer", header[1 + width + j]),
            })?;
            if value > 0 {
                counts.push((j, value));
            }
        }
        rows.push(FeatureRow { input_id: input_id.to_string(), dense, counts });
    }
    Ok(FeatureFile { rows, dense_names, vocab_size })
}

pub fn read_models(path: &Path) -> Result<Vec<CandidateModel>, TraceError> {
    let mut reader = open_csv(path)?;
    let header = read_header(path, &mut reader)?;
    check_header(path, &header, &MODELS_HEADER)?;
    let mut models = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let model_id = row.get(0).unwrap_or("").trim();
        if model_id.is_empty() {
            return Err(TraceError::Parse { path: path.to_path_buf(), line, message: "empty model_id".into() });
        }
        let display = row.get(1).unwrap_or("").trim();
        let memory_mb = match row.get(2).unwrap_or("").trim() {
            "" => None,
            m => Some(parse_f64(path, line, "memory_mb", m)?),
        };
        models.push(CandidateModel {
            model_id: model_id.to_string(),
            display_name: if display.is_empty() { model_id.to_string() } else { display.to_string() },
            memory_mb,
        });
    }
    Ok(models)
}

/// Loads trace and features; models are inferred from the trace, sorted by id.
pub fn load_dataset(trace_path: &Path, features_path: &Path) -> Result<Dataset, TraceError> {
    load_dataset_with_models(trace_path, features_path, None)
}

/// Loads a dataset, optionally with a models sidecar fixing model order and
/// metadata. Fails unless every dataset invariant holds.
pub fn load_dataset_with_models(
    trace_path: &Path,
    features_path: &Path,
    models_path: Option<&Path>,
) -> Result<Dataset, TraceError> {
    let dataset = read_dataset_unchecked(trace_path, features_path, models_path)?;
    let report = validate(&dataset);
    if report.is_clean() {
        return Ok(dataset);
    }
    let mut violations = report.violations;
    // Completeness gets its own error so callers can name the missing cell.
    if violations.iter().all(|v| matches!(v, Violation::MissingRecord { .. })) {
        if let Some(Violation::MissingRecord { input_id, model_id }) = violations.drain(..).next() {
            return Err(TraceError::Incomplete { input_id, model_id });
        }
    }
    Err(TraceError::Invalid(violations))
}

/// Parses the files without checking dataset invariants; use [`validate`] on
/// the result to list violations.
pub fn read_dataset_unchecked(
    trace_path: &Path,
    features_path: &Path,
    models_path: Option<&Path>,
) -> Result<Dataset, TraceError> {
    let (records, mode) = read_trace(trace_path)?;
    let features = read_features(features_path)?;
    let models = match models_path {
        Some(p) => read_models(p)?,
        None => {
            let ids: BTreeMap<&str, ()> = records.iter().map(|r| (r.model_id.as_str(), ())).collect();
            ids.keys().map(|id| CandidateModel::new(*id)).collect()
        }
    };
    Ok(Dataset {
        models,
        records,
        features: features.rows,
        mode: mode.unwrap_or(DatasetMode::BooleanGoal),
        dense_names: features.dense_names,
        vocab_size: features.vocab_size,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the dataset as trace, features and models CSVs. Floats use the
/// shortest round-trip representation, so loading the files back yields an
/// identical dataset.
pub fn save_dataset(
    dataset: &Dataset,
    trace_path: &Path,
    features_path: &Path,
    models_path: &Path,
) -> Result<(), TraceError> {
    let mut trace = TRACE_HEADER.join(",");
    trace.push('\n');
    for r in &dataset.records {
        let (goal, score) = match r.outcome {
            Outcome::GoalMet(g) => (if g { "1" } else { "0" }.to_string(), String::new()),
            Outcome::Score(s) => (String::new(), s.to_string()),
        };
        trace.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.input_id,
            r.model_id,
            goal,
            score,
            r.latency_ms,
            fmt_opt(r.energy_mj)
        ));
    }
    write_file(trace_path, &trace)?;

    let mut features = String::from("input_id");
    for name in &dataset.dense_names {
        features.push_str(&format!(",f_{name}"));
    }
    for i in 0..dataset.vocab_size {
        features.push_str(&format!(",c_{i}"));
    }
    features.push('\n');
    for row in &dataset.features {
        features.push_str(&row.input_id);
        for v in &row.dense {
            features.push_str(&format!(",{v}"));
        }
        for c in row.dense_counts(dataset.vocab_size) {
            features.push_str(&format!(",{c}"));
        }
        features.push('\n');
    }
    write_file(features_path, &features)?;

    let mut models = MODELS_HEADER.join(",");
    models.push('\n');
    for m in &dataset.models {
        models.push_str(&format!("{},{},{}\n", m.model_id, m.display_name, fmt_opt(m.memory_mb)));
    }
    write_file(models_path, &models)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), TraceError> {
    let mut file = File::create(path).map_err(io_err(path))?;
    file.write_all(contents.as_bytes()).map_err(io_err(path))
}

pub(crate) fn read_file(path: &Path) -> Result<String, TraceError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(io_err(path))?;
    Ok(text)
}

/// Maps each input id to its row position in `dataset.features`.
pub fn input_positions(dataset: &Dataset) -> HashMap<&str, usize> {
    dataset
        .features
        .iter()
        .enumerate()
        .map(|(i, r)| (r.input_id.as_str(), i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    const FEATURES: &str = "input_id,f_a,f_b,c_0,c_1\nx1,0.5,1,0,3\nx2,1.5,2,2,0\n";

    fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn full_trace() -> String {
        let mut s = TRACE_HEADER.join(",") + "\n";
        for input in ["x1", "x2"] {
            for (m, lat) in [("A", 10.0), ("B", 5.0), ("C", 1.0)] {
                s.push_str(&format!("{input},{m},1,,{lat},0.5\n"));
            }
        }
        s
    }

    #[test]
    fn empty_trace_loads() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.csv", &(TRACE_HEADER.join(",") + "\n"));
        let f = write(&dir, "f.csv", "input_id,f_a\n");
        let d = load_dataset(&t, &f).unwrap();
        assert_eq!(d.records.len(), 0);
        assert!(d.models.is_empty());
    }

    #[test]
    fn complete_matrix_loads() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.csv", &full_trace());
        let f = write(&dir, "f.csv", FEATURES);
        let d = load_dataset(&t, &f).unwrap();
        assert_eq!(d.records.len(), 6);
        assert_eq!(d.model_ids(), vec!["A", "B", "C"]);
        assert_eq!(d.mode, DatasetMode::BooleanGoal);
        assert_eq!(d.features[0].counts, vec![(1, 3)]);
        assert_eq!(d.vocab_size, 2);
    }

    #[test]
    fn missing_cell_is_named() {
        let dir = TempDir::new().unwrap();
        let body: String = full_trace().lines().filter(|l| !l.starts_with("x2,B")).map(|l| format!("{l}\n")).collect();
        let t = write(&dir, "t.csv", &body);
        let f = write(&dir, "f.csv", FEATURES);
        match load_dataset(&t, &f) {
            Err(TraceError::Incomplete { input_id, model_id }) => {
                assert_eq!((input_id.as_str(), model_id.as_str()), ("x2", "B"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixed_modes_conflict() {
        let dir = TempDir::new().unwrap();
        let body = TRACE_HEADER.join(",") + "\nx1,A,1,,3,\nx1,B,,0.5,3,\n";
        let t = write(&dir, "t.csv", &body);
        let f = write(&dir, "f.csv", "input_id,f_a\nx1,1\n");
        assert!(matches!(load_dataset(&t, &f), Err(TraceError::ModeConflict { line: 3, .. })));
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = TempDir::new().unwrap();
        let body = TRACE_HEADER.join(",") + "\nx1,A,1,,3,\nx1,B,1,,fast,\n";
        let t = write(&dir, "t.csv", &body);
        let f = write(&dir, "f.csv", "input_id,f_a\nx1,1\n");
        match load_dataset(&t, &f) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_flags_zero_latency_and_duplicates() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.csv", &full_trace());
        let f = write(&dir, "f.csv", FEATURES);
        let mut d = load_dataset(&t, &f).unwrap();
        assert!(validate(&d).is_clean());

        d.records[0].latency_ms = 0.0;
        let report = validate(&d);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(&report.violations[0], Violation::NonPositiveLatency { input_id, .. } if input_id == "x1"));

        d.records[0].latency_ms = 1.0;
        let dup = d.records[1].clone();
        d.records.push(dup);
        let report = validate(&d);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::DuplicateRecord { .. }));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.csv", &full_trace());
        let f = write(&dir, "f.csv", FEATURES);
        let mut d = load_dataset(&t, &f).unwrap();
        d.records[2].latency_ms = 0.1 + 0.2;
        d.features[1].dense[0] = 1.0 / 3.0;
        let (t2, f2, m2) = (dir.path().join("t2"), dir.path().join("f2"), dir.path().join("m2"));
        save_dataset(&d, &t2, &f2, &m2).unwrap();
        let back = load_dataset_with_models(&t2, &f2, Some(&m2)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn row_order_does_not_matter() {
        let dir = TempDir::new().unwrap();
        let t = write(&dir, "t.csv", &full_trace());
        let f = write(&dir, "f.csv", FEATURES);
        let trace = full_trace();
        let mut lines: Vec<&str> = trace.lines().skip(1).collect();
        lines.reverse();
        let permuted = format!("{}\n{}\n", TRACE_HEADER.join(","), lines.join("\n"));
        let t2 = write(&dir, "t2.csv", &permuted);
        let f2 = write(&dir, "f2.csv", "input_id,f_a,f_b,c_0,c_1\nx2,1.5,2,2,0\nx1,0.5,1,0,3\n");
        let mut a = load_dataset(&t, &f).unwrap();
        let mut b = load_dataset(&t2, &f2).unwrap();
        assert_ne!(a, b);
        a.canonicalize();
        b.canonicalize();
        assert_eq!(a, b);
    }
}
