//! Optimum-model labeling and the oracle reference.
//!
//! For each input the optimum model is the goal-meeting candidate with the
//! lowest latency (ties by ascending model id), or `Failure` when no
//! candidate meets the goal.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace_store::{self, Dataset, FeatureRow, Outcome, TraceError, TraceRecord, FAILURE_LITERAL};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("record ({input_id}, {model_id}) does not match the criterion kind")]
    CriterionMode { input_id: String, model_id: String },
    #[error("unknown input `{0}`")]
    UnknownInput(String),
    #[error("no record for input `{input_id}` on model `{model_id}`")]
    MissingRecord { input_id: String, model_id: String },
    #[error("empty input")]
    EmptyInput,
    #[error("labels file: {0}")]
    LabelsFile(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Goal criterion applied to a trace record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    BooleanGoal,
    ScoreThreshold { threshold: f64 },
}

/// A model id or the failure class. Orders models by id, with `Failure` last.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Label {
    Model(String),
    Failure,
}

impl Label {
    pub fn model(id: impl Into<String>) -> Self {
        Label::Model(id.into())
    }

    pub fn model_id(&self) -> Option<&str> {
        match self {
            Label::Model(id) => Some(id),
            Label::Failure => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Label::Failure)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Model(id) => f.write_str(id),
            Label::Failure => f.write_str(FAILURE_LITERAL),
        }
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.to_string()
    }
}

impl From<String> for Label {
    fn from(s: String) -> Label {
        if s == FAILURE_LITERAL {
            Label::Failure
        } else {
            Label::Model(s)
        }
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Label {
        Label::from(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub input_id: String,
    pub features: FeatureRow,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSummary {
    pub accuracy: f64,
    pub mean_latency_ms: f64,
    /// `None` when any dispatched record lacks an energy measurement.
    pub mean_energy_mj: Option<f64>,
}

pub fn meets_goal(record: &TraceRecord, criterion: &Criterion) -> Result<bool, LabelError> {
    match (criterion, record.outcome) {
        (Criterion::BooleanGoal, Outcome::GoalMet(met)) => Ok(met),
        (Criterion::ScoreThreshold { threshold }, Outcome::Score(s)) => Ok(s >= *threshold),
        _ => Err(LabelError::CriterionMode {
            input_id: record.input_id.clone(),
            model_id: record.model_id.clone(),
        }),
    }
}

/// Optimum model for one input, scanning the dataset's records directly.
pub fn optimum_model(input_id: &str, dataset: &Dataset, criterion: &Criterion) -> Result<Label, LabelError> {
    if dataset.feature_row(input_id).is_none() {
        return Err(LabelError::UnknownInput(input_id.to_string()));
    }
    let mut best: Option<&TraceRecord> = None;
    for record in dataset.records_for(input_id) {
        if !meets_goal(record, criterion)? {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => (record.latency_ms, &record.model_id) < (b.latency_ms, &b.model_id),
        };
        if better {
            best = Some(record);
        }
    }
    Ok(best.map_or(Label::Failure, |r| Label::Model(r.model_id.clone())))
}

/// Dense (input × model) view of goal flags, latency and energy under one
/// criterion. Rows follow `dataset.features`; columns follow `dataset.models`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    pub inputs: Vec<String>,
    pub models: Vec<String>,
    met: Vec<bool>,
    latency: Vec<f64>,
    energy: Vec<Option<f64>>,
}

impl OutcomeTable {
    pub fn build(dataset: &Dataset, criterion: &Criterion) -> Result<Self, LabelError> {
        let inputs: Vec<String> = dataset.features.iter().map(|r| r.input_id.clone()).collect();
        let models: Vec<String> = dataset.models.iter().map(|m| m.model_id.clone()).collect();
        let row_of = trace_store::input_positions(dataset);
        let col_of: HashMap<&str, usize> = models.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
        let width = models.len();
        let mut cells: Vec<Option<(bool, f64, Option<f64>)>> = vec![None; inputs.len() * width];
        for record in &dataset.records {
            let (Some(&i), Some(&m)) = (row_of.get(record.input_id.as_str()), col_of.get(record.model_id.as_str()))
            else {
                continue;
            };
            cells[i * width + m] = Some((meets_goal(record, criterion)?, record.latency_ms, record.energy_mj));
        }
        let mut table = OutcomeTable {
            met: Vec::with_capacity(cells.len()),
            latency: Vec::with_capacity(cells.len()),
            energy: Vec::with_capacity(cells.len()),
            inputs,
            models,
        };
        for (pos, cell) in cells.into_iter().enumerate() {
            let (met, latency, energy) = cell.ok_or_else(|| LabelError::MissingRecord {
                input_id: table.inputs[pos / width].clone(),
                model_id: table.models[pos % width].clone(),
            })?;
            table.met.push(met);
            table.latency.push(latency);
            table.energy.push(energy);
        }
        Ok(table)
    }

    /// Builds a table directly from goal and latency matrices (`[input][model]`).
    pub fn from_matrices(
        inputs: Vec<String>,
        models: Vec<String>,
        met: Vec<Vec<bool>>,
        latency: Vec<Vec<f64>>,
    ) -> Self {
        let energy = vec![None; inputs.len() * models.len()];
        OutcomeTable {
            inputs,
            models,
            met: met.into_iter().flatten().collect(),
            latency: latency.into_iter().flatten().collect(),
            energy,
        }
    }

    /// Table over a subset of input rows, in the given order.
    pub fn select_inputs(&self, rows: &[usize]) -> Self {
        let w = self.models.len();
        let pick = |i: usize| i * w..(i + 1) * w;
        OutcomeTable {
            inputs: rows.iter().map(|&i| self.inputs[i].clone()).collect(),
            models: self.models.clone(),
            met: rows.iter().flat_map(|&i| self.met[pick(i)].iter().copied()).collect(),
            latency: rows.iter().flat_map(|&i| self.latency[pick(i)].iter().copied()).collect(),
            energy: rows.iter().flat_map(|&i| self.energy[pick(i)].iter().copied()).collect(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn met(&self, input: usize, model: usize) -> bool {
        self.met[input * self.models.len() + model]
    }

    pub fn latency(&self, input: usize, model: usize) -> f64 {
        self.latency[input * self.models.len() + model]
    }

    pub fn energy(&self, input: usize, model: usize) -> Option<f64> {
        self.energy[input * self.models.len() + model]
    }

    pub fn model_index(&self, model_id: &str) -> Option<usize> {
        self.models.iter().position(|m| m == model_id)
    }

    pub fn input_index(&self, input_id: &str) -> Option<usize> {
        self.inputs.iter().position(|m| m == input_id)
    }

    /// Fastest goal-meeting model among `candidates` for one input.
    pub fn optimum_among(&self, input: usize, candidates: &[usize]) -> Option<usize> {
        candidates
            .iter()
            .copied()
            .filter(|&m| self.met(input, m))
            .min_by(|&a, &b| {
                self.latency(input, a)
                    .total_cmp(&self.latency(input, b))
                    .then_with(|| self.models[a].cmp(&self.models[b]))
            })
    }

    pub fn optimum(&self, input: usize) -> Option<usize> {
        let all: Vec<usize> = (0..self.n_models()).collect();
        self.optimum_among(input, &all)
    }

    pub fn label(&self, input: usize) -> Label {
        self.to_label(self.optimum(input))
    }

    /// Label restricted to a subset of models: the fastest selected model that
    /// meets the goal, else `Failure`.
    pub fn label_among(&self, input: usize, candidates: &[usize]) -> Label {
        self.to_label(self.optimum_among(input, candidates))
    }

    fn to_label(&self, model: Option<usize>) -> Label {
        model.map_or(Label::Failure, |m| Label::Model(self.models[m].clone()))
    }

    /// Whether dispatching `label` on `input` meets the goal. `Failure` and
    /// unknown models are misses.
    pub fn hit(&self, input: usize, label: &Label) -> bool {
        label
            .model_id()
            .and_then(|id| self.model_index(id))
            .is_some_and(|m| self.met(input, m))
    }

    /// Resolves model ids to column indices, skipping unknown ids.
    pub fn indices_of<S: AsRef<str>>(&self, ids: &[S]) -> Vec<usize> {
        ids.iter().filter_map(|id| self.model_index(id.as_ref())).collect()
    }
}

pub fn label_dataset(dataset: &Dataset, criterion: &Criterion) -> Result<Vec<LabeledExample>, LabelError> {
    let table = OutcomeTable::build(dataset, criterion)?;
    Ok(dataset
        .features
        .iter()
        .enumerate()
        .map(|(i, row)| LabeledExample {
            input_id: row.input_id.clone(),
            features: row.clone(),
            label: table.label(i),
        })
        .collect())
}

/// Fraction of examples whose label is each model (or `Failure`).
pub fn optimal_share(labeled: &[LabeledExample]) -> Result<BTreeMap<Label, f64>, LabelError> {
    if labeled.is_empty() {
        return Err(LabelError::EmptyInput);
    }
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for ex in labeled {
        *counts.entry(ex.label.clone()).or_default() += 1;
    }
    let n = labeled.len() as f64;
    Ok(counts.into_iter().map(|(l, c)| (l, c as f64 / n)).collect())
}

/// Accuracy, latency and energy of always dispatching the optimum model.
/// Failure inputs count as misses with zero cost.
pub fn oracle_metrics(dataset: &Dataset, criterion: &Criterion) -> Result<OracleSummary, LabelError> {
    let table = OutcomeTable::build(dataset, criterion)?;
    Ok(oracle_summary(&table))
}

pub fn oracle_summary(table: &OutcomeTable) -> OracleSummary {
    let n = table.n_inputs();
    if n == 0 {
        return OracleSummary { accuracy: 0.0, mean_latency_ms: 0.0, mean_energy_mj: None };
    }
    let mut hits = 0usize;
    let mut latency = 0.0;
    let mut energy = Some(0.0);
    for i in 0..n {
        if let Some(m) = table.optimum(i) {
            hits += 1;
            latency += table.latency(i, m);
            energy = energy.zip(table.energy(i, m)).map(|(a, b)| a + b);
        }
    }
    OracleSummary {
        accuracy: hits as f64 / n as f64,
        mean_latency_ms: latency / n as f64,
        mean_energy_mj: energy.map(|e| e / n as f64),
    }
}

pub fn write_labels(labeled: &[LabeledExample], path: &Path) -> Result<(), LabelError> {
    let mut out = String::from("input_id,label\n");
    for ex in labeled {
        out.push_str(&format!("{},{}\n", ex.input_id, ex.label));
    }
    Ok(trace_store::write_file(path, &out)?)
}

/// Reads an `input_id,label` file into a map.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, Label>, LabelError> {
    let text = trace_store::read_file(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("input_id,label") {
        return Err(LabelError::LabelsFile(format!("{}: expected header `input_id,label`", path.display())));
    }
    let mut labels = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line.split_once(',').ok_or_else(|| {
            LabelError::LabelsFile(format!("{}: line {}: expected two fields", path.display(), n + 2))
        })?;
        labels.insert(id.trim().to_string(), Label::from(label.trim()));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_store::{CandidateModel, DatasetMode};

    fn rec(input: &str, model: &str, met: bool, latency: f64) -> TraceRecord {
        TraceRecord {
            input_id: input.into(),
            model_id: model.into(),
            outcome: Outcome::GoalMet(met),
            latency_ms: latency,
            energy_mj: Some(latency / 10.0),
        }
    }

    fn dataset(records: Vec<TraceRecord>, inputs: &[&str], models: &[&str]) -> Dataset {
        Dataset {
            models: models.iter().map(|m| CandidateModel::new(*m)).collect(),
            records,
            features: inputs.iter().map(|i| FeatureRow::new(*i, vec![0.0])).collect(),
            mode: DatasetMode::BooleanGoal,
            dense_names: vec!["x".into()],
            vocab_size: 0,
        }
    }

    fn two_input_dataset() -> Dataset {
        dataset(
            vec![
                rec("i1", "A", true, 10.0),
                rec("i1", "B", true, 5.0),
                rec("i1", "C", false, 1.0),
                rec("i2", "A", false, 10.0),
                rec("i2", "B", false, 5.0),
                rec("i2", "C", false, 1.0),
            ],
            &["i1", "i2"],
            &["A", "B", "C"],
        )
    }

    // Independent check: enumerate the records and pick by hand-rolled rules.
    fn brute_force_label(d: &Dataset, input: &str) -> Label {
        let mut met: Vec<&TraceRecord> = d
            .records
            .iter()
            .filter(|r| r.input_id == input && r.outcome == Outcome::GoalMet(true))
            .collect();
        met.sort_by(|a, b| a.latency_ms.partial_cmp(&b.latency_ms).unwrap().then(a.model_id.cmp(&b.model_id)));
        met.first().map_or(Label::Failure, |r| Label::model(r.model_id.as_str()))
    }

    #[test]
    fn meets_goal_cases() {
        let c = Criterion::ScoreThreshold { threshold: 0.30 };
        let mut r = rec("i", "m", true, 1.0);
        assert!(meets_goal(&r, &Criterion::BooleanGoal).unwrap());
        r.outcome = Outcome::Score(0.30);
        assert!(meets_goal(&r, &c).unwrap());
        r.outcome = Outcome::Score(0.29);
        assert!(!meets_goal(&r, &c).unwrap());
        assert!(matches!(meets_goal(&r, &Criterion::BooleanGoal), Err(LabelError::CriterionMode { .. })));
    }

    #[test]
    fn optimum_model_cases() {
        let d = two_input_dataset();
        let c = Criterion::BooleanGoal;
        assert_eq!(optimum_model("i1", &d, &c).unwrap(), Label::model("B"));
        assert_eq!(optimum_model("i1", &d, &c).unwrap(), brute_force_label(&d, "i1"));
        assert_eq!(optimum_model("i2", &d, &c).unwrap(), Label::Failure);
        assert!(matches!(optimum_model("nope", &d, &c), Err(LabelError::UnknownInput(_))));

        let single = dataset(vec![rec("i", "only", true, 3.0)], &["i"], &["only"]);
        assert_eq!(optimum_model("i", &single, &c).unwrap(), Label::model("only"));
    }

    #[test]
    fn latency_ties_break_by_model_id() {
        let d = dataset(vec![rec("i", "Z", true, 5.0), rec("i", "A", true, 5.0)], &["i"], &["Z", "A"]);
        assert_eq!(optimum_model("i", &d, &Criterion::BooleanGoal).unwrap(), Label::model("A"));
        let labeled = label_dataset(&d, &Criterion::BooleanGoal).unwrap();
        assert_eq!(labeled[0].label, Label::model("A"));
    }

    #[test]
    fn label_dataset_matches_brute_force() {
        let d = two_input_dataset();
        let labeled = label_dataset(&d, &Criterion::BooleanGoal).unwrap();
        assert_eq!(labeled.len(), 2);
        for ex in &labeled {
            assert_eq!(ex.label, brute_force_label(&d, &ex.input_id));
        }
        let empty = dataset(vec![], &[], &["A"]);
        assert!(label_dataset(&empty, &Criterion::BooleanGoal).unwrap().is_empty());
    }

    #[test]
    fn dominant_model_wins_everywhere() {
        let mut records = Vec::new();
        for i in ["a", "b", "c"] {
            records.push(rec(i, "fast", true, 1.0));
            records.push(rec(i, "slow", i != "b", 9.0));
        }
        let d = dataset(records, &["a", "b", "c"], &["fast", "slow"]);
        let labeled = label_dataset(&d, &Criterion::BooleanGoal).unwrap();
        assert!(labeled.iter().all(|e| e.label == Label::model("fast")));
    }

    #[test]
    fn optimal_share_counts() {
        let mk = |l: Label| LabeledExample { input_id: "x".into(), features: FeatureRow::default(), label: l };
        let ex = vec![mk(Label::model("A")), mk(Label::model("A")), mk(Label::model("B")), mk(Label::Failure)];
        let share = optimal_share(&ex).unwrap();
        assert_eq!(share[&Label::model("A")], 0.5);
        assert_eq!(share[&Label::model("B")], 0.25);
        assert_eq!(share[&Label::Failure], 0.25);
        assert!(matches!(optimal_share(&[]), Err(LabelError::EmptyInput)));
        let all_a = optimal_share(&ex[..2]).unwrap();
        assert_eq!(all_a.len(), 1);
        assert_eq!(all_a[&Label::model("A")], 1.0);
    }

    #[test]
    fn oracle_two_inputs() {
        let d = two_input_dataset();
        let o = oracle_metrics(&d, &Criterion::BooleanGoal).unwrap();
        assert_eq!(o.accuracy, 0.5);
        assert_eq!(o.mean_latency_ms, 2.5);
        assert_eq!(o.mean_energy_mj, Some(0.25));
    }

    #[test]
    fn label_serializes_as_plain_string() {
        let json = serde_json::to_string(&vec![Label::model("A"), Label::Failure]).unwrap();
        assert_eq!(json, r#"["A","FAILURE"]"#);
        let back: Vec<Label> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Label::model("A"), Label::Failure]);
        assert!(Label::model("zzz") < Label::Failure);
    }

    #[test]
    fn labels_file_round_trip() {
        let d = two_input_dataset();
        let labeled = label_dataset(&d, &Criterion::BooleanGoal).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        write_labels(&labeled, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "input_id,label\ni1,B\ni2,FAILURE\n");
        let back = read_labels(&p).unwrap();
        assert_eq!(back["i2"], Label::Failure);
    }
}
