//! Greedy selection of the candidate models a premodel chooses among.
//!
//! Starting from the model that is optimal for the most inputs, each
//! iteration scores every remaining model by an improvement metric and adds
//! the best one, until the realized accuracy gain of the best candidate falls
//! below `theta` percentage points.
//!
//! Accuracy here is ideal-dispatch accuracy: the fraction of inputs on which
//! at least one model of the set meets the goal.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{Label, LabeledExample, OutcomeTable};
use crate::trace_store::{self, TraceError};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("no labeled inputs to select from")]
    EmptyInput,
    #[error("no candidate model meets the goal on any input")]
    NoViableModel,
    #[error("{0}")]
    Parameter(String),
    #[error(transparent)]
    Io(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Accuracy,
    Optimal,
    Alternate,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 3] = [SelectionMethod::Accuracy, SelectionMethod::Optimal, SelectionMethod::Alternate];
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::Accuracy => "Accuracy",
            SelectionMethod::Optimal => "Optimal",
            SelectionMethod::Alternate => "Alternate",
        })
    }
}

impl FromStr for SelectionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "accuracy" => Ok(SelectionMethod::Accuracy),
            "optimal" => Ok(SelectionMethod::Optimal),
            "alternate" => Ok(SelectionMethod::Alternate),
            other => Err(format!("unknown selection method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImprovementMetric {
    AccuracyGain,
    OptimalGain,
}

impl fmt::Display for ImprovementMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImprovementMetric::AccuracyGain => "accuracy",
            ImprovementMetric::OptimalGain => "optimal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    /// Termination threshold in percentage points.
    pub theta: f64,
    /// Keep the final sub-threshold model, as the loop in the original
    /// pseudocode does.
    pub literal_pseudocode: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { method: SelectionMethod::Accuracy, theta: 0.5, literal_pseudocode: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvement {
    /// Gain in ideal-dispatch accuracy, as a fraction.
    pub accuracy_gain: f64,
    /// Increase in ideal-dispatch mean latency, ms.
    pub latency_delta: f64,
    /// Ranking score under the requested metric.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// `most_optimum` for the initial model, else the metric name.
    pub metric: String,
    pub candidate: String,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub latency_delta: f64,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<String>,
    pub log: Vec<IterationLog>,
}

/// Fraction of inputs on which at least one model of `set` meets the goal.
pub fn set_accuracy(table: &OutcomeTable, set: &[usize]) -> f64 {
    if table.n_inputs() == 0 || set.is_empty() {
        return 0.0;
    }
    covered(table, set) as f64 / table.n_inputs() as f64
}

fn covered(table: &OutcomeTable, set: &[usize]) -> usize {
    (0..table.n_inputs()).filter(|&i| set.iter().any(|&m| table.met(i, m))).count()
}

/// Mean latency of perfect dispatch within `set`: the fastest goal-meeting
/// member per input; inputs no member covers are charged the slowest member.
pub fn ideal_mean_latency(table: &OutcomeTable, set: &[usize]) -> f64 {
    if table.n_inputs() == 0 || set.is_empty() {
        return 0.0;
    }
    let total: f64 = (0..table.n_inputs())
        .map(|i| match table.optimum_among(i, set) {
            Some(m) => table.latency(i, m),
            None => set.iter().map(|&m| table.latency(i, m)).fold(0.0, f64::max),
        })
        .sum();
    total / table.n_inputs() as f64
}

/// The model labeled optimal most often; ties by ascending model id.
pub fn most_optimum_model(labeled: &[LabeledExample]) -> Result<String, SelectionError> {
    if labeled.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    most_frequent(labeled.iter().map(|e| &e.label))
}

fn most_frequent<'a>(labels: impl Iterator<Item = &'a Label>) -> Result<String, SelectionError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        if let Some(m) = l.model_id() {
            *counts.entry(m).or_default() += 1;
        }
    }
    // BTreeMap iterates ids ascending, so the first maximum wins ties.
    let mut best: Option<(&str, usize)> = None;
    for (id, c) in counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((id, c));
        }
    }
    best.map(|(id, _)| id.to_string()).ok_or(SelectionError::NoViableModel)
}

pub fn candidate_improvement(
    table: &OutcomeTable,
    current: &[usize],
    candidate: usize,
    metric: ImprovementMetric,
) -> Improvement {
    let mut with = current.to_vec();
    with.push(candidate);
    let accuracy_gain = set_accuracy(table, &with) - set_accuracy(table, current);
    let latency_delta = ideal_mean_latency(table, &with) - ideal_mean_latency(table, current);
    let score = match metric {
        ImprovementMetric::AccuracyGain => accuracy_gain,
        ImprovementMetric::OptimalGain if latency_delta <= 0.0 => {
            if accuracy_gain > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        }
        ImprovementMetric::OptimalGain => accuracy_gain / latency_delta,
    };
    Improvement { accuracy_gain, latency_delta, score }
}

fn metric_for(method: SelectionMethod, step: usize) -> ImprovementMetric {
    match method {
        SelectionMethod::Accuracy => ImprovementMetric::AccuracyGain,
        SelectionMethod::Optimal => ImprovementMetric::OptimalGain,
        SelectionMethod::Alternate if step.is_multiple_of(2) => ImprovementMetric::OptimalGain,
        SelectionMethod::Alternate => ImprovementMetric::AccuracyGain,
    }
}

pub fn select_models(table: &OutcomeTable, config: &SelectionConfig) -> Result<SelectionResult, SelectionError> {
    if !(config.theta > 0.0) {
        return Err(SelectionError::Parameter(format!("theta must be positive, got {}", config.theta)));
    }
    if table.n_inputs() == 0 {
        return Err(SelectionError::EmptyInput);
    }
    let labels: Vec<Label> = (0..table.n_inputs()).map(|i| table.label(i)).collect();
    let first = most_frequent(labels.iter())?;
    let first_idx = table.model_index(&first).expect("label names a dataset model");

    let mut current = vec![first_idx];
    let mut log = vec![IterationLog {
        iteration: 0,
        metric: "most_optimum".into(),
        candidate: first.clone(),
        accuracy_before: 0.0,
        accuracy_after: set_accuracy(table, &current),
        latency_delta: ideal_mean_latency(table, &current),
        chosen: true,
    }];

    let n = table.n_inputs() as f64;
    let mut step = 0;
    loop {
        let remaining: Vec<usize> = (0..table.n_models()).filter(|m| !current.contains(m)).collect();
        if remaining.is_empty() {
            break;
        }
        let metric = metric_for(config.method, step);
        let (candidate, imp) = remaining
            .iter()
            .map(|&m| (m, candidate_improvement(table, &current, m, metric)))
            .min_by(|(a, ia), (b, ib)| {
                ib.score
                    .total_cmp(&ia.score)
                    .then(ib.accuracy_gain.total_cmp(&ia.accuracy_gain))
                    .then_with(|| table.models[*a].cmp(&table.models[*b]))
            })
            .expect("nonempty");

        let before = covered(table, &current);
        let mut with = current.clone();
        with.push(candidate);
        let after = covered(table, &with);
        let gain_pp = (after - before) as f64 * 100.0 / n;
        let keep = if config.literal_pseudocode { true } else { gain_pp >= config.theta };
        log.push(IterationLog {
            iteration: step + 1,
            metric: metric.to_string(),
            candidate: table.models[candidate].clone(),
            accuracy_before: before as f64 / n,
            accuracy_after: after as f64 / n,
            latency_delta: imp.latency_delta,
            chosen: keep,
        });
        if keep {
            current = with;
        }
        let go_on = if config.literal_pseudocode { gain_pp > config.theta } else { keep };
        if !go_on {
            break;
        }
        step += 1;
    }
    Ok(SelectionResult {
        selected: current.iter().map(|&m| table.models[m].clone()).collect(),
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: SelectionMethod,
    pub theta: f64,
    pub selected: Vec<String>,
    pub ideal_accuracy: f64,
    pub ideal_mean_latency_ms: f64,
}

/// One selection run per (method, theta) pair, methods outermost.
pub fn sensitivity_sweep(
    table: &OutcomeTable,
    methods: &[SelectionMethod],
    thetas: &[f64],
) -> Result<Vec<SweepRow>, SelectionError> {
    let mut rows = Vec::with_capacity(methods.len() * thetas.len());
    for &method in methods {
        for &theta in thetas {
            let result = select_models(table, &SelectionConfig { method, theta, literal_pseudocode: false })?;
            let idx = table.indices_of(&result.selected);
            rows.push(SweepRow {
                method,
                theta,
                ideal_accuracy: set_accuracy(table, &idx),
                ideal_mean_latency_ms: ideal_mean_latency(table, &idx),
                selected: result.selected,
            });
        }
    }
    Ok(rows)
}

pub fn write_selection_log(result: &SelectionResult, path: &Path) -> Result<(), SelectionError> {
    let mut out = String::from("iteration,metric,candidate,accuracy_before,accuracy_after,latency_delta,chosen\n");
    for l in &result.log {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{}\n",
            l.iteration,
            l.metric,
            l.candidate,
            l.accuracy_before,
            l.accuracy_after,
            l.latency_delta,
            u8::from(l.chosen)
        ));
    }
    Ok(trace_store::write_file(path, &out)?)
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<(), SelectionError> {
    let mut out = String::from("config,method,theta,n_selected,selected,ideal_accuracy,ideal_mean_latency_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{}-{},{},{},{},{},{:.6},{:.6}\n",
            r.method,
            r.theta,
            r.method,
            r.theta,
            r.selected.len(),
            r.selected.join(";"),
            r.ideal_accuracy,
            r.ideal_mean_latency_ms
        ));
    }
    Ok(trace_store::write_file(path, &out)?)
}
