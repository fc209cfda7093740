//! The premodel: a cheap selector run before any candidate model.
//!
//! Two architectures are supported. A single multi-class classifier predicts
//! one of the selected models or `Failure` directly. A cascade asks one binary
//! classifier per selected model, in selection order, "use this model?" and
//! stops at the first yes; when every level says no, the fallback policy
//! decides. KNN levels of a cascade share one distance computation per query
//! and differ only in the labels attached to the stored rows.
//!
//! A stacked variant averages the score maps of a dense-feature classifier
//! and a count-feature classifier; it exists for comparison runs.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    argmax, vote_fractions, ClassifierError, ClassifierKind, Hyperparams, Neighbor, NeighborIndex, TrainedClassifier,
};
use crate::features::{apply_scaler, fit_scaler, FeatureError, FeatureSelection, ScalerParams};
use crate::labeling::{Label, LabeledExample, OutcomeTable};
use crate::trace_store::{self, FeatureRow, TraceError};

pub const PREMODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PremodelError {
    #[error("training: {0}")]
    Training(String),
    #[error("{0}")]
    Parameter(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("premodel file: {0}")]
    Format(String),
    #[error("premodel file version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error(transparent)]
    Io(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeLevel {
    pub kind: ClassifierKind,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PremodelArchitecture {
    Single { kind: ClassifierKind },
    Cascade { levels: Vec<CascadeLevel> },
    Stacked { dense_kind: ClassifierKind, count_kind: ClassifierKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FallbackPolicy {
    UseModel { model_id: String },
    ReportFailure,
}

impl FallbackPolicy {
    pub fn label(&self) -> Label {
        match self {
            FallbackPolicy::UseModel { model_id } => Label::Model(model_id.clone()),
            FallbackPolicy::ReportFailure => Label::Failure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Level {
    Multi {
        classifier: TrainedClassifier<Label>,
    },
    Stacked {
        dense: TrainedClassifier<Label>,
        counts: TrainedClassifier<Label>,
        dense_width: usize,
    },
    Binary {
        target: String,
        classifier: TrainedClassifier<bool>,
    },
    /// KNN level over the premodel's shared index. `labels[row]` is `None`
    /// for rows excluded from this level's training set.
    SharedKnn {
        target: String,
        k: usize,
        labels: Vec<Option<bool>>,
    },
    /// Level with no training examples; never fires.
    Empty {
        target: String,
    },
}

/// Options shared by every build function.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub hp: Hyperparams,
    pub fallback: FallbackPolicy,
    pub overhead_ms: f64,
    pub feature_selection: FeatureSelection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PremodelPrediction {
    pub choice: Label,
    pub levels_consulted: usize,
    /// Premodel probability of `choice`.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Premodel {
    pub version: u32,
    pub architecture: PremodelArchitecture,
    pub selected_models: Vec<String>,
    levels: Vec<Level>,
    shared_index: Option<NeighborIndex>,
    pub scaler: ScalerParams,
    pub feature_selection: FeatureSelection,
    pub fallback: FallbackPolicy,
    pub overhead_ms: f64,
    pub training_inputs: Vec<String>,
}

/// Training targets restricted to the selected models. Labels already in the
/// selected set (or `Failure`) are kept; others become the fastest selected
/// model meeting the goal on that input, else `Failure`.
pub fn restrict_labels(
    labeled: &[LabeledExample],
    outcomes: &OutcomeTable,
    selected: &[String],
) -> Result<Vec<Label>, PremodelError> {
    let selected_idx = outcomes.indices_of(selected);
    labeled
        .iter()
        .map(|ex| match &ex.label {
            Label::Failure => Ok(Label::Failure),
            Label::Model(m) if selected.contains(m) => Ok(ex.label.clone()),
            Label::Model(_) => {
                let i = outcomes
                    .input_index(&ex.input_id)
                    .ok_or_else(|| PremodelError::Training(format!("input `{}` missing from trace", ex.input_id)))?;
                Ok(outcomes.label_among(i, &selected_idx))
            }
        })
        .collect()
}

struct Prepared {
    rows: Vec<Vec<f64>>,
    targets: Vec<Label>,
    scaler: ScalerParams,
}

fn prepare(
    labeled: &[LabeledExample],
    outcomes: &OutcomeTable,
    selected: &[String],
    opts: &BuildOptions,
) -> Result<Prepared, PremodelError> {
    if labeled.is_empty() {
        return Err(PremodelError::Training("empty labeled set".into()));
    }
    if selected.is_empty() {
        return Err(PremodelError::Parameter("no selected models".into()));
    }
    let mut seen = HashSet::new();
    for m in selected {
        if !seen.insert(m) {
            return Err(PremodelError::Parameter(format!("model `{m}` selected twice")));
        }
        if outcomes.model_index(m).is_none() {
            return Err(PremodelError::Parameter(format!("selected model `{m}` is not in the dataset")));
        }
    }
    if let FallbackPolicy::UseModel { model_id } = &opts.fallback {
        if outcomes.model_index(model_id).is_none() {
            return Err(PremodelError::Parameter(format!("fallback model `{model_id}` is not in the dataset")));
        }
    }
    if !(opts.overhead_ms >= 0.0) {
        return Err(PremodelError::Parameter("overhead_ms must be nonnegative".into()));
    }
    let targets = restrict_labels(labeled, outcomes, selected)?;
    let projected: Vec<Vec<f64>> = labeled
        .iter()
        .map(|ex| opts.feature_selection.project(&ex.features))
        .collect::<Result<_, _>>()?;
    let scaler = fit_scaler(&projected)?;
    let rows = projected
        .iter()
        .map(|r| apply_scaler(&scaler, r))
        .collect::<Result<_, _>>()?;
    Ok(Prepared { rows, targets, scaler })
}

fn assemble(
    architecture: PremodelArchitecture,
    levels: Vec<Level>,
    shared_index: Option<NeighborIndex>,
    labeled: &[LabeledExample],
    selected: &[String],
    scaler: ScalerParams,
    opts: &BuildOptions,
) -> Premodel {
    Premodel {
        version: PREMODEL_VERSION,
        architecture,
        selected_models: selected.to_vec(),
        levels,
        shared_index,
        scaler,
        feature_selection: opts.feature_selection.clone(),
        fallback: opts.fallback.clone(),
        overhead_ms: opts.overhead_ms,
        training_inputs: labeled.iter().map(|e| e.input_id.clone()).collect(),
    }
}

/// One multi-class classifier over the selected models plus `Failure`.
pub fn build_single(
    kind: ClassifierKind,
    labeled: &[LabeledExample],
    outcomes: &OutcomeTable,
    selected: &[String],
    opts: &BuildOptions,
) -> Result<Premodel, PremodelError> {
    let p = prepare(labeled, outcomes, selected, opts)?;
    let classifier = crate::classifiers::train_classifier(kind, &p.rows, &p.targets, &opts.hp)?;
    Ok(assemble(
        PremodelArchitecture::Single { kind },
        vec![Level::Multi { classifier }],
        None,
        labeled,
        selected,
        p.scaler,
        opts,
    ))
}

/// One binary level per selected model, in order. Level `i` trains on the
/// examples whose target is not an earlier level's model.
pub fn build_cascade(
    level_kinds: &[ClassifierKind],
    labeled: &[LabeledExample],
    outcomes: &OutcomeTable,
    selected: &[String],
    opts: &BuildOptions,
) -> Result<Premodel, PremodelError> {
    if level_kinds.len() != selected.len() {
        return Err(PremodelError::Parameter(format!(
            "{} level kinds for {} selected models",
            level_kinds.len(),
            selected.len()
        )));
    }
    let p = prepare(labeled, outcomes, selected, opts)?;
    let shared_index = if level_kinds.contains(&ClassifierKind::Knn) {
        Some(NeighborIndex::new(p.rows.clone())?)
    } else {
        None
    };

    let mut levels = Vec::with_capacity(selected.len());
    for (i, (&kind, target)) in level_kinds.iter().zip(selected).enumerate() {
        let earlier = &selected[..i];
        let included: Vec<Option<bool>> = p
            .targets
            .iter()
            .map(|t| match t.model_id() {
                Some(m) if earlier.iter().any(|e| e == m) => None,
                Some(m) => Some(m == target),
                None => Some(false),
            })
            .collect();
        let level = if included.iter().all(Option::is_none) {
            Level::Empty { target: target.clone() }
        } else if kind == ClassifierKind::Knn {
            Level::SharedKnn { target: target.clone(), k: opts.hp.knn_k, labels: included }
        } else {
            let (x, y): (Vec<Vec<f64>>, Vec<bool>) = p
                .rows
                .iter()
                .zip(&included)
                .filter_map(|(r, l)| l.map(|l| (r.clone(), l)))
                .unzip();
            Level::Binary {
                target: target.clone(),
                classifier: crate::classifiers::train_classifier(kind, &x, &y, &opts.hp)?,
            }
        };
        levels.push(level);
    }
    let architecture = PremodelArchitecture::Cascade {
        levels: level_kinds
            .iter()
            .zip(selected)
            .map(|(&kind, target)| CascadeLevel { kind, target: target.clone() })
            .collect(),
    };
    Ok(assemble(architecture, levels, shared_index, labeled, selected, p.scaler, opts))
}

/// Feature stacking: a dense-feature classifier and a count-feature
/// classifier whose score maps are averaged before argmax.
pub fn build_stacked(
    dense_kind: ClassifierKind,
    count_kind: ClassifierKind,
    labeled: &[LabeledExample],
    outcomes: &OutcomeTable,
    selected: &[String],
    opts: &BuildOptions,
) -> Result<Premodel, PremodelError> {
    let dense_width = opts.feature_selection.kept_dense.len();
    if dense_width == 0 || opts.feature_selection.kept_counts.is_empty() {
        return Err(PremodelError::Parameter(
            "feature stacking needs both dense and count features".into(),
        ));
    }
    let p = prepare(labeled, outcomes, selected, opts)?;
    let (dense_rows, count_rows): (Vec<Vec<f64>>, Vec<Vec<f64>>) = p
        .rows
        .iter()
        .map(|r| (r[..dense_width].to_vec(), r[dense_width..].to_vec()))
        .unzip();
    let dense = crate::classifiers::train_classifier(dense_kind, &dense_rows, &p.targets, &opts.hp)?;
    let counts = crate::classifiers::train_classifier(count_kind, &count_rows, &p.targets, &opts.hp)?;
    Ok(assemble(
        PremodelArchitecture::Stacked { dense_kind, count_kind },
        vec![Level::Stacked { dense, counts, dense_width }],
        None,
        labeled,
        selected,
        p.scaler,
        opts,
    ))
}

/// Per-query cache of the shared neighbor ranking.
struct SharedRanking<'a> {
    index: Option<&'a NeighborIndex>,
    ranked: Option<Vec<Neighbor>>,
}

impl SharedRanking<'_> {
    fn positive_score(&mut self, x: &[f64], k: usize, labels: &[Option<bool>]) -> Result<f64, PremodelError> {
        if self.ranked.is_none() {
            let index = self
                .index
                .ok_or_else(|| PremodelError::Format("KNN level without a shared index".into()))?;
            self.ranked = Some(index.rank_all(x)?);
        }
        let ranked = self.ranked.as_ref().expect("computed above");
        let votes = ranked
            .iter()
            .filter_map(|nb| labels[nb.row])
            .take(k)
            .map(usize::from);
        Ok(vote_fractions(votes, 2)[1])
    }
}

/// Merges a class → probability list over labels.
fn accumulate(dist: &mut BTreeMap<Label, f64>, label: Label, p: f64) {
    *dist.entry(label).or_insert(0.0) += p;
}

impl Premodel {
    /// Projects, then scales a raw feature row into classifier space.
    pub fn transform(&self, row: &FeatureRow) -> Result<Vec<f64>, PremodelError> {
        let projected = self.feature_selection.project(row)?;
        Ok(apply_scaler(&self.scaler, &projected)?)
    }

    fn multi_scores(&self, x: &[f64]) -> Result<BTreeMap<Label, f64>, PremodelError> {
        match &self.levels[0] {
            Level::Multi { classifier } => Ok(classifier.predict(x)?.scores),
            Level::Stacked { dense, counts, dense_width } => {
                let a = dense.predict(&x[..*dense_width])?.scores;
                let b = counts.predict(&x[*dense_width..])?.scores;
                let mut merged = BTreeMap::new();
                for (l, p) in a.into_iter().chain(b) {
                    accumulate(&mut merged, l, p / 2.0);
                }
                Ok(merged)
            }
            _ => Err(PremodelError::Format("non-cascade premodel with a binary level".into())),
        }
    }

    fn level_positive(&self, level: &Level, x: &[f64], shared: &mut SharedRanking<'_>) -> Result<f64, PremodelError> {
        match level {
            Level::Binary { classifier, .. } => {
                let scores = classifier.class_scores(x)?;
                Ok(classifier
                    .classes()
                    .iter()
                    .zip(scores)
                    .find(|(c, _)| **c)
                    .map_or(0.0, |(_, s)| s))
            }
            Level::SharedKnn { k, labels, .. } => shared.positive_score(x, *k, labels),
            Level::Empty { .. } => Ok(0.0),
            _ => Err(PremodelError::Format("cascade premodel with a multi-class level".into())),
        }
    }

    fn level_target(level: &Level) -> &str {
        match level {
            Level::Binary { target, .. } | Level::SharedKnn { target, .. } | Level::Empty { target } => target,
            _ => "",
        }
    }

    fn is_cascade(&self) -> bool {
        matches!(self.architecture, PremodelArchitecture::Cascade { .. })
    }

    pub fn predict(&self, row: &FeatureRow) -> Result<PremodelPrediction, PremodelError> {
        let x = self.transform(row)?;
        if !self.is_cascade() {
            let scores = self.multi_scores(&x)?;
            let values: Vec<f64> = scores.values().copied().collect();
            let (label, p) = scores.into_iter().nth(argmax(&values)).expect("nonempty score map");
            return Ok(PremodelPrediction { choice: label, levels_consulted: 1, confidence: p });
        }
        let mut shared = SharedRanking { index: self.shared_index.as_ref(), ranked: None };
        let mut reach = 1.0;
        for (i, level) in self.levels.iter().enumerate() {
            let p = self.level_positive(level, &x, &mut shared)?;
            // Binary argmax ties go to `false`, the smaller class.
            if p > 0.5 {
                return Ok(PremodelPrediction {
                    choice: Label::Model(Self::level_target(level).to_string()),
                    levels_consulted: i + 1,
                    confidence: reach * p,
                });
            }
            reach *= 1.0 - p;
        }
        Ok(PremodelPrediction {
            choice: self.fallback.label(),
            levels_consulted: self.levels.len(),
            confidence: reach,
        })
    }

    /// Probability of every reachable outcome. For a cascade, the mass of
    /// level `i` is the chance that all earlier levels decline and level `i`
    /// accepts; the remainder goes to the fallback.
    pub fn class_distribution(&self, row: &FeatureRow) -> Result<BTreeMap<Label, f64>, PremodelError> {
        let x = self.transform(row)?;
        if !self.is_cascade() {
            return self.multi_scores(&x);
        }
        let mut shared = SharedRanking { index: self.shared_index.as_ref(), ranked: None };
        let mut dist = BTreeMap::new();
        let mut reach = 1.0;
        for level in &self.levels {
            let p = self.level_positive(level, &x, &mut shared)?;
            accumulate(&mut dist, Label::Model(Self::level_target(level).to_string()), reach * p);
            reach *= 1.0 - p;
        }
        accumulate(&mut dist, self.fallback.label(), reach);
        Ok(dist)
    }

    /// Every label the premodel can return.
    pub fn output_labels(&self) -> Vec<Label> {
        let mut out: Vec<Label> = self.selected_models.iter().map(|m| Label::Model(m.clone())).collect();
        out.push(Label::Failure);
        out.push(self.fallback.label());
        out.sort();
        out.dedup();
        out
    }

    fn check_consistency(&self) -> Result<(), PremodelError> {
        let width = self.feature_selection.output_width();
        let bad = |what: String| Err(PremodelError::Format(what));
        if self.scaler.min.len() != width || self.scaler.max.len() != width {
            return bad(format!("scaler width {} does not match {width} selected features", self.scaler.min.len()));
        }
        for level in &self.levels {
            let w = match level {
                Level::Multi { classifier } => classifier.width(),
                Level::Stacked { dense, counts, .. } => dense.width() + counts.width(),
                Level::Binary { classifier, .. } => classifier.width(),
                Level::SharedKnn { labels, .. } => {
                    let index = self.shared_index.as_ref().map(|i| (i.len(), i.width()));
                    match index {
                        Some((n, w)) if n == labels.len() => w,
                        _ => return bad("shared KNN level does not match the shared index".into()),
                    }
                }
                Level::Empty { .. } => width,
            };
            if w != width {
                return bad(format!("classifier width {w} does not match {width} selected features"));
            }
        }
        let expected_levels = match &self.architecture {
            PremodelArchitecture::Cascade { levels } => levels.len(),
            _ => 1,
        };
        if self.levels.len() != expected_levels {
            return bad(format!("{} trained levels, architecture declares {expected_levels}", self.levels.len()));
        }
        Ok(())
    }
}

pub fn premodel_predict(p: &Premodel, row: &FeatureRow) -> Result<PremodelPrediction, PremodelError> {
    p.predict(row)
}

pub fn save_premodel(p: &Premodel, path: &Path) -> Result<(), PremodelError> {
    let json = serde_json::to_string_pretty(p).map_err(|e| PremodelError::Format(e.to_string()))?;
    Ok(trace_store::write_file(path, &(json + "\n"))?)
}

pub fn load_premodel(path: &Path) -> Result<Premodel, PremodelError> {
    parse_premodel(&trace_store::read_file(path)?)
}

pub fn parse_premodel(text: &str) -> Result<Premodel, PremodelError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| PremodelError::Format(e.to_string()))?;
    let found = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| PremodelError::Format("missing `version`".into()))?;
    if found != u64::from(PREMODEL_VERSION) {
        return Err(PremodelError::Version { found, expected: PREMODEL_VERSION });
    }
    let premodel: Premodel = serde_json::from_value(value).map_err(|e| PremodelError::Format(e.to_string()))?;
    premodel.check_consistency()?;
    Ok(premodel)
}
