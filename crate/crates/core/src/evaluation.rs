//! Cross-validated policy evaluation and comparison reports.
//!
//! A policy maps each input to a dispatch decision: a candidate model or
//! `Failure`. Dispatching charges the chosen model's latency and energy (plus
//! the premodel overhead for learned policies) and counts a hit when that
//! model meets the goal. Adaptive policies are retrained per fold on the
//! other folds only.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{ClassifierKind, Hyperparams, TrainerSpec};
use crate::features::{select_features, FeatureError, FeatureSelection, PipelineConfig};
use crate::labeling::{Criterion, Label, LabelError, LabeledExample, OutcomeTable};
use crate::model_selection::{select_models, SelectionConfig, SelectionError};
use crate::premodel::{build_cascade, build_single, build_stacked, BuildOptions, FallbackPolicy, Premodel, PremodelError};
use crate::trace_store::{self, Dataset, TraceError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Parameter(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{what} {value} out of domain")]
    Domain { what: &'static str, value: f64 },
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Premodel(#[from] PremodelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] TraceError),
}

/// Fold index for each of `n` positions: a seeded shuffle dealt round-robin
/// into `k` folds, so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    deal(&order, k.max(1))
}

fn deal(order: &[usize], k: usize) -> Vec<usize> {
    let mut fold = vec![0; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Input ids per fold, each list in dataset order.
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    fn from_assignment(inputs: &[String], assignment: &[usize], k: usize, seed: u64, stratified: bool) -> Self {
        let mut folds = vec![Vec::new(); k];
        for (id, &f) in inputs.iter().zip(assignment) {
            folds[f].push(id.clone());
        }
        FoldPlan { k, seed, stratified, folds }
    }

    pub fn fold_of(&self, input_id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|i| i == input_id))
    }

    pub fn n_inputs(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }
}

fn check_k(n: usize, k: usize) -> Result<(), EvalError> {
    if k == 0 || k > n {
        return Err(EvalError::Parameter(format!("k = {k} folds for {n} inputs")));
    }
    Ok(())
}

pub fn kfold_split(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    let inputs: Vec<String> = dataset.features.iter().map(|r| r.input_id.clone()).collect();
    check_k(inputs.len(), k)?;
    Ok(FoldPlan::from_assignment(&inputs, &fold_assignment(inputs.len(), k, seed), k, seed, false))
}

/// Like [`kfold_split`], but inputs sharing an optimum label are spread
/// across folds: each label group is shuffled, then groups are dealt in
/// ascending label order.
pub fn stratified_kfold_split(table: &OutcomeTable, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    let n = table.n_inputs();
    check_k(n, k)?;
    let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(table.label(i)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(n);
    for (_, mut g) in groups {
        g.shuffle(&mut rng);
        order.extend(g);
    }
    Ok(FoldPlan::from_assignment(&table.inputs, &deal(&order, k), k, seed, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Counts indexed `[truth][predicted]` over `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<Label>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Classes are the union of true and predicted labels, ascending.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a Label, &'a Label)>) -> Self {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let classes: Vec<Label> = pairs
            .iter()
            .flat_map(|(t, p)| [(*t).clone(), (*p).clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
        let pos = |l: &Label| classes.binary_search(l).expect("class collected above");
        for (t, p) in pairs {
            counts[pos(t)][pos(p)] += 1;
        }
        ConfusionMatrix { classes, counts }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

pub fn precision_recall_f1(confusion: &ConfusionMatrix) -> PrfReport {
    let c = confusion.classes.len();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|j| {
            let tp = confusion.counts[j][j];
            let predicted: u64 = (0..c).map(|t| confusion.counts[t][j]).sum();
            let actual: u64 = confusion.counts[j].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            ClassMetrics { label: confusion.classes[j].clone(), precision, recall, f1: f1_score(precision, recall) }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if c == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / c as f64
        }
    };
    PrfReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
    }
}

/// Translation quality per second: BLEU squared over inference time.
pub fn bleups(bleu: f64, time_s: f64) -> Result<f64, EvalError> {
    if !(0.0..=1.0).contains(&bleu) {
        return Err(EvalError::Domain { what: "bleu", value: bleu });
    }
    if !(time_s > 0.0) {
        return Err(EvalError::Domain { what: "time_s", value: time_s });
    }
    Ok(bleu * bleu / time_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ArchitectureChoice {
    Single { kind: ClassifierKind },
    /// One level per selected model, in selection order, all of one kind.
    Cascade { kind: ClassifierKind },
    Stacked { dense_kind: ClassifierKind, count_kind: ClassifierKind },
}

impl ArchitectureChoice {
    fn primary_kind(&self) -> ClassifierKind {
        match *self {
            Self::Single { kind } | Self::Cascade { kind } => kind,
            Self::Stacked { dense_kind, .. } => dense_kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelChoice {
    Select(SelectionConfig),
    Fixed { models: Vec<String> },
}

/// How to train a premodel on one fold's training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRecipe {
    pub architecture: ArchitectureChoice,
    pub models: ModelChoice,
    pub hp: Hyperparams,
    pub fallback: FallbackPolicy,
    pub overhead_ms: f64,
    /// `None` keeps every feature.
    pub feature_selection: Option<PipelineConfig>,
}

impl AdaptiveRecipe {
    /// Trains a premodel on `train` (row indices into `table` and `labeled`);
    /// `vocab` is the dataset's count-feature vocabulary size.
    pub fn train(
        &self,
        table: &OutcomeTable,
        labeled: &[LabeledExample],
        vocab: usize,
        train: &[usize],
    ) -> Result<Premodel, EvalError> {
        let sub_table = table.select_inputs(train);
        let sub_labeled: Vec<LabeledExample> = train.iter().map(|&i| labeled[i].clone()).collect();
        let selected = match &self.models {
            ModelChoice::Select(cfg) => select_models(&sub_table, cfg)?.selected,
            ModelChoice::Fixed { models } => models.clone(),
        };
        let dense_width = sub_labeled.first().map_or(0, |e| e.features.dense.len());
        let feature_selection = match &self.feature_selection {
            Some(cfg) => {
                let trainer = TrainerSpec::new(self.architecture.primary_kind(), self.hp.clone());
                select_features(&sub_labeled, dense_width, vocab, &trainer, cfg)?
            }
            None => FeatureSelection::all(dense_width, vocab),
        };
        self.build(&sub_labeled, &sub_table, &selected, feature_selection)
    }

    /// Trains with an explicit feature selection; the dataset's vocabulary
    /// must match the selection's.
    pub fn build(
        &self,
        labeled: &[LabeledExample],
        table: &OutcomeTable,
        selected: &[String],
        feature_selection: FeatureSelection,
    ) -> Result<Premodel, EvalError> {
        let opts = BuildOptions {
            hp: self.hp.clone(),
            fallback: self.fallback.clone(),
            overhead_ms: self.overhead_ms,
            feature_selection,
        };
        Ok(match self.architecture {
            ArchitectureChoice::Single { kind } => build_single(kind, labeled, table, selected, &opts)?,
            ArchitectureChoice::Cascade { kind } => {
                build_cascade(&vec![kind; selected.len()], labeled, table, selected, &opts)?
            }
            ArchitectureChoice::Stacked { dense_kind, count_kind } => {
                build_stacked(dense_kind, count_kind, labeled, table, selected, &opts)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    SingleModel(String),
    Adaptive(AdaptiveRecipe),
    /// A premodel trained elsewhere; it must not have seen any evaluated input.
    Pretrained(Box<Premodel>),
    Oracle,
}

impl Policy {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Policy::SingleModel(_) => "single",
            Policy::Adaptive(_) => "adaptive",
            Policy::Pretrained(_) => "pretrained",
            Policy::Oracle => "oracle",
        }
    }
}

/// Outcome of dispatching one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub input_id: String,
    pub fold: usize,
    pub choice: Label,
    /// Optimum over all candidate models.
    pub target: Label,
    pub hit: bool,
    pub latency_ms: f64,
    pub energy_mj: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub policy_kind: String,
    pub n_inputs: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Arithmetic mean over all inputs.
    pub mean_latency_ms: f64,
    /// Geometric mean of the per-fold mean latencies.
    pub geomean_latency_ms: f64,
    pub mean_energy_mj: Option<f64>,
    pub utilization: BTreeMap<String, f64>,
    pub failure_utilization: f64,
    pub oracle_accuracy: f64,
    pub oracle_mean_latency_ms: f64,
    pub oracle_gap: f64,
}

/// A dataset prepared for repeated policy evaluation under one criterion.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub table: OutcomeTable,
    pub labeled: Vec<LabeledExample>,
    pub vocab_size: usize,
}

impl Evaluator {
    pub fn new(dataset: &Dataset, criterion: &Criterion) -> Result<Self, EvalError> {
        let table = OutcomeTable::build(dataset, criterion)?;
        let labeled = dataset
            .features
            .iter()
            .enumerate()
            .map(|(i, row)| LabeledExample { input_id: row.input_id.clone(), features: row.clone(), label: table.label(i) })
            .collect();
        Ok(Evaluator { table, labeled, vocab_size: dataset.vocab_size })
    }

    fn fold_rows(&self, folds: &FoldPlan) -> Result<Vec<Vec<usize>>, EvalError> {
        let pos: HashMap<&str, usize> = self.table.inputs.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut seen = HashSet::new();
        let rows: Vec<Vec<usize>> = folds
            .folds
            .iter()
            .map(|f| {
                f.iter()
                    .map(|id| {
                        let i = *pos
                            .get(id.as_str())
                            .ok_or_else(|| EvalError::Parameter(format!("fold plan names unknown input `{id}`")))?;
                        if !seen.insert(i) {
                            return Err(EvalError::Parameter(format!("input `{id}` appears in two folds")));
                        }
                        Ok(i)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        if seen.len() != self.table.n_inputs() {
            return Err(EvalError::Parameter(format!(
                "fold plan covers {} of {} inputs",
                seen.len(),
                self.table.n_inputs()
            )));
        }
        Ok(rows)
    }

    fn dispatch(&self, i: usize, fold: usize, choice: Label, overhead_ms: f64) -> Dispatch {
        let model = choice.model_id().and_then(|id| self.table.model_index(id));
        let (latency, energy) = match model {
            Some(m) => (self.table.latency(i, m), self.table.energy(i, m)),
            None => (0.0, Some(0.0)),
        };
        Dispatch {
            input_id: self.table.inputs[i].clone(),
            fold,
            hit: self.table.hit(i, &choice),
            target: self.table.label(i),
            choice,
            latency_ms: latency + overhead_ms,
            energy_mj: energy,
        }
    }

    /// Per-input decisions in fold order.
    pub fn dispatch_all(&self, policy: &Policy, folds: &FoldPlan) -> Result<Vec<Dispatch>, EvalError> {
        let rows = self.fold_rows(folds)?;
        if let Policy::SingleModel(id) = policy {
            if self.table.model_index(id).is_none() {
                return Err(EvalError::Parameter(format!("unknown model `{id}`")));
            }
        }
        if let Policy::Pretrained(p) = policy {
            let trained: HashSet<&str> = p.training_inputs.iter().map(String::as_str).collect();
            if let Some(id) = self.table.inputs.iter().find(|id| trained.contains(id.as_str())) {
                return Err(EvalError::Protocol(format!("premodel was trained on evaluated input `{id}`")));
            }
        }
        let mut out = Vec::with_capacity(self.table.n_inputs());
        for (f, test) in rows.iter().enumerate() {
            let trained = match policy {
                Policy::Adaptive(recipe) => {
                    let train: Vec<usize> = rows
                        .iter()
                        .enumerate()
                        .filter(|(g, _)| *g != f)
                        .flat_map(|(_, r)| r.iter().copied())
                        .collect();
                    if train.is_empty() {
                        return Err(EvalError::Parameter("adaptive evaluation needs at least 2 folds".into()));
                    }
                    Some(recipe.train(&self.table, &self.labeled, self.vocab_size, &train)?)
                }
                _ => None,
            };
            for &i in test {
                let d = match policy {
                    Policy::SingleModel(id) => self.dispatch(i, f, Label::model(id.clone()), 0.0),
                    Policy::Oracle => self.dispatch(i, f, self.table.label(i), 0.0),
                    Policy::Adaptive(_) => {
                        let p = trained.as_ref().expect("trained above");
                        self.dispatch(i, f, p.predict(&self.labeled[i].features)?.choice, p.overhead_ms)
                    }
                    Policy::Pretrained(p) => {
                        self.dispatch(i, f, p.predict(&self.labeled[i].features)?.choice, p.overhead_ms)
                    }
                };
                out.push(d);
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, policy: &Policy, folds: &FoldPlan) -> Result<PolicyMetrics, EvalError> {
        let dispatches = self.dispatch_all(policy, folds)?;
        Ok(self.summarize(policy.kind_name(), &dispatches, folds.k))
    }

    pub fn summarize(&self, policy_kind: &str, dispatches: &[Dispatch], k: usize) -> PolicyMetrics {
        let n = dispatches.len();
        let nf = n.max(1) as f64;
        let hits = dispatches.iter().filter(|d| d.hit).count();
        let prf = precision_recall_f1(&ConfusionMatrix::from_pairs(dispatches.iter().map(|d| (&d.target, &d.choice))));
        let mean_latency_ms = dispatches.iter().map(|d| d.latency_ms).sum::<f64>() / nf;

        let mut fold_sum = vec![(0.0, 0usize); k.max(1)];
        for d in dispatches {
            let s = &mut fold_sum[d.fold.min(k.max(1) - 1)];
            s.0 += d.latency_ms;
            s.1 += 1;
        }
        let fold_means: Vec<f64> = fold_sum.iter().filter(|s| s.1 > 0).map(|s| s.0 / s.1 as f64).collect();
        let geomean_latency_ms = if fold_means.is_empty() {
            0.0
        } else {
            (fold_means.iter().map(|m| m.ln()).sum::<f64>() / fold_means.len() as f64).exp()
        };

        let mean_energy_mj = dispatches
            .iter()
            .try_fold(0.0, |acc, d| d.energy_mj.map(|e| acc + e))
            .map(|s| s / nf);

        let mut utilization: BTreeMap<String, f64> = self.table.models.iter().map(|m| (m.clone(), 0.0)).collect();
        let mut failures = 0usize;
        for d in dispatches {
            match d.choice.model_id() {
                Some(m) => *utilization.entry(m.to_string()).or_default() += 1.0,
                None => failures += 1,
            }
        }
        for v in utilization.values_mut() {
            *v /= nf;
        }
        let oracle = crate::labeling::oracle_summary(&self.table);
        let accuracy = hits as f64 / nf;
        PolicyMetrics {
            policy_kind: policy_kind.to_string(),
            n_inputs: n,
            accuracy,
            precision: prf.macro_precision,
            recall: prf.macro_recall,
            f1: prf.macro_f1,
            mean_latency_ms,
            geomean_latency_ms,
            mean_energy_mj,
            utilization,
            failure_utilization: failures as f64 / nf,
            oracle_accuracy: oracle.accuracy,
            oracle_mean_latency_ms: oracle.mean_latency_ms,
            oracle_gap: oracle.accuracy - accuracy,
        }
    }
}

pub fn evaluate_policy(
    policy: &Policy,
    dataset: &Dataset,
    criterion: &Criterion,
    folds: &FoldPlan,
) -> Result<PolicyMetrics, EvalError> {
    Evaluator::new(dataset, criterion)?.evaluate(policy, folds)
}

/// Accuracy of `a` minus accuracy of `b`.
pub fn accuracy_delta(a: &PolicyMetrics, b: &PolicyMetrics) -> f64 {
    a.accuracy - b.accuracy
}

/// Mean latency of `reference` divided by that of `m`; above 1 means `m` is faster.
pub fn speedup(m: &PolicyMetrics, reference: &PolicyMetrics) -> f64 {
    reference.mean_latency_ms / m.mean_latency_ms
}

/// The most accurate single-model row (ties: lower latency, then first).
pub fn reference_row(metrics: &[(String, PolicyMetrics)]) -> Option<usize> {
    if metrics.len() < 2 {
        return None;
    }
    let mut best: Option<usize> = None;
    for (i, (_, m)) in metrics.iter().enumerate().filter(|(_, (_, m))| m.policy_kind == "single") {
        let better = match best {
            None => true,
            Some(b) => {
                let r = &metrics[b].1;
                m.accuracy > r.accuracy || (m.accuracy == r.accuracy && m.mean_latency_ms < r.mean_latency_ms)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Writes `csv_path` and a plain-text table next to it (`.txt`).
pub fn comparison_report(metrics: &[(String, PolicyMetrics)], csv_path: &Path) -> Result<(), EvalError> {
    if metrics.is_empty() {
        return Err(EvalError::Parameter("report needs at least one policy".into()));
    }
    let models: BTreeSet<&String> = metrics.iter().flat_map(|(_, m)| m.utilization.keys()).collect();
    let reference = reference_row(metrics).map(|i| &metrics[i].1);

    let mut csv = String::from("policy,accuracy,precision,recall,f1,mean_latency_ms,mean_energy_mj,oracle_gap");
    for m in &models {
        write!(csv, ",util_{m}").unwrap();
    }
    csv.push_str(",util_failure,geomean_latency_ms,speedup,accuracy_delta\n");
    for (name, m) in metrics {
        write!(
            csv,
            "{name},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6}",
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.mean_latency_ms,
            opt(m.mean_energy_mj),
            m.oracle_gap
        )
        .unwrap();
        for model in &models {
            write!(csv, ",{:.6}", m.utilization.get(*model).copied().unwrap_or(0.0)).unwrap();
        }
        writeln!(
            csv,
            ",{:.6},{:.6},{},{}",
            m.failure_utilization,
            m.geomean_latency_ms,
            opt(reference.map(|r| speedup(m, r))),
            opt(reference.map(|r| accuracy_delta(m, r)))
        )
        .unwrap();
    }
    trace_store::write_file(csv_path, &csv)?;

    let width = metrics.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let mut txt = format!(
        "{:<width$}  {:>8}  {:>8}  {:>12}  {:>8}  {:>9}\n",
        "policy", "accuracy", "macro_f1", "latency_ms", "speedup", "acc_delta"
    );
    for (name, m) in metrics {
        let sp = reference.map(|r| format!("{:.3}x", speedup(m, r))).unwrap_or_else(|| "-".into());
        let dl = reference
            .map(|r| format!("{:+.2}pp", accuracy_delta(m, r) * 100.0))
            .unwrap_or_else(|| "-".into());
        writeln!(
            txt,
            "{name:<width$}  {:>7.2}%  {:>8.4}  {:>12.3}  {sp:>8}  {dl:>9}",
            m.accuracy * 100.0,
            m.f1,
            m.mean_latency_ms
        )
        .unwrap();
    }
    if let Some(first) = metrics.first() {
        writeln!(
            txt,
            "oracle: accuracy {:.2}%, mean latency {:.3} ms",
            first.1.oracle_accuracy * 100.0,
            first.1.oracle_mean_latency_ms
        )
        .unwrap();
    }
    trace_store::write_file(&csv_path.with_extension("txt"), &txt)?;
    Ok(())
}
