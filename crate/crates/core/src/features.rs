//! Feature selection and scaling.
//!
//! Dense features pass through a Pearson correlation filter and then a
//! greedy backward search driven by cross-validated premodel accuracy. Count
//! features (bag-of-words style) are ranked by a chi-square statistic on
//! presence/absence. Everything fed to a classifier is min-max scaled with
//! parameters fitted on training rows only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{ClassifierError, TrainerSpec};
use crate::evaluation::fold_assignment;
use crate::labeling::{Label, LabeledExample};
use crate::trace_store::FeatureRow;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("correlation undefined for a constant vector")]
    Undefined,
    #[error("cannot fit a scaler on an empty training set")]
    EmptyFit,
    #[error("row width {found} does not match {expected}")]
    Shape { expected: usize, found: usize },
    #[error("{0}")]
    Parameter(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub pcc_threshold: f64,
    /// Largest cross-validated accuracy drop (as a fraction) for which the
    /// greedy search still removes a feature.
    pub greedy_min_accuracy_drop: f64,
    pub greedy_folds: usize,
    pub chi2_k: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pcc_threshold: 0.75,
            greedy_min_accuracy_drop: 0.01,
            greedy_folds: 5,
            chi2_k: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRemoval {
    pub removed: usize,
    pub kept: usize,
    pub abs_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyRemoval {
    pub feature: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    /// `accuracy_before - accuracy_after`; negative when removal helped.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyOutcome {
    pub kept: Vec<usize>,
    pub removed: Vec<GreedyRemoval>,
    /// Percentage importance of each kept feature.
    pub importance: Vec<(usize, f64)>,
}

/// Which dense and count columns feed the premodel, and why the rest were
/// dropped. Indices refer to the original dataset columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub dense_width: usize,
    pub vocab_size: usize,
    pub kept_dense: Vec<usize>,
    pub removed_by_correlation: Vec<CorrelationRemoval>,
    pub removed_by_greedy: Vec<GreedyRemoval>,
    pub importance: Vec<(usize, f64)>,
    pub kept_counts: Vec<usize>,
    pub chi2_scores: Vec<(usize, f64)>,
}

impl FeatureSelection {
    /// Keeps every column.
    pub fn all(dense_width: usize, vocab_size: usize) -> Self {
        Self {
            dense_width,
            vocab_size,
            kept_dense: (0..dense_width).collect(),
            removed_by_correlation: Vec::new(),
            removed_by_greedy: Vec::new(),
            importance: Vec::new(),
            kept_counts: (0..vocab_size).collect(),
            chi2_scores: Vec::new(),
        }
    }

    /// Width of the projected vector.
    pub fn output_width(&self) -> usize {
        self.kept_dense.len() + self.kept_counts.len()
    }

    /// Selected dense values followed by selected counts.
    pub fn project(&self, row: &FeatureRow) -> Result<Vec<f64>, FeatureError> {
        if row.dense.len() != self.dense_width {
            return Err(FeatureError::Shape { expected: self.dense_width, found: row.dense.len() });
        }
        if let Some(&(i, _)) = row.counts.iter().find(|(i, _)| *i >= self.vocab_size) {
            return Err(FeatureError::Shape { expected: self.vocab_size, found: i + 1 });
        }
        let mut out: Vec<f64> = self.kept_dense.iter().map(|&i| row.dense[i]).collect();
        out.extend(self.kept_counts.iter().map(|&i| row.count(i) as f64));
        Ok(out)
    }

    /// Kept and removed dense indices are disjoint and cover every column.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![0u8; self.dense_width];
        let all = self
            .kept_dense
            .iter()
            .chain(self.removed_by_correlation.iter().map(|r| &r.removed))
            .chain(self.removed_by_greedy.iter().map(|r| &r.feature));
        for &i in all {
            if i >= self.dense_width {
                return false;
            }
            seen[i] += 1;
        }
        seen.iter().all(|&s| s == 1)
    }

    /// Rows of the selection report: stage, feature, action, statistic.
    pub fn report_rows(&self, dense_names: &[String]) -> Vec<(String, String, String, f64)> {
        let name = |i: usize| dense_names.get(i).cloned().unwrap_or_else(|| format!("f{i}"));
        let mut rows = Vec::new();
        for r in &self.removed_by_correlation {
            rows.push(("correlation".into(), name(r.removed), "removed".into(), r.abs_r));
        }
        for r in &self.removed_by_greedy {
            rows.push(("greedy".into(), name(r.feature), "removed".into(), r.delta));
        }
        let importance: BTreeMap<usize, f64> = self.importance.iter().copied().collect();
        for &i in &self.kept_dense {
            rows.push(("greedy".into(), name(i), "kept".into(), importance.get(&i).copied().unwrap_or(0.0)));
        }
        let chi2: BTreeMap<usize, f64> = self.chi2_scores.iter().copied().collect();
        for &i in &self.kept_counts {
            rows.push(("chi2".into(), format!("c_{i}"), "kept".into(), chi2.get(&i).copied().unwrap_or(0.0)));
        }
        rows
    }
}

/// Pearson product-moment correlation, clamped to [-1, 1].
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64, FeatureError> {
    if x.len() != y.len() {
        return Err(FeatureError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(FeatureError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FeatureError::Undefined);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// Drops the higher-indexed member of every pair whose |PCC| exceeds the
/// threshold. Pairs with an undefined correlation count as uncorrelated.
/// Returns the surviving columns and the removal records.
pub fn correlation_filter(
    rows: &[Vec<f64>],
    threshold: f64,
) -> Result<(Vec<usize>, Vec<CorrelationRemoval>), FeatureError> {
    if rows.len() < 2 {
        return Err(FeatureError::TooShort(rows.len()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(FeatureError::Parameter(format!("pcc_threshold {threshold} outside (0, 1]")));
    }
    let width = rows[0].len();
    let columns: Vec<Vec<f64>> = (0..width).map(|j| column(rows, j)).collect();
    let mut removed = vec![false; width];
    let mut log = Vec::new();
    for i in 0..width {
        if removed[i] {
            continue;
        }
        for j in i + 1..width {
            if removed[j] {
                continue;
            }
            let r = match pearson_correlation(&columns[i], &columns[j]) {
                Ok(r) => r.abs(),
                Err(FeatureError::Undefined) => continue,
                Err(e) => return Err(e),
            };
            if r > threshold {
                removed[j] = true;
                log.push(CorrelationRemoval { removed: j, kept: i, abs_r: r });
            }
        }
    }
    let kept = (0..width).filter(|&j| !removed[j]).collect();
    Ok((kept, log))
}

/// Cross-validated accuracy of `trainer` using only `cols`.
pub fn cv_accuracy<C: Ord + Clone>(
    rows: &[Vec<f64>],
    labels: &[C],
    cols: &[usize],
    trainer: &TrainerSpec,
    folds: usize,
    seed: u64,
) -> Result<f64, FeatureError> {
    let n = rows.len();
    if n == 0 {
        return Ok(0.0);
    }
    let projected: Vec<Vec<f64>> = rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
    if n == 1 || folds < 2 {
        let model = trainer.train(&projected, labels)?;
        let hit = (0..n).filter(|&i| model.predict(&projected[i]).map(|p| p.class == labels[i]).unwrap_or(false));
        return Ok(hit.count() as f64 / n as f64);
    }
    let k = folds.min(n);
    let assignment = fold_assignment(n, k, seed);
    let mut hits = 0usize;
    for fold in 0..k {
        let (mut tx, mut ty) = (Vec::new(), Vec::new());
        for i in (0..n).filter(|&i| assignment[i] != fold) {
            tx.push(projected[i].clone());
            ty.push(labels[i].clone());
        }
        let model = trainer.train(&tx, &ty)?;
        for i in (0..n).filter(|&i| assignment[i] == fold) {
            if model.predict(&projected[i])?.class == labels[i] {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / n as f64)
}

/// Backward greedy search: repeatedly remove the feature whose removal costs
/// the least cross-validated accuracy while that cost stays within
/// `config.greedy_min_accuracy_drop`. The last feature is never removed.
pub fn greedy_importance_selection<C: Ord + Clone>(
    rows: &[Vec<f64>],
    labels: &[C],
    trainer: &TrainerSpec,
    config: &PipelineConfig,
) -> Result<GreedyOutcome, FeatureError> {
    if rows.is_empty() {
        return Err(ClassifierError::EmptyTraining.into());
    }
    let width = rows[0].len();
    let cv = |cols: &[usize]| cv_accuracy(rows, labels, cols, trainer, config.greedy_folds, config.seed);
    let without = |cols: &[usize], f: usize| -> Vec<usize> { cols.iter().copied().filter(|&c| c != f).collect() };

    let mut current: Vec<usize> = (0..width).collect();
    let mut base = cv(&current)?;
    let mut removed = Vec::new();
    // Drops measured against the current set, by feature.
    let mut drops: Vec<(usize, f64)> = Vec::new();
    while current.len() > 1 {
        drops.clear();
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in &current {
            let acc = cv(&without(&current, f))?;
            let drop = base - acc;
            drops.push((f, drop));
            if best.is_none_or(|(_, d, _)| drop < d) {
                best = Some((f, drop, acc));
            }
        }
        let (f, drop, acc) = best.expect("at least two features");
        if drop > config.greedy_min_accuracy_drop {
            break;
        }
        removed.push(GreedyRemoval { feature: f, accuracy_before: base, accuracy_after: acc, delta: drop });
        current = without(&current, f);
        base = acc;
        drops.clear();
    }

    let importance = if current.len() == 1 {
        vec![(current[0], 100.0)]
    } else {
        if drops.is_empty() {
            for &f in &current {
                drops.push((f, base - cv(&without(&current, f))?));
            }
        }
        let total: f64 = drops.iter().map(|(_, d)| d.max(0.0)).sum();
        drops
            .iter()
            .map(|&(f, d)| (f, if total > 0.0 { 100.0 * d.max(0.0) / total } else { 0.0 }))
            .collect()
    };
    Ok(GreedyOutcome { kept: current, removed, importance })
}

/// Chi-square statistic per count feature on a presence/absence × class
/// contingency table. Returns `(index, statistic)` ranked by decreasing
/// statistic, ties by ascending index.
pub fn chi2_scores<R: AsRef<[(usize, u64)]>, C: Ord + Clone>(
    counts: &[R],
    labels: &[C],
    vocab_size: usize,
) -> Result<Vec<(usize, f64)>, FeatureError> {
    if counts.len() != labels.len() {
        return Err(FeatureError::LengthMismatch(counts.len(), labels.len()));
    }
    let mut classes: Vec<&C> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    let class_of: Vec<usize> = labels.iter().map(|l| classes.binary_search(&l).unwrap()).collect();
    let n = labels.len() as f64;
    let mut class_totals = vec![0.0; classes.len()];
    for &c in &class_of {
        class_totals[c] += 1.0;
    }
    // present[word][class]
    let mut present = vec![vec![0.0; classes.len()]; vocab_size];
    for (row, &c) in counts.iter().zip(&class_of) {
        for &(w, v) in row.as_ref() {
            if v > 0 && w < vocab_size {
                present[w][c] += 1.0;
            }
        }
    }
    let mut scores: Vec<(usize, f64)> = present
        .iter()
        .enumerate()
        .map(|(w, by_class)| {
            let n_present: f64 = by_class.iter().sum();
            let mut stat = 0.0;
            for (c, &total) in class_totals.iter().enumerate() {
                for (observed, row_total) in [(by_class[c], n_present), (total - by_class[c], n - n_present)] {
                    let expected = row_total * total / n;
                    if expected > 0.0 {
                        stat += (observed - expected).powi(2) / expected;
                    }
                }
            }
            (w, stat)
        })
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scores)
}

/// The `min(k, vocab_size)` count features with the highest chi-square
/// statistic.
pub fn chi2_select<R: AsRef<[(usize, u64)]>, C: Ord + Clone>(
    counts: &[R],
    labels: &[C],
    vocab_size: usize,
    k: usize,
) -> Result<Vec<usize>, FeatureError> {
    if k == 0 {
        return Err(FeatureError::Parameter("chi2 k must be positive".into()));
    }
    let mut ranked = chi2_scores(counts, labels, vocab_size)?;
    ranked.truncate(k);
    Ok(ranked.into_iter().map(|(i, _)| i).collect())
}

/// Per-feature minimum and maximum of the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scaler(train: &[Vec<f64>]) -> Result<ScalerParams, FeatureError> {
    let first = train.first().ok_or(FeatureError::EmptyFit)?;
    let mut min = first.clone();
    let mut max = first.clone();
    for row in &train[1..] {
        if row.len() != min.len() {
            return Err(FeatureError::Shape { expected: min.len(), found: row.len() });
        }
        for (j, &v) in row.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(ScalerParams { min, max })
}

/// Scales into [0, 1], clamping unseen extremes. Constant features map to 0.
pub fn apply_scaler(params: &ScalerParams, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if row.len() != params.min.len() {
        return Err(FeatureError::Shape { expected: params.min.len(), found: row.len() });
    }
    Ok(row
        .iter()
        .zip(params.min.iter().zip(&params.max))
        .map(|(&x, (&lo, &hi))| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
        .collect())
}

/// Runs all three selection stages on labeled examples: correlation filter
/// and greedy search on dense columns, chi-square on count columns.
pub fn select_features(
    labeled: &[LabeledExample],
    dense_width: usize,
    vocab_size: usize,
    trainer: &TrainerSpec,
    config: &PipelineConfig,
) -> Result<FeatureSelection, FeatureError> {
    let mut selection = FeatureSelection::all(dense_width, vocab_size);
    let labels: Vec<Label> = labeled.iter().map(|e| e.label.clone()).collect();
    if dense_width > 0 && labeled.len() >= 2 {
        let rows: Vec<Vec<f64>> = labeled.iter().map(|e| e.features.dense.clone()).collect();
        let (kept, removed) = correlation_filter(&rows, config.pcc_threshold)?;
        let projected: Vec<Vec<f64>> = rows.iter().map(|r| kept.iter().map(|&j| r[j]).collect()).collect();
        let scaler = fit_scaler(&projected)?;
        let scaled: Vec<Vec<f64>> = projected
            .iter()
            .map(|r| apply_scaler(&scaler, r))
            .collect::<Result<_, _>>()?;
        let greedy = greedy_importance_selection(&scaled, &labels, trainer, config)?;
        selection.removed_by_correlation = removed;
        selection.kept_dense = greedy.kept.iter().map(|&j| kept[j]).collect();
        selection.removed_by_greedy = greedy
            .removed
            .into_iter()
            .map(|r| GreedyRemoval { feature: kept[r.feature], ..r })
            .collect();
        selection.importance = greedy.importance.into_iter().map(|(j, v)| (kept[j], v)).collect();
    }
    if vocab_size > 0 && !labeled.is_empty() {
        let counts: Vec<&[(usize, u64)]> = labeled.iter().map(|e| e.features.counts.as_slice()).collect();
        let ranked = chi2_scores(&counts, &labels, vocab_size)?;
        let k = config.chi2_k.max(1).min(vocab_size);
        let mut kept: Vec<usize> = ranked[..k].iter().map(|(i, _)| *i).collect();
        kept.sort_unstable();
        selection.kept_counts = kept;
        selection.chi2_scores = ranked[..k].to_vec();
    }
    Ok(selection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{ClassifierKind, Hyperparams};
    use proptest::prelude::*;

    // Straight from the definition: cov(x,y) / (sd(x) sd(y)), population form.
    fn pcc_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let ex: f64 = x.iter().sum::<f64>() / n;
        let ey: f64 = y.iter().sum::<f64>() / n;
        let exy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
        let ex2: f64 = x.iter().map(|a| a * a).sum::<f64>() / n;
        let ey2: f64 = y.iter().map(|b| b * b).sum::<f64>() / n;
        (exy - ex * ey) / ((ex2 - ex * ex).sqrt() * (ey2 - ey * ey).sqrt())
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson_correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        // Oracle value: cov = 1.0, var_x = var_y = 1.25 → r = 0.8.
        assert!((pcc_oracle(&x, &y) - 0.8).abs() < 1e-12);
        assert!((pearson_correlation(&x, &y).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(pearson_correlation(&[1.0, 1.0], &[1.0, 2.0]), Err(FeatureError::Undefined));
        assert_eq!(pearson_correlation(&[1.0], &[1.0]), Err(FeatureError::TooShort(1)));
    }

    #[test]
    fn identical_columns_filtered() {
        let rows = vec![vec![1.0, 1.0, 0.3], vec![2.0, 2.0, 0.1], vec![3.0, 3.0, 0.2]];
        let (kept, removed) = correlation_filter(&rows, 0.75).unwrap();
        assert_eq!(kept, vec![0, 2]);
        assert_eq!((removed.len(), removed[0].removed, removed[0].kept), (1, 1, 0));
        assert!((removed[0].abs_r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_columns_survive() {
        // Centered, pairwise orthogonal sign patterns → pairwise PCC 0.
        let cols = [[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
        for a in 0..3 {
            for b in a + 1..3 {
                assert!(pcc_oracle(&cols[a], &cols[b]).abs() < 1e-12);
            }
        }
        let rows: Vec<Vec<f64>> = (0..4).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let (kept, removed) = correlation_filter(&rows, 0.75).unwrap();
        assert_eq!(kept, vec![0, 1, 2]);
        assert!(removed.is_empty());
    }

    #[test]
    fn scaler_examples() {
        let p = fit_scaler(&[vec![2.0, 5.0], vec![4.0, 5.0], vec![6.0, 5.0]]).unwrap();
        assert_eq!(apply_scaler(&p, &[2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(apply_scaler(&p, &[4.0, 5.0]).unwrap(), vec![0.5, 0.0]);
        assert_eq!(apply_scaler(&p, &[6.0, 5.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(apply_scaler(&p, &[8.0, 9.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(fit_scaler(&[]), Err(FeatureError::EmptyFit));
    }

    #[test]
    fn chi2_hand_table() {
        // Word 0 only in class A; word 1 once in each class; word 2 never.
        let counts: Vec<Vec<(usize, u64)>> = vec![vec![(0, 2), (1, 1)], vec![(0, 1)], vec![(1, 4)], vec![]];
        let labels = vec!["A", "A", "B", "B"];
        let scores = chi2_scores(&counts, &labels, 3).unwrap();
        // Presence table for word 0 is [[2,0],[0,2]] with all expectations 1 → χ² = 4.
        assert_eq!(scores, vec![(0, 4.0), (1, 0.0), (2, 0.0)]);
        assert_eq!(chi2_select(&counts, &labels, 3, 1).unwrap(), vec![0]);
        assert_eq!(chi2_select(&counts, &labels, 3, 10).unwrap(), vec![0, 1, 2]);
        assert!(chi2_select(&counts, &labels, 3, 0).is_err());
    }

    #[test]
    fn greedy_keeps_last_feature() {
        let rows = vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]];
        let labels = vec![0, 1, 0, 1];
        let trainer = TrainerSpec::new(ClassifierKind::Knn, Hyperparams { knn_k: 1, ..Default::default() });
        let config = PipelineConfig { greedy_min_accuracy_drop: 1.0, greedy_folds: 2, ..Default::default() };
        let out = greedy_importance_selection(&rows, &labels, &trainer, &config).unwrap();
        assert_eq!(out.kept, vec![0]);
        assert_eq!(out.importance, vec![(0, 100.0)]);
    }

    #[test]
    fn greedy_zero_threshold_keeps_informative_features() {
        // Label encodes both binary features, so dropping either one hurts.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for rep in 0..6 {
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                let jitter = rep as f64 * 1e-3;
                rows.push(vec![a + jitter, b + jitter]);
                labels.push((a + 2.0 * b) as usize);
            }
        }
        let trainer = TrainerSpec::new(ClassifierKind::Knn, Hyperparams { knn_k: 1, ..Default::default() });
        let config = PipelineConfig { greedy_min_accuracy_drop: 0.0, ..Default::default() };
        let out = greedy_importance_selection(&rows, &labels, &trainer, &config).unwrap();
        assert_eq!(out.kept, vec![0, 1]);
        assert!(out.removed.is_empty());
        let total: f64 = out.importance.iter().map(|(_, v)| v).sum();
        assert!((total - 100.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine_invariant(
            xs in prop::collection::vec(-100.0f64..100.0, 3..20),
            seed in 0u64..1000,
            scale in 0.1f64..10.0,
            shift in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.3 + ((i as u64 * 7919 + seed) % 97) as f64).collect();
            if let Ok(r) = pearson_correlation(&xs, &ys) {
                prop_assert!(r.abs() <= 1.0);
                let r2 = pearson_correlation(&ys, &xs).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
                let moved: Vec<f64> = xs.iter().map(|x| x * scale + shift).collect();
                prop_assert!((pearson_correlation(&moved, &ys).unwrap() - r).abs() < 1e-9);
            }
        }

        #[test]
        fn scaling_is_monotone(values in prop::collection::vec(-1e3f64..1e3, 2..30)) {
            let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
            let p = fit_scaler(&rows).unwrap();
            for a in &values {
                for b in &values {
                    let (sa, sb) = (apply_scaler(&p, &[*a]).unwrap()[0], apply_scaler(&p, &[*b]).unwrap()[0]);
                    prop_assert!((0.0..=1.0).contains(&sa));
                    if a < b { prop_assert!(sa <= sb); }
                }
            }
        }

        #[test]
        fn chi2_full_k_is_permutation(
            rows in prop::collection::vec(prop::collection::vec((0usize..6, 1u64..4), 0..4), 1..12),
        ) {
            let rows: Vec<Vec<(usize, u64)>> = rows.into_iter().map(|mut r| { r.sort(); r.dedup_by_key(|e| e.0); r }).collect();
            let labels: Vec<usize> = (0..rows.len()).map(|i| i % 3).collect();
            let mut picked = chi2_select(&rows, &labels, 6, 6).unwrap();
            picked.sort();
            prop_assert_eq!(picked, (0..6).collect::<Vec<_>>());
        }
    }
}
