//! The four premodel classifier kinds behind one train/predict contract.
//!
//! Every classifier is generic over its class type `C` (ordered, so that
//! argmax ties resolve to the smallest class) and produces a normalized score
//! map alongside the predicted class.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gaussian NB variance floor for constant features.
pub const NB_VARIANCE_FLOOR: f64 = 1e-9;

const SPLIT_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("cannot train on an empty example set")]
    EmptyTraining,
    #[error("feature width mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("{0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Knn,
    NaiveBayes,
    DecisionTree,
    LinearSvm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Knn,
        ClassifierKind::NaiveBayes,
        ClassifierKind::DecisionTree,
        ClassifierKind::LinearSvm,
    ];
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::NaiveBayes => "naive_bayes",
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::LinearSvm => "linear_svm",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(ClassifierKind::Knn),
            "nb" | "naive_bayes" | "naivebayes" => Ok(ClassifierKind::NaiveBayes),
            "dt" | "tree" | "decision_tree" | "decisiontree" => Ok(ClassifierKind::DecisionTree),
            "svm" | "linear_svm" | "linearsvm" => Ok(ClassifierKind::LinearSvm),
            other => Err(format!("unknown classifier kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub knn_k: usize,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
    pub svm_epochs: usize,
    pub svm_reg_lambda: f64,
    pub rng_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            knn_k: 5,
            tree_max_depth: 8,
            tree_min_leaf: 2,
            svm_epochs: 200,
            svm_reg_lambda: 1e-3,
            rng_seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn check(&self) -> Result<(), ClassifierError> {
        let bad = |what: &str| Err(ClassifierError::Parameter(format!("{what} must be positive")));
        if self.knn_k == 0 {
            return bad("knn_k");
        }
        if self.tree_max_depth == 0 {
            return bad("tree_max_depth");
        }
        if self.tree_min_leaf == 0 {
            return bad("tree_min_leaf");
        }
        if self.svm_epochs == 0 {
            return bad("svm_epochs");
        }
        if !(self.svm_reg_lambda > 0.0) {
            return bad("svm_reg_lambda");
        }
        Ok(())
    }
}

/// A classifier kind paired with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerSpec {
    pub kind: ClassifierKind,
    pub hp: Hyperparams,
}

impl TrainerSpec {
    pub fn new(kind: ClassifierKind, hp: Hyperparams) -> Self {
        Self { kind, hp }
    }

    pub fn train<C: Ord + Clone>(&self, x: &[Vec<f64>], y: &[C]) -> Result<TrainedClassifier<C>, ClassifierError> {
        train_classifier(self.kind, x, y, &self.hp)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub distance: f64,
}

/// Stored training rows for Euclidean neighbor queries. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborIndex {
    width: usize,
    rows: Vec<Vec<f64>>,
}

impl NeighborIndex {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ClassifierError> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(ClassifierError::Shape { expected: width, found: bad.len() });
        }
        Ok(Self { width, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Every stored row ordered by distance to `x`, ties by row id.
    pub fn rank_all(&self, x: &[f64]) -> Result<Vec<Neighbor>, ClassifierError> {
        if x.len() != self.width {
            return Err(ClassifierError::Shape { expected: self.width, found: x.len() });
        }
        let mut all: Vec<Neighbor> = self
            .rows
            .iter()
            .enumerate()
            .map(|(row, r)| Neighbor { row, distance: euclidean(r, x) })
            .collect();
        all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.row.cmp(&b.row)));
        Ok(all)
    }
}

/// The `k` nearest stored rows to `x`, ascending by distance, ties by row id.
/// The result can be reused by every cascade level that shares the index.
pub fn shared_knn_distances(index: &NeighborIndex, x: &[f64], k: usize) -> Result<Vec<Neighbor>, ClassifierError> {
    if k == 0 || k > index.len() {
        return Err(ClassifierError::Parameter(format!(
            "k = {k} must be in 1..={} (stored rows)",
            index.len()
        )));
    }
    let mut all = index.rank_all(x)?;
    all.truncate(k);
    Ok(all)
}

/// Vote fractions over class indices from an ordered neighbor list.
pub(crate) fn vote_fractions(labels: impl Iterator<Item = usize>, n_classes: usize) -> Vec<f64> {
    let mut votes = vec![0.0; n_classes];
    let mut total = 0.0;
    for l in labels {
        votes[l] += 1.0;
        total += 1.0;
    }
    if total > 0.0 {
        votes.iter_mut().for_each(|v| *v /= total);
    }
    votes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { dist: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Params {
    Constant,
    Knn { index: NeighborIndex, labels: Vec<usize>, k: usize },
    NaiveBayes { log_priors: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>> },
    DecisionTree { nodes: Vec<TreeNode> },
    LinearSvm { weights: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<C> {
    pub class: C,
    pub scores: BTreeMap<C, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier<C> {
    kind: ClassifierKind,
    classes: Vec<C>,
    width: usize,
    params: Params,
}

pub fn train_classifier<C: Ord + Clone>(
    kind: ClassifierKind,
    x: &[Vec<f64>],
    y: &[C],
    hp: &Hyperparams,
) -> Result<TrainedClassifier<C>, ClassifierError> {
    hp.check()?;
    if x.is_empty() {
        return Err(ClassifierError::EmptyTraining);
    }
    if x.len() != y.len() {
        return Err(ClassifierError::Parameter(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let width = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != width) {
        return Err(ClassifierError::Shape { expected: width, found: bad.len() });
    }
    let mut classes: Vec<C> = y.to_vec();
    classes.sort();
    classes.dedup();
    let targets: Vec<usize> = y.iter().map(|c| classes.binary_search(c).expect("class present")).collect();

    let params = if classes.len() == 1 {
        Params::Constant
    } else {
        match kind {
            ClassifierKind::Knn => Params::Knn {
                index: NeighborIndex::new(x.to_vec())?,
                labels: targets,
                k: hp.knn_k,
            },
            ClassifierKind::NaiveBayes => fit_naive_bayes(x, &targets, classes.len()),
            ClassifierKind::DecisionTree => fit_tree(x, &targets, classes.len(), hp),
            ClassifierKind::LinearSvm => fit_svm(x, &targets, classes.len(), hp),
        }
    };
    Ok(TrainedClassifier { kind, classes, width, params })
}

pub fn predict_label<C: Ord + Clone>(c: &TrainedClassifier<C>, x: &[f64]) -> Result<Prediction<C>, ClassifierError> {
    c.predict(x)
}

impl<C: Ord + Clone> TrainedClassifier<C> {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn classes(&self) -> &[C] {
        &self.classes
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Scores aligned with [`Self::classes`]; nonnegative, summing to 1.
    pub fn class_scores(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if x.len() != self.width {
            return Err(ClassifierError::Shape { expected: self.width, found: x.len() });
        }
        let n = self.classes.len();
        Ok(match &self.params {
            Params::Constant => vec![1.0],
            Params::Knn { index, labels, k } => {
                let k = (*k).min(index.len());
                let near = shared_knn_distances(index, x, k)?;
                vote_fractions(near.iter().map(|nb| labels[nb.row]), n)
            }
            Params::NaiveBayes { log_priors, means, vars } => {
                let logp: Vec<f64> = (0..n)
                    .map(|c| {
                        log_priors[c]
                            + x.iter()
                                .zip(&means[c])
                                .zip(&vars[c])
                                .map(|((xi, mu), var)| {
                                    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (xi - mu).powi(2) / (2.0 * var)
                                })
                                .sum::<f64>()
                    })
                    .collect();
                softmax(&logp)
            }
            Params::DecisionTree { nodes } => {
                let mut at = 0;
                loop {
                    match &nodes[at] {
                        TreeNode::Leaf { dist } => break dist.clone(),
                        TreeNode::Split { feature, threshold, left, right } => {
                            at = if x[*feature] <= *threshold { *left } else { *right };
                        }
                    }
                }
            }
            Params::LinearSvm { weights } => {
                let margins: Vec<f64> = weights.iter().map(|w| svm_margin(w, x)).collect();
                softmax(&margins)
            }
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction<C>, ClassifierError> {
        let scores = self.class_scores(x)?;
        let best = argmax(&scores);
        Ok(Prediction {
            class: self.classes[best].clone(),
            scores: self.classes.iter().cloned().zip(scores).collect(),
        })
    }
}

/// First index of the maximum value.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn fit_naive_bayes(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Params {
    let width = x[0].len();
    let mut counts = vec![0usize; n_classes];
    let mut means = vec![vec![0.0; width]; n_classes];
    for (row, &c) in x.iter().zip(y) {
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(row) {
            *m += v;
        }
    }
    for (c, m) in means.iter_mut().enumerate() {
        m.iter_mut().for_each(|v| *v /= counts[c] as f64);
    }
    let mut vars = vec![vec![0.0; width]; n_classes];
    for (row, &c) in x.iter().zip(y) {
        for j in 0..width {
            vars[c][j] += (row[j] - means[c][j]).powi(2);
        }
    }
    for (c, v) in vars.iter_mut().enumerate() {
        v.iter_mut()
            .for_each(|s| *s = (*s / counts[c] as f64).max(NB_VARIANCE_FLOOR));
    }
    let n = x.len() as f64;
    Params::NaiveBayes {
        log_priors: counts.iter().map(|&c| (c as f64 / n).ln()).collect(),
        means,
        vars,
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn fit_tree(x: &[Vec<f64>], y: &[usize], n_classes: usize, hp: &Hyperparams) -> Params {
    let mut nodes = Vec::new();
    let samples: Vec<usize> = (0..x.len()).collect();
    grow(x, y, n_classes, hp, samples, 0, &mut nodes);
    Params::DecisionTree { nodes }
}

fn grow(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    hp: &Hyperparams,
    samples: Vec<usize>,
    depth: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &s in &samples {
        counts[y[s]] += 1;
    }
    let n = samples.len();
    let parent = gini(&counts, n);
    let at = nodes.len();
    let leaf = TreeNode::Leaf { dist: counts.iter().map(|&c| c as f64 / n as f64).collect() };
    nodes.push(leaf);

    if depth >= hp.tree_max_depth || parent <= SPLIT_EPS || n < 2 * hp.tree_min_leaf {
        return at;
    }

    // (impurity, feature, threshold); first strictly-better candidate wins.
    let mut best: Option<(f64, usize, f64)> = None;
    let width = x[0].len();
    for feature in 0..width {
        let mut order = samples.clone();
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
        let mut left = vec![0usize; n_classes];
        let mut right = counts.clone();
        for pos in 0..n - 1 {
            let s = order[pos];
            left[y[s]] += 1;
            right[y[s]] -= 1;
            let (lo, hi) = (x[s][feature], x[order[pos + 1]][feature]);
            let n_left = pos + 1;
            if lo == hi || n_left < hp.tree_min_leaf || n - n_left < hp.tree_min_leaf {
                continue;
            }
            let impurity = (n_left as f64 * gini(&left, n_left) + (n - n_left) as f64 * gini(&right, n - n_left))
                / n as f64;
            if best.is_none_or(|(b, _, _)| impurity < b - SPLIT_EPS) {
                best = Some((impurity, feature, lo + (hi - lo) / 2.0));
            }
        }
    }

    let Some((impurity, feature, threshold)) = best else {
        return at;
    };
    if impurity >= parent - SPLIT_EPS {
        return at;
    }
    let (l, r): (Vec<usize>, Vec<usize>) = samples.into_iter().partition(|&s| x[s][feature] <= threshold);
    let left = grow(x, y, n_classes, hp, l, depth + 1, nodes);
    let right = grow(x, y, n_classes, hp, r, depth + 1, nodes);
    nodes[at] = TreeNode::Split { feature, threshold, left, right };
    at
}

/// Weight vectors carry the bias as their last component.
fn svm_margin(w: &[f64], x: &[f64]) -> f64 {
    let (bias, coef) = w.split_last().expect("bias term");
    coef.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
}

/// One-vs-rest Pegasos: hinge-loss subgradient steps with step size
/// 1/(lambda t), projected onto the ball of radius 1/sqrt(lambda).
fn fit_svm(x: &[Vec<f64>], y: &[usize], n_classes: usize, hp: &Hyperparams) -> Params {
    let width = x[0].len();
    let lambda = hp.svm_reg_lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut weights = vec![vec![0.0; width + 1]; n_classes];
    let mut rng = ChaCha8Rng::seed_from_u64(hp.rng_seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut t = 0u64;
    for _ in 0..hp.svm_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            for (c, w) in weights.iter_mut().enumerate() {
                let target = if y[i] == c { 1.0 } else { -1.0 };
                let violated = target * svm_margin(w, &x[i]) < 1.0;
                let shrink = 1.0 - eta * lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if violated {
                    for (v, xi) in w.iter_mut().zip(x[i].iter().chain(std::iter::once(&1.0))) {
                        *v += eta * target * xi;
                    }
                }
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > radius {
                    let scale = radius / norm;
                    w.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
    }
    Params::LinearSvm { weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp() -> Hyperparams {
        Hyperparams::default()
    }

    fn accuracy<C: Ord + Clone>(c: &TrainedClassifier<C>, x: &[Vec<f64>], y: &[C]) -> f64 {
        let hits = x.iter().zip(y).filter(|(r, t)| c.predict(r).unwrap().class == **t).count();
        hits as f64 / x.len() as f64
    }

    #[test]
    fn single_example_predicts_its_class_everywhere() {
        for kind in ClassifierKind::ALL {
            let c = train_classifier(kind, &[vec![0.3, 0.7]], &["only"], &hp()).unwrap();
            for probe in [[0.0, 0.0], [5.0, -2.0]] {
                let p = c.predict(&probe).unwrap();
                assert_eq!(p.class, "only");
                assert_eq!(p.scores["only"], 1.0);
            }
        }
    }

    #[test]
    fn errors_on_bad_shapes() {
        assert_eq!(
            train_classifier::<u8>(ClassifierKind::Knn, &[], &[], &hp()).unwrap_err(),
            ClassifierError::EmptyTraining
        );
        let err = train_classifier(ClassifierKind::Knn, &[vec![1.0], vec![1.0, 2.0]], &[0, 1], &hp()).unwrap_err();
        assert!(matches!(err, ClassifierError::Shape { .. }));
        let c = train_classifier(ClassifierKind::Knn, &[vec![1.0], vec![2.0]], &[0, 1], &hp()).unwrap();
        assert!(matches!(c.predict(&[1.0, 2.0]), Err(ClassifierError::Shape { expected: 1, found: 2 })));
    }

    #[test]
    fn knn_k1_on_training_point() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let y = vec!['a', 'b', 'c'];
        let h = Hyperparams { knn_k: 1, ..hp() };
        let c = train_classifier(ClassifierKind::Knn, &x, &y, &h).unwrap();
        let p = c.predict(&[1.0, 0.0]).unwrap();
        assert_eq!(p.class, 'b');
        assert_eq!(p.scores[&'b'], 1.0);
    }

    #[test]
    fn knn_three_to_two_vote() {
        // Five nearest: three A at distance 1..3, two B at 1.5 and 2.5; far B rows outvoted.
        let x = vec![
            vec![1.0],
            vec![2.0],
            vec![3.0],
            vec![-1.5],
            vec![-2.5],
            vec![10.0],
            vec![-10.0],
        ];
        let y = vec!["A", "A", "A", "B", "B", "B", "B"];
        let c = train_classifier(ClassifierKind::Knn, &x, &y, &hp()).unwrap();
        let p = c.predict(&[0.0]).unwrap();
        assert_eq!(p.class, "A");
        assert!((p.scores["A"] - 0.6).abs() < 1e-12);
        assert!((p.scores["B"] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn shared_distances_cases() {
        let index = NeighborIndex::new(vec![vec![3.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let near = shared_knn_distances(&index, &[0.0, 0.0], 2).unwrap();
        assert_eq!(near, vec![Neighbor { row: 1, distance: 1.0 }, Neighbor { row: 2, distance: 2.0 }]);

        let near = shared_knn_distances(&index, &[2.0, 0.0], 1).unwrap();
        assert_eq!(near[0], Neighbor { row: 2, distance: 0.0 });

        let tie = NeighborIndex::new(vec![vec![1.0], vec![-1.0]]).unwrap();
        let near = shared_knn_distances(&tie, &[0.0], 2).unwrap();
        assert_eq!(near[0].row, 0);
        assert_eq!(near[1].row, 1);

        assert!(matches!(shared_knn_distances(&index, &[0.0, 0.0], 4), Err(ClassifierError::Parameter(_))));
    }

    #[test]
    fn tree_on_pure_dataset() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![7, 7, 7];
        let c = train_classifier(ClassifierKind::DecisionTree, &x, &y, &hp()).unwrap();
        let p = c.predict(&[100.0]).unwrap();
        assert_eq!(p.class, 7);
        assert_eq!(p.scores[&7], 1.0);
    }

    #[test]
    fn tree_splits_at_midpoint_of_lowest_feature() {
        // Feature 0 and 1 both separate perfectly; feature 0 wins the tie.
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![4.0, 4.0], vec![5.0, 5.0]];
        let y = vec![0, 0, 1, 1];
        let c = train_classifier(ClassifierKind::DecisionTree, &x, &y, &hp()).unwrap();
        match &c.params {
            Params::DecisionTree { nodes } => match nodes[0] {
                TreeNode::Split { feature, threshold, .. } => {
                    assert_eq!(feature, 0);
                    assert_eq!(threshold, 2.5);
                }
                _ => panic!("root should split"),
            },
            _ => unreachable!(),
        }
        assert_eq!(accuracy(&c, &x, &y), 1.0);
    }

    #[test]
    fn tree_respects_min_leaf() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![0, 1, 1];
        let h = Hyperparams { tree_min_leaf: 2, ..hp() };
        let c = train_classifier(ClassifierKind::DecisionTree, &x, &y, &h).unwrap();
        let p = c.predict(&[0.0]).unwrap();
        assert_eq!(p.class, 1);
        assert!((p.scores[&0] - 1.0 / 3.0).abs() < 1e-12);
    }

    // Definitional Gaussian NB: posterior ∝ prior × Π N(x; μ, σ²).
    fn nb_oracle(x: &[Vec<f64>], y: &[usize], q: &[f64]) -> usize {
        let mut best = (f64::NEG_INFINITY, 0);
        for c in 0..2 {
            let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &t)| t == c).map(|(r, _)| r).collect();
            let prior = rows.len() as f64 / x.len() as f64;
            let mut p = prior;
            for j in 0..q.len() {
                let mu = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
                let var = rows.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / rows.len() as f64;
                let var = var.max(NB_VARIANCE_FLOOR);
                p *= (-(q[j] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            }
            if p > best.0 {
                best = (p, c);
            }
        }
        best.1
    }

    #[test]
    fn naive_bayes_disjoint_ranges() {
        let x: Vec<Vec<f64>> = [0.0, 0.5, 1.0, 1.5, 6.0, 6.5, 7.0, 7.5].iter().map(|v| vec![*v]).collect();
        let y = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let c = train_classifier(ClassifierKind::NaiveBayes, &x, &y, &hp()).unwrap();
        assert_eq!(accuracy(&c, &x, &y), 1.0);
        for q in [-1.0, 0.7, 3.0, 3.9, 4.2, 9.0] {
            assert_eq!(c.predict(&[q]).unwrap().class, nb_oracle(&x, &y, &[q]), "probe {q}");
        }
    }

    #[test]
    fn svm_separates_clusters() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            let d = i as f64 * 0.05;
            x.push(vec![0.1 + d, 0.2 - d / 2.0]);
            y.push(false);
            x.push(vec![0.9 - d, 0.8 + d / 3.0]);
            y.push(true);
        }
        let c = train_classifier(ClassifierKind::LinearSvm, &x, &y, &hp()).unwrap();
        assert_eq!(accuracy(&c, &x, &y), 1.0);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64]).collect();
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        for kind in ClassifierKind::ALL {
            let a = train_classifier(kind, &x, &y, &hp()).unwrap();
            let b = train_classifier(kind, &x, &y, &hp()).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn kind_parses_aliases() {
        assert_eq!("KNN".parse::<ClassifierKind>().unwrap(), ClassifierKind::Knn);
        assert_eq!("svm".parse::<ClassifierKind>().unwrap(), ClassifierKind::LinearSvm);
        assert!("cnn".parse::<ClassifierKind>().is_err());
    }
}
