//! Confidence checks for premodel decisions.
//!
//! Two mechanisms: a permissible-distance sweep, dispatching each test input
//! by majority vote of the training labels within a radius, and an inductive
//! conformal predictor that flags predictions whose nonconformity is unusual
//! relative to a calibration set.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::euclidean;
use crate::evaluation::FoldPlan;
use crate::features::{apply_scaler, fit_scaler, FeatureSelection};
use crate::labeling::{Label, OutcomeTable};
use crate::premodel::{Premodel, PremodelError};
use crate::trace_store::{self, Dataset, FeatureRow, TraceError};

#[derive(Debug, Error)]
pub enum SoundnessError {
    #[error("{what} {value} outside [0, 1]")]
    Domain { what: &'static str, value: f64 },
    #[error("{0}")]
    Parameter(String),
    #[error(transparent)]
    Premodel(#[from] PremodelError),
    #[error(transparent)]
    Io(#[from] TraceError),
}

fn unit(what: &'static str, value: f64) -> Result<f64, SoundnessError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(SoundnessError::Domain { what, value })
    }
}

/// Nonconformity of a label given the premodel's probability for it.
pub fn nonconformity(prob_for_label: f64) -> Result<f64, SoundnessError> {
    Ok(1.0 - unit("probability", prob_for_label)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalModel {
    pub calibration_scores: Vec<f64>,
    pub theta_cal: f64,
    pub trust_threshold: f64,
}

impl ConformalModel {
    pub const DEFAULT_THETA_CAL: f64 = 0.5;
    pub const DEFAULT_TRUST_THRESHOLD: f64 = 0.5;

    pub fn new(calibration_scores: Vec<f64>, theta_cal: f64, trust_threshold: f64) -> Result<Self, SoundnessError> {
        if calibration_scores.is_empty() {
            return Err(SoundnessError::Parameter("calibration set is empty".into()));
        }
        for &a in &calibration_scores {
            unit("calibration score", a)?;
        }
        unit("theta_cal", theta_cal)?;
        unit("trust_threshold", trust_threshold)?;
        Ok(Self { calibration_scores, theta_cal, trust_threshold })
    }

    /// Calibrates from held-out rows and their true labels: each score is the
    /// nonconformity of the true label under the premodel's distribution.
    pub fn calibrate(
        premodel: &Premodel,
        rows: &[FeatureRow],
        labels: &[Label],
        theta_cal: f64,
        trust_threshold: f64,
    ) -> Result<Self, SoundnessError> {
        if rows.len() != labels.len() {
            return Err(SoundnessError::Parameter(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let mut scores = Vec::with_capacity(rows.len());
        for (row, label) in rows.iter().zip(labels) {
            let dist = premodel.class_distribution(row)?;
            let p = dist.get(label).copied().unwrap_or(0.0).clamp(0.0, 1.0);
            scores.push(nonconformity(p)?);
        }
        Self::new(scores, theta_cal, trust_threshold)
    }

    pub fn q(&self) -> usize {
        self.calibration_scores.len()
    }
}

/// Smoothed conformal p-value of a test nonconformity score `a`.
pub fn conformal_pvalue(cm: &ConformalModel, a: f64) -> Result<f64, SoundnessError> {
    unit("test score", a)?;
    let greater = cm.calibration_scores.iter().filter(|&&s| s > a).count() as f64;
    let equal = cm.calibration_scores.iter().filter(|&&s| s == a).count() as f64;
    let denom = cm.q() as f64 + 1.0;
    Ok(greater / denom + cm.theta_cal * (equal + 1.0) / denom)
}

/// Whether a prediction with probability `class_prob` should not be trusted.
pub fn flag_untrusted(cm: &ConformalModel, class_prob: f64) -> Result<bool, SoundnessError> {
    Ok(conformal_pvalue(cm, nonconformity(class_prob)?)? < cm.trust_threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSweepConfig {
    pub radii: Vec<f64>,
}

impl RadiusSweepConfig {
    pub fn new(radii: Vec<f64>) -> Result<Self, SoundnessError> {
        if radii.is_empty() {
            return Err(SoundnessError::Parameter("no radii".into()));
        }
        if radii.iter().any(|r| r.is_nan() || *r < 0.0) {
            return Err(SoundnessError::Parameter("radii must be nonnegative".into()));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SoundnessError::Parameter("radii must be strictly ascending".into()));
        }
        Ok(Self { radii })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusPoint {
    pub radius: f64,
    pub accuracy: f64,
    pub dispatch_failure_fraction: f64,
}

/// Majority label among training points within `radius` (inclusive); ties by
/// ascending label; an empty neighborhood dispatches `Failure`.
pub fn radius_vote(train: &[(Vec<f64>, Label)], x: &[f64], radius: f64) -> Label {
    let mut votes: BTreeMap<&Label, usize> = BTreeMap::new();
    for (row, label) in train {
        if euclidean(row, x) <= radius {
            *votes.entry(label).or_default() += 1;
        }
    }
    let mut best: Option<(&Label, usize)> = None;
    for (l, c) in votes {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((l, c));
        }
    }
    best.map_or(Label::Failure, |(l, _)| l.clone())
}

/// Accuracy-vs-radius curve. `train` rows carry optimum labels; `test` rows
/// carry their row index in `outcomes`. All rows must already be scaled with
/// the training scaler.
pub fn radius_accuracy_sweep(
    train: &[(Vec<f64>, Label)],
    test: &[(Vec<f64>, usize)],
    outcomes: &OutcomeTable,
    cfg: &RadiusSweepConfig,
) -> Vec<RadiusPoint> {
    cfg.radii
        .iter()
        .map(|&radius| {
            let mut hits = 0usize;
            let mut failures = 0usize;
            for (x, input) in test {
                let choice = radius_vote(train, x, radius);
                if choice.is_failure() {
                    failures += 1;
                } else if outcomes.hit(*input, &choice) {
                    hits += 1;
                }
            }
            let n = test.len().max(1) as f64;
            RadiusPoint {
                radius,
                accuracy: hits as f64 / n,
                dispatch_failure_fraction: failures as f64 / n,
            }
        })
        .collect()
}

/// Sums several per-fold curves over the same radii, weighting by test size.
pub fn pool_curves(curves: &[(Vec<RadiusPoint>, usize)]) -> Vec<RadiusPoint> {
    let Some((first, _)) = curves.first() else {
        return Vec::new();
    };
    let total: usize = curves.iter().map(|(_, n)| n).sum();
    let total = total.max(1) as f64;
    (0..first.len())
        .map(|i| RadiusPoint {
            radius: first[i].radius,
            accuracy: curves.iter().map(|(c, n)| c[i].accuracy * *n as f64).sum::<f64>() / total,
            dispatch_failure_fraction: curves
                .iter()
                .map(|(c, n)| c[i].dispatch_failure_fraction * *n as f64)
                .sum::<f64>()
                / total,
        })
        .collect()
}

/// Radius curve pooled over folds: each fold's training rows (all features,
/// scaled on that fold) vote for its test rows.
pub fn cross_validated_radius_curve(
    dataset: &Dataset,
    outcomes: &OutcomeTable,
    plan: &FoldPlan,
    cfg: &RadiusSweepConfig,
) -> Result<Vec<RadiusPoint>, SoundnessError> {
    let all = FeatureSelection::all(dataset.dense_width(), dataset.vocab_size);
    let projected: Vec<Vec<f64>> = dataset
        .features
        .iter()
        .map(|r| all.project(r))
        .collect::<Result<_, _>>()
        .map_err(PremodelError::from)?;
    let row_of = trace_store::input_positions(dataset);
    let mut curves = Vec::with_capacity(plan.folds.len());
    for fold in &plan.folds {
        let test: HashSet<usize> = fold.iter().filter_map(|id| row_of.get(id.as_str()).copied()).collect();
        if test.len() != fold.len() {
            return Err(SoundnessError::Parameter("fold plan names inputs outside the dataset".into()));
        }
        let train: Vec<usize> = (0..projected.len()).filter(|i| !test.contains(i)).collect();
        let train_rows: Vec<Vec<f64>> = train.iter().map(|&i| projected[i].clone()).collect();
        let scaler = fit_scaler(&train_rows).map_err(PremodelError::from)?;
        let scale = |i: usize| apply_scaler(&scaler, &projected[i]).map_err(PremodelError::from);
        let row_in_table = |i: usize| {
            outcomes
                .input_index(&dataset.features[i].input_id)
                .ok_or_else(|| SoundnessError::Parameter("outcome table misses a dataset input".into()))
        };
        let train_set = train
            .iter()
            .map(|&i| Ok((scale(i)?, outcomes.label(row_in_table(i)?))))
            .collect::<Result<Vec<_>, SoundnessError>>()?;
        let mut test_rows: Vec<usize> = test.into_iter().collect();
        test_rows.sort_unstable();
        let test_set = test_rows
            .iter()
            .map(|&i| Ok((scale(i)?, row_in_table(i)?)))
            .collect::<Result<Vec<_>, SoundnessError>>()?;
        curves.push((radius_accuracy_sweep(&train_set, &test_set, outcomes, cfg), test_set.len()));
    }
    Ok(pool_curves(&curves))
}

pub fn write_radius_curve(points: &[RadiusPoint], path: &Path) -> Result<(), SoundnessError> {
    let mut out = String::from("radius,accuracy,dispatch_failure_fraction\n");
    for p in points {
        out.push_str(&format!("{},{:.6},{:.6}\n", p.radius, p.accuracy, p.dispatch_failure_fraction));
    }
    Ok(trace_store::write_file(path, &out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nonconformity_cases() {
        assert_eq!(nonconformity(1.0).unwrap(), 0.0);
        assert_eq!(nonconformity(0.0).unwrap(), 1.0);
        assert_eq!(nonconformity(0.25).unwrap(), 0.75);
        assert!(matches!(nonconformity(1.5), Err(SoundnessError::Domain { .. })));
    }

    #[test]
    fn pvalue_cases() {
        let cm = ConformalModel::new(vec![0.1, 0.2, 0.3], 0.5, 0.5).unwrap();
        assert!((conformal_pvalue(&cm, 0.25).unwrap() - 0.375).abs() < 1e-12);

        let cm1 = ConformalModel { theta_cal: 1.0, ..cm.clone() };
        assert!((conformal_pvalue(&cm1, 1.0).unwrap() - 0.25).abs() < 1e-12);
        assert!((conformal_pvalue(&cm1, 0.0).unwrap() - 1.0).abs() < 1e-12);

        let cm0 = ConformalModel { theta_cal: 0.0, ..cm };
        assert_eq!(conformal_pvalue(&cm0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn trust_flags() {
        // Calibration nonconformity near 1.0; a confident test prediction
        // (nonconformity 0) is less strange than all of them.
        let cm = ConformalModel::new(vec![0.9, 0.95, 1.0], 0.5, 0.5).unwrap();
        // p = 3/4 + 0.5 · 1/4 = 0.875 ≥ 0.5.
        assert!(!flag_untrusted(&cm, 1.0).unwrap());

        let never = ConformalModel { trust_threshold: 0.0, ..cm };
        for p in [0.0, 0.3, 1.0] {
            assert!(!flag_untrusted(&never, p).unwrap());
        }

        // trust_threshold 1: any p < 1 is untrusted. Scores {0.1,0.2,0.3},
        // theta_cal 0.5, class_prob 0.8 → a = 0.2: p = 1/4 + 0.5·2/4 = 0.5.
        let strict = ConformalModel::new(vec![0.1, 0.2, 0.3], 0.5, 1.0).unwrap();
        assert!(flag_untrusted(&strict, 0.8).unwrap());
    }

    #[test]
    fn radius_vote_rules() {
        let train = vec![(vec![0.0], Label::model("A")), (vec![1.0], Label::model("B")), (vec![1.2], Label::model("B"))];
        assert_eq!(radius_vote(&train, &[0.5], 0.0), Label::Failure);
        assert_eq!(radius_vote(&train, &[0.0], 0.0), Label::model("A"));
        assert_eq!(radius_vote(&train, &[0.5], 0.5), Label::model("A"));
        assert_eq!(radius_vote(&train, &[0.5], f64::INFINITY), Label::model("B"));
    }

    #[test]
    fn sweep_extremes() {
        let outcomes = OutcomeTable::from_matrices(
            vec!["t0".into(), "t1".into()],
            vec!["A".into(), "B".into()],
            vec![vec![true, false], vec![false, true]],
            vec![vec![1.0, 1.0]; 2],
        );
        let train = vec![(vec![0.0], Label::model("A")), (vec![0.1], Label::model("A")), (vec![1.0], Label::model("B"))];
        let test = vec![(vec![0.3], 0), (vec![0.9], 1)];
        let cfg = RadiusSweepConfig::new(vec![0.0, 0.2, f64::INFINITY]).unwrap();
        let curve = radius_accuracy_sweep(&train, &test, &outcomes, &cfg);
        assert_eq!(curve[0].accuracy, 0.0);
        assert_eq!(curve[0].dispatch_failure_fraction, 1.0);
        assert_eq!(curve[1].accuracy, 1.0);
        // Global majority is A, which only covers t0.
        assert_eq!(curve[2].accuracy, 0.5);
        assert!(RadiusSweepConfig::new(vec![1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn pvalue_bounded_and_monotone(
            scores in prop::collection::vec(0.0f64..=1.0, 1..20),
            theta in 0.01f64..=1.0,
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
        ) {
            let cm = ConformalModel::new(scores, theta, 0.5).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (plo, phi) = (conformal_pvalue(&cm, lo).unwrap(), conformal_pvalue(&cm, hi).unwrap());
            prop_assert!(plo > 0.0 && plo <= 1.0 + 1e-12);
            prop_assert!(phi > 0.0 && phi <= 1.0 + 1e-12);
            prop_assert!(phi <= plo + 1e-12);
        }

        #[test]
        fn nonconformity_twice_is_identity(x in 0.0f64..=1.0) {
            let twice = nonconformity(nonconformity(x).unwrap()).unwrap();
            prop_assert!((twice - x).abs() < 1e-15);
        }
    }
}
