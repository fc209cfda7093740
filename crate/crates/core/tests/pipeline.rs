use std::collections::HashSet;
use std::path::Path;

use adaptive_premodel::classifiers::{ClassifierKind, Hyperparams};
use adaptive_premodel::evaluation::{kfold_split, AdaptiveRecipe, ArchitectureChoice, Evaluator, ModelChoice, Policy};
use adaptive_premodel::features::FeatureSelection;
use adaptive_premodel::labeling::Criterion;
use adaptive_premodel::model_selection::SelectionConfig;
use adaptive_premodel::premodel::{load_premodel, save_premodel, FallbackPolicy};
use adaptive_premodel::soundness::{conformal_pvalue, flag_untrusted, nonconformity, ConformalModel};
use adaptive_premodel::synthetic::bundled_dataset;
use adaptive_premodel::trace_store::load_dataset_with_models;

#[test]
fn bundled_files_match_generator() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    let mut loaded = load_dataset_with_models(
        &dir.join("trace.csv"),
        &dir.join("features.csv"),
        Some(&dir.join("models.csv")),
    )
    .unwrap();
    let mut generated = bundled_dataset();
    loaded.canonicalize();
    generated.canonicalize();
    assert_eq!(loaded, generated, "regenerate with `cargo run --example make_bundled_dataset`");
}

fn recipe(architecture: ArchitectureChoice) -> AdaptiveRecipe {
    AdaptiveRecipe {
        architecture,
        models: ModelChoice::Select(SelectionConfig::default()),
        hp: Hyperparams::default(),
        fallback: FallbackPolicy::ReportFailure,
        overhead_ms: 0.5,
        feature_selection: None,
    }
}

#[test]
fn every_architecture_beats_single_models() {
    let d = bundled_dataset();
    let ev = Evaluator::new(&d, &Criterion::BooleanGoal).unwrap();
    let plan = kfold_split(&d, 5, 1).unwrap();
    let best_single = ["fast", "accurate"]
        .iter()
        .map(|m| ev.evaluate(&Policy::SingleModel(m.to_string()), &plan).unwrap().accuracy)
        .fold(0.0, f64::max);
    for arch in [
        ArchitectureChoice::Single { kind: ClassifierKind::Knn },
        ArchitectureChoice::Single { kind: ClassifierKind::DecisionTree },
        ArchitectureChoice::Cascade { kind: ClassifierKind::Knn },
        ArchitectureChoice::Cascade { kind: ClassifierKind::NaiveBayes },
        ArchitectureChoice::Cascade { kind: ClassifierKind::LinearSvm },
        ArchitectureChoice::Stacked { dense_kind: ClassifierKind::Knn, count_kind: ClassifierKind::NaiveBayes },
    ] {
        let m = ev.evaluate(&Policy::Adaptive(recipe(arch)), &plan).unwrap();
        assert!(m.accuracy > best_single, "{arch:?}: {} vs {best_single}", m.accuracy);
        assert!(m.accuracy <= m.oracle_accuracy);
    }
}

#[test]
fn pretrained_premodel_and_conformal_flags() {
    let d = bundled_dataset();
    let ev = Evaluator::new(&d, &Criterion::BooleanGoal).unwrap();
    let n = ev.table.n_inputs();
    // 60% train, 20% calibration, 20% test, by position.
    let train: Vec<usize> = (0..n).filter(|i| i % 5 < 3).collect();
    let calib: Vec<usize> = (0..n).filter(|i| i % 5 == 3).collect();
    let test: Vec<usize> = (0..n).filter(|i| i % 5 == 4).collect();

    let r = recipe(ArchitectureChoice::Cascade { kind: ClassifierKind::Knn });
    let premodel = r.train(&ev.table, &ev.labeled, d.vocab_size, &train).unwrap();
    assert_eq!(premodel.feature_selection, FeatureSelection::all(4, 3));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("premodel.json");
    save_premodel(&premodel, &path).unwrap();
    let premodel = load_premodel(&path).unwrap();

    let held_out: HashSet<&str> = calib.iter().chain(&test).map(|&i| ev.table.inputs[i].as_str()).collect();
    let sub = d.subset(&held_out);
    let sub_ev = Evaluator::new(&sub, &Criterion::BooleanGoal).unwrap();
    let plan = kfold_split(&sub, 2, 0).unwrap();
    let m = sub_ev.evaluate(&Policy::Pretrained(Box::new(premodel.clone())), &plan).unwrap();
    assert!(m.accuracy > 0.9, "{}", m.accuracy);

    let rows: Vec<_> = calib.iter().map(|&i| ev.labeled[i].features.clone()).collect();
    let labels: Vec<_> = calib.iter().map(|&i| ev.labeled[i].label.clone()).collect();
    let cm = ConformalModel::calibrate(&premodel, &rows, &labels, 0.5, 0.1).unwrap();
    assert_eq!(cm.q(), calib.len());

    let mut flagged = 0;
    for &i in &test {
        let p = premodel.predict(&ev.labeled[i].features).unwrap();
        let pv = conformal_pvalue(&cm, nonconformity(p.confidence).unwrap()).unwrap();
        assert!(pv > 0.0 && pv <= 1.0);
        if flag_untrusted(&cm, p.confidence).unwrap() {
            flagged += 1;
        }
    }
    // A well-calibrated 0.1 threshold flags a minority of exchangeable inputs.
    assert!(flagged * 4 < test.len(), "{flagged} of {}", test.len());
}
