//! Seeded dataset generators for tests, demos and the bundled example data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::trace_store::{CandidateModel, Dataset, DatasetMode, FeatureRow, Outcome, TraceRecord};

pub const BUNDLED_SEED: u64 = 20_240_611;
pub const BUNDLED_INPUTS: usize = 300;

fn record(input: &str, model: &str, met: bool, latency_ms: f64, energy_mj: Option<f64>) -> TraceRecord {
    TraceRecord {
        input_id: input.into(),
        model_id: model.into(),
        outcome: Outcome::GoalMet(met),
        latency_ms,
        energy_mj,
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Two models with complementary coverage.
///
/// `fast` (about 10 ms) meets the goal exactly when `f_signal < 0.6`.
/// `accurate` (about 40 ms) meets it when `f_signal >= 0.6`, and on roughly
/// half of the other inputs. `f_echo` is a near copy of `f_signal`;
/// `f_noise_*` carry nothing. Token 0 is frequent on high-signal inputs.
pub fn bundled_dataset() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(BUNDLED_SEED);
    let mut records = Vec::new();
    let mut features = Vec::new();
    for i in 0..BUNDLED_INPUTS {
        let id = format!("in{i:03}");
        let signal = round3(rng.gen_range(0.0..1.0));
        let low = signal < 0.6;
        let echo = round3(signal * 2.0 + rng.gen_range(-0.02..0.02));
        let noise: Vec<f64> = (0..2).map(|_| round3(rng.gen_range(0.0..1.0))).collect();

        let fast_ms = round3(10.0 + rng.gen_range(-1.0..1.0));
        let accurate_ms = round3(40.0 + rng.gen_range(-3.0..3.0));
        let accurate_met = !low || rng.gen_bool(0.5);
        records.push(record(&id, "accurate", accurate_met, accurate_ms, Some(round3(accurate_ms * 2.5))));
        records.push(record(&id, "fast", low, fast_ms, Some(round3(fast_ms * 1.2))));

        let mut row = FeatureRow::new(id, vec![signal, echo, noise[0], noise[1]]);
        let token0 = if low { rng.gen_range(0..2) } else { rng.gen_range(2..6) };
        row.counts = [(0, token0), (1, rng.gen_range(0..4)), (2, rng.gen_range(0..4))]
            .into_iter()
            .filter(|&(_, c)| c > 0)
            .collect();
        features.push(row);
    }
    Dataset {
        models: vec![
            CandidateModel { model_id: "accurate".into(), display_name: "Accurate model".into(), memory_mb: Some(900.0) },
            CandidateModel { model_id: "fast".into(), display_name: "Fast model".into(), memory_mb: Some(120.0) },
        ],
        records,
        features,
        mode: DatasetMode::BooleanGoal,
        dense_names: vec!["signal".into(), "echo".into(), "noise_a".into(), "noise_b".into()],
        vocab_size: 3,
    }
}

/// Random boolean-goal dataset: `n_models` models with per-model coverage
/// rates and latency scales, and dense features partly tied to coverage.
pub fn random_dataset(seed: u64, n_models: usize, n_inputs: usize, width: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models: Vec<String> = (0..n_models).map(|m| format!("m{m}")).collect();
    let rates: Vec<f64> = (0..n_models).map(|_| rng.gen_range(0.1..0.9)).collect();
    let scales: Vec<f64> = (0..n_models).map(|_| rng.gen_range(1.0..50.0)).collect();
    let mut records = Vec::new();
    let mut features = Vec::new();
    for i in 0..n_inputs {
        let id = format!("r{i:03}");
        let mut dense: Vec<f64> = (0..width).map(|_| round3(rng.gen_range(0.0..1.0))).collect();
        for (m, model) in models.iter().enumerate() {
            let met = rng.gen_bool(rates[m]);
            if met && m < width {
                dense[m] = round3(dense[m] * 0.5 + 0.5);
            }
            let latency = round3(scales[m] * rng.gen_range(0.8..1.2));
            records.push(record(&id, model, met, latency, None));
        }
        features.push(FeatureRow::new(id, dense));
    }
    Dataset {
        models: models.into_iter().map(CandidateModel::new).collect(),
        records,
        features,
        mode: DatasetMode::BooleanGoal,
        dense_names: (0..width).map(|j| format!("x{j}")).collect(),
        vocab_size: 0,
    }
}

/// One feature, two regions separated by a gap: `a` alone meets the goal on
/// the denser left region, `b` alone on the right. Neighborhoods that reach
/// across the gap are outvoted by the left region, so accuracy first rises
/// with the radius and then falls toward the global majority rate.
pub fn radius_dataset(seed: u64, per_region: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_left, n_right) = (per_region * 3 / 2, per_region);
    let mut records = Vec::new();
    let mut features = Vec::new();
    let spots = (0..n_left)
        .map(|i| (0.45 * i as f64 / (n_left - 1).max(1) as f64, 0))
        .chain((0..n_right).map(|j| (0.55 + 0.45 * j as f64 / (n_right - 1).max(1) as f64, 1)));
    for (n, (x, owner)) in spots.enumerate() {
        let id = format!("p{n:04}");
        let x = round3((x + rng.gen_range(-0.001..0.001)).clamp(0.0, 1.0));
        for (m, model) in ["a", "b"].iter().enumerate() {
            records.push(record(&id, model, m == owner, 5.0 + m as f64, None));
        }
        features.push(FeatureRow::new(id, vec![x]));
    }
    Dataset {
        models: vec![CandidateModel::new("a"), CandidateModel::new("b")],
        records,
        features,
        mode: DatasetMode::BooleanGoal,
        dense_names: vec!["x".into()],
        vocab_size: 0,
    }
}
