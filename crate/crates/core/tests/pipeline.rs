//! End-to-end pipeline at toy scale: simulate, label, scrub, normalize,
//! train, calibrate, persist, and detect injected anomalies.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use greensentry_core::autoencoder::{init, ModelConfig};
use greensentry_core::data::{read_csv, write_csv, Label, FEATURE_ORDER};
use greensentry_core::detect::{calibrate_threshold, timed_detect, DEFAULT_K};
use greensentry_core::inject::{inject, InjectKind, InjectionSpec};
use greensentry_core::model::ModelState;
use greensentry_core::rules::{default_ruleset, label, scrub};
use greensentry_core::scale::{fit_minmax, split, transform, FeatureMatrix, SplitMode};
use greensentry_core::simulate::{simulate, EventProbabilities, SimConfig};
use greensentry_core::train::{reconstruction_losses, train, Optimizer, TrainConfig};

fn toy_model() -> ModelConfig {
    ModelConfig {
        node_size: 16,
        ..ModelConfig::default()
    }
}

fn toy_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 8,
        batch_size: 16,
        learning_rate: 2e-3,
        optimizer: Optimizer::adam(),
        seed,
    }
}

#[test]
fn small_pipeline_detects_injected_spikes() {
    let sim = SimConfig {
        days: 2,
        seed: 11,
        event_probabilities: EventProbabilities::none(),
        ..SimConfig::default()
    };
    let clean = simulate(&sim).unwrap();
    let rules = default_ruleset();

    // train on scrubbed day 1, test on day 2 with injected spikes
    let mid = clean.records()[clean.len() / 2].timestamp;
    let train_half: Vec<_> = clean
        .records()
        .iter()
        .filter(|r| r.timestamp < mid)
        .cloned()
        .collect();
    let test_half: Vec<_> = clean
        .records()
        .iter()
        .filter(|r| r.timestamp >= mid)
        .cloned()
        .collect();
    let train_set = scrub(
        &label(
            &greensentry_core::data::Dataset::new(train_half).unwrap(),
            &rules,
        )
        .0,
    )
    .unwrap();

    let spec = InjectionSpec {
        count: 20,
        kinds: vec![InjectKind::Spike],
        target_features: FEATURE_ORDER.to_vec(),
        seed: 5,
    };
    let (test_injected, log) = inject(
        &greensentry_core::data::Dataset::new(test_half).unwrap(),
        &spec,
        &rules,
    )
    .unwrap();
    let (test_set, _) = label(&test_injected, &rules);

    let matrix = FeatureMatrix::<f64>::from_dataset(&train_set);
    let (train_m, val_m) = split(&matrix, 0.75, SplitMode::Chronological).unwrap();
    let scaler = fit_minmax(&train_m).unwrap();
    let train_n = transform(&scaler, &train_m);
    let val_n = transform(&scaler, &val_m);
    let params = init::<f64>(&toy_model(), 3).unwrap();
    let (trained, report) = train(&params, &train_n, &val_n, &toy_train_config(3)).unwrap();
    assert_eq!(report.train_losses.len(), 8);

    let val_losses = reconstruction_losses(&trained, &val_n).unwrap();
    let threshold = calibrate_threshold(&val_losses, DEFAULT_K).unwrap();
    let state = ModelState::new(
        toy_model(),
        &trained,
        scaler,
        Some(threshold),
        toy_train_config(3),
    )
    .unwrap();

    let evaluation = timed_detect(&state, &test_set).unwrap();
    assert!(
        evaluation.metrics.accuracy >= 0.9,
        "accuracy {}",
        evaluation.metrics.accuracy
    );
    assert!(evaluation.timing.per_point_seconds > 0.0);
    assert!(evaluation.timing.per_point_seconds.is_finite());

    // anomalous points must sit above normal points on average
    let mut anom = (0.0, 0usize);
    let mut norm = (0.0, 0usize);
    for (rec, &loss) in test_set.records().iter().zip(&evaluation.losses) {
        if rec.label.as_ref().unwrap().is_anomalous() {
            anom = (anom.0 + loss, anom.1 + 1);
        } else {
            norm = (norm.0 + loss, norm.1 + 1);
        }
    }
    assert!(anom.1 >= 20);
    let mean_anom = anom.0 / anom.1 as f64;
    let mean_norm = norm.0 / norm.1 as f64;
    assert!(
        mean_anom > mean_norm,
        "separation violated: {mean_anom} vs {mean_norm}"
    );

    // most injected spikes are caught by the toy model
    let by_minute: std::collections::HashMap<i64, usize> = test_set
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.timestamp.epoch_minute(), i))
        .collect();
    let caught = log
        .entries
        .iter()
        .filter(|e| evaluation.predictions[by_minute[&e.timestamp.epoch_minute()]].is_anomalous())
        .count();
    assert!(
        caught * 10 >= log.entries.len() * 8,
        "only {caught} of {} spikes detected",
        log.entries.len()
    );
}

#[test]
fn perfect_toy_model_scores_all_normal_data_clean() {
    // identity-behaving model: threshold above the max loss means no positives
    let sim = SimConfig {
        days: 1,
        seed: 2,
        event_probabilities: EventProbabilities::none(),
        ..SimConfig::default()
    };
    let (dataset, _) = label(&simulate(&sim).unwrap(), &default_ruleset());
    let matrix = FeatureMatrix::<f64>::from_dataset(&dataset);
    let (train_m, val_m) = split(&matrix, 0.75, SplitMode::Chronological).unwrap();
    let scaler = fit_minmax(&train_m).unwrap();
    let train_n = transform(&scaler, &train_m);
    let val_n = transform(&scaler, &val_m);
    let params = init::<f64>(&toy_model(), 8).unwrap();
    let (trained, _) = train(&params, &train_n, &val_n, &toy_train_config(8)).unwrap();

    // calibrate against the full dataset's losses so nothing exceeds it
    let all_n = transform(&scaler, &matrix);
    let losses = reconstruction_losses(&trained, &all_n).unwrap();
    let max_loss = losses.iter().fold(0f64, |a, &b| a.max(b));
    let threshold = greensentry_core::detect::Threshold {
        value: max_loss * 1.01,
        k: 1,
        source_count: losses.len(),
    };
    let state = ModelState::new(
        toy_model(),
        &trained,
        scaler,
        Some(threshold),
        toy_train_config(8),
    )
    .unwrap();
    let evaluation = timed_detect(&state, &dataset).unwrap();
    assert_eq!(evaluation.confusion.false_pos, 0);
    assert_eq!(evaluation.confusion.true_pos, 0);
    assert_eq!(evaluation.metrics.accuracy, 1.0);
}

#[test]
fn labeled_dataset_roundtrips_through_disk() {
    let sim = SimConfig {
        days: 1,
        seed: 44,
        ..SimConfig::default()
    };
    let base = simulate(&sim).unwrap();
    let rules = default_ruleset();
    let spec = InjectionSpec {
        count: 6,
        kinds: vec![InjectKind::Spike, InjectKind::Stuck, InjectKind::Drift],
        target_features: FEATURE_ORDER.to_vec(),
        seed: 1,
    };
    let (injected, _) = inject(&base, &spec, &rules).unwrap();
    let (labeled, _) = label(&injected, &rules);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dataset.csv");
    write_csv(&labeled, BufWriter::new(File::create(&path).unwrap())).unwrap();
    let back = read_csv(BufReader::new(File::open(&path).unwrap())).unwrap();
    assert_eq!(back, labeled);
    assert_eq!(back.segment_starts(), labeled.segment_starts());
    assert!(back
        .records()
        .iter()
        .any(|r| matches!(&r.label, Some(Label::Anomalous(_)))));
}
