//! End-to-end use of the library: archive files on disk through training,
//! attacks, Lipschitz summaries and rank statistics.

use kantsc::data::{generate_cbf, list_datasets, load_dataset, write_cbf_dataset, write_ucr_tsv, RawSeries};
use kantsc::evalstats::{friedman_ranks, macro_f1};
use kantsc::robust::{attack_success_rate, lipschitz_dataset_summary, AsrDenominator, AttackConfig, LipschitzConfig};
use kantsc::train::{evaluate, train, TrainConfig};
use kantsc::{build_model, Arch, Error, Layer, ModelConfig};
use std::path::Path;

fn small_cbf(root: &Path, n_train: usize, n_test: usize) {
    let (tr, te) = generate_cbf(n_train, n_test, 3);
    let dir = root.join("CBF");
    std::fs::create_dir_all(&dir).unwrap();
    write_ucr_tsv(dir.join("CBF_TRAIN.tsv"), &tr).unwrap();
    write_ucr_tsv(dir.join("CBF_TEST.tsv"), &te).unwrap();
}

#[test]
fn archive_round_trip_and_listing() {
    let dir = tempfile::tempdir().unwrap();
    write_cbf_dataset(dir.path(), 1).unwrap();
    small_cbf(&dir.path().join("nested"), 6, 6);
    std::fs::create_dir_all(dir.path().join("empty")).unwrap();
    assert_eq!(list_datasets(dir.path()).unwrap(), ["CBF"]);
    let ds = load_dataset(dir.path(), "CBF").unwrap();
    assert_eq!((ds.train.len(), ds.test.len(), ds.d, ds.m), (30, 900, 128, 3));
    assert_eq!(ds.label_map, [1, 2, 3]);
    // Every series is z-normalized.
    for i in 0..ds.train.len() {
        let row = ds.train.x.row(i);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        assert!(mean.abs() < 1e-12);
    }
}

#[test]
fn missing_dataset_is_an_io_error_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_dataset(dir.path(), "Nope").unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("Nope_TRAIN.tsv"), "{err}");
}

#[test]
fn unseen_test_label_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("X");
    std::fs::create_dir_all(&d).unwrap();
    let s = |label, v: f64| RawSeries {
        label,
        values: vec![v, v + 1.0, v - 1.0],
    };
    write_ucr_tsv(d.join("X_TRAIN.tsv"), &[s(1, 0.0), s(2, 1.0)]).unwrap();
    write_ucr_tsv(d.join("X_TEST.tsv"), &[s(7, 0.0)]).unwrap();
    assert!(matches!(load_dataset(dir.path(), "X"), Err(Error::Data(_))));
}

#[test]
fn train_attack_and_estimate_every_architecture() {
    let dir = tempfile::tempdir().unwrap();
    small_cbf(dir.path(), 24, 30);
    let ds = load_dataset(dir.path(), "CBF").unwrap();
    let cfg = TrainConfig {
        epochs: 15,
        seed: 2,
        ..TrainConfig::default()
    };
    let mut accs = Vec::new();
    for arch in Arch::ALL {
        let mut model = build_model(&ModelConfig::new(arch, ds.d, ds.m).with_seed(2)).unwrap();
        let history = train(&mut model, &ds, &cfg).unwrap();
        assert_eq!(history.len(), 15);
        assert!(history.epochs.iter().all(|r| r.train_loss.is_finite()));
        assert!(!model.is_train());
        let acc = evaluate(&mut model, &ds.test).unwrap();
        assert_eq!(history.final_test_acc(), Some(acc));
        let preds = model.predict(&ds.test.x).unwrap();
        let f1 = macro_f1(&preds, &ds.test.y, ds.m).unwrap();
        assert!((0.0..=1.0).contains(&f1));
        accs.push(acc);

        let fp = model.fingerprint();
        let small = ds.test.subset(&[0, 1, 2, 3, 4, 5]);
        let zero = attack_success_rate(&mut model, &small, &AttackConfig::new(0.0), AsrDenominator::Correct).unwrap();
        assert!(zero.undefined || zero.asr == 0.0);
        let cfg = AttackConfig {
            iters: 10,
            ..AttackConfig::new(0.25)
        };
        let r = attack_success_rate(&mut model, &small, &cfg, AsrDenominator::All).unwrap();
        assert!(r.samples.iter().all(|s| s.linf <= 0.25 + 1e-12));
        let lcfg = LipschitzConfig {
            max_points: 4,
            ascent_steps: 3,
            ..LipschitzConfig::default()
        };
        let s = lipschitz_dataset_summary(&mut model, &ds.test, &lcfg).unwrap();
        assert_eq!(s.estimates.len(), 4);
        assert!(s.q1 <= s.median && s.median <= s.q3);
        assert!(s.estimates.iter().all(|e| e.is_finite() && *e >= 0.0));
        assert_eq!(model.fingerprint(), fp, "{arch}: evaluation changed the weights");
    }
    // Learning happened for every model: better than the 1/3 chance level.
    assert!(accs.iter().all(|&a| a > 0.4), "{accs:?}");
}

#[test]
fn training_is_reproducible_across_calls() {
    let dir = tempfile::tempdir().unwrap();
    small_cbf(dir.path(), 12, 9);
    let ds = load_dataset(dir.path(), "CBF").unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = build_model(&ModelConfig::new(Arch::KanMlp, ds.d, ds.m).with_seed(9)).unwrap();
        train(&mut m, &ds, &cfg).unwrap();
        m.fingerprint()
    };
    assert_eq!(run(), run());
    let other = {
        let mut m = build_model(&ModelConfig::new(Arch::KanMlp, ds.d, ds.m).with_seed(10)).unwrap();
        train(&mut m, &ds, &cfg).unwrap();
        m.fingerprint()
    };
    assert_ne!(run(), other);
}

#[test]
fn ranks_of_a_dominating_model() {
    // Five models on three datasets; model 2 is best everywhere.
    let acc = vec![
        vec![0.5, 0.6, 0.9, 0.4, 0.3],
        vec![0.7, 0.1, 0.8, 0.2, 0.6],
        vec![0.2, 0.3, 0.4, 0.1, 0.35],
    ];
    let s = friedman_ranks(&acc).unwrap();
    assert_eq!(s.mean_ranks[2], 1.0);
    assert!((s.mean_ranks.iter().sum::<f64>() - 15.0).abs() < 1e-12);
    assert!(friedman_ranks(&[vec![0.5], vec![0.4]]).is_err());
}
