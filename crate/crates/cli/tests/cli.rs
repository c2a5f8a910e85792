//! Runs the `kantsc` binary against small on-disk fixtures.

use kantsc::{build_model, Arch, ModelConfig};
use kantsc_cli::checkpoint;
use kantsc_cli::commands::{AttackRow, MetricsRow};
use kantsc_cli::output::{read_csv, write_csv};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kantsc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kantsc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("KANTSC_DATA")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Temp dir holding the synthetic CBF archive under `data/`.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&kantsc(&["gen-cbf", "--out", "data", "--seed", "1"], dir.path()));
    dir
}

fn train_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["train", "--data", "data", "--dataset", "CBF", "--seed", "1"];
    if !extra.contains(&"--epochs") {
        v.extend_from_slice(&["--epochs", "3"]);
    }
    v.extend_from_slice(extra);
    v
}

#[test]
fn train_writes_the_run_directory() {
    let ws = workspace();
    ok(&kantsc(&train_args(&["--arch", "kan", "--out", "runs/"]), ws.path()));
    let run = ws.path().join("runs/CBF_kan_s1");
    for f in ["config.json", "model.ckpt", "history.csv", "metrics.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(!history.contains('\r'));
    assert_eq!(history.lines().next().unwrap(), "epoch,lr,train_loss,train_acc,test_acc");
    assert_eq!(history.lines().count(), 4);
    let m: Vec<MetricsRow> = read_csv(&run.join("metrics.csv")).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!((m[0].dataset.as_str(), m[0].arch, m[0].seed), ("CBF", Arch::Kan, 1));
    assert!((0.0..=1.0).contains(&m[0].accuracy) && (0.0..=1.0).contains(&m[0].macro_f1));
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["dataset"], "CBF");
    assert_eq!(cfg["train"]["epochs"], 3);
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let ws = workspace();
    ok(&kantsc(&train_args(&["--arch", "mlp_kan", "--epochs", "0"]), ws.path()));
    let (model, manifest) = checkpoint::load(ws.path().join("runs/CBF_mlp_kan_s1/model.ckpt")).unwrap();
    assert_eq!(manifest.epoch, 0);
    let fresh = build_model(&ModelConfig::new(Arch::MlpKan, 128, 3).with_seed(1)).unwrap();
    assert_eq!(model.fingerprint(), fresh.fingerprint());
}

#[test]
fn reruns_and_config_replays_are_bitwise_identical() {
    let ws = workspace();
    ok(&kantsc(&train_args(&["--arch", "kan_mlp", "--out", "a"]), ws.path()));
    ok(&kantsc(&train_args(&["--arch", "kan_mlp", "--out", "b", "--jobs", "1"]), ws.path()));
    ok(&kantsc(
        &["train", "--config", "a/CBF_kan_mlp_s1/config.json", "--out", "c"],
        ws.path(),
    ));
    let read = |d: &str| std::fs::read(ws.path().join(d).join("CBF_kan_mlp_s1/model.ckpt")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(read("a"), read("c"));
    let hist = |d: &str| std::fs::read(ws.path().join(d).join("CBF_kan_mlp_s1/history.csv")).unwrap();
    assert_eq!(hist("a"), hist("c"));
}

#[test]
fn attack_and_lipschitz_on_a_checkpoint() {
    let ws = workspace();
    ok(&kantsc(&train_args(&["--arch", "mlp1"]), ws.path()));
    let ckpt = "runs/CBF_mlp1_s1/model.ckpt";

    let out = kantsc(&["attack", "--checkpoint", ckpt, "--max-samples", "40", "--iters", "20"], ws.path());
    ok(&out);
    let rows: Vec<AttackRow> = read_csv(&ws.path().join("runs/CBF_mlp1_s1/attack/attack.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.eps).collect::<Vec<_>>(), [0.05, 0.1, 0.25, 0.5]);
    assert!(rows.iter().all(|r| r.n_eval == 40 && r.model == "mlp1" && r.seed == 1));

    let out = kantsc(
        &["attack", "--checkpoint", ckpt, "--eps", "0", "--max-samples", "10", "--out", "zero", "--asr-denominator", "all"],
        ws.path(),
    );
    ok(&out);
    let rows: Vec<AttackRow> = read_csv(&ws.path().join("zero/attack.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].asr, 0.0);
    assert!(ws.path().join("zero/config.json").is_file());

    let lip = |out: &str| {
        ok(&kantsc(
            &["lipschitz", "--checkpoint", ckpt, "--max-points", "6", "--steps", "3", "--out", out],
            ws.path(),
        ));
        (
            std::fs::read_to_string(ws.path().join(out).join("lipschitz.csv")).unwrap(),
            std::fs::read_to_string(ws.path().join(out).join("lipschitz_summary.csv")).unwrap(),
        )
    };
    let (a, sa) = lip("l1");
    let (b, sb) = lip("l2");
    assert_eq!((a.clone(), sa.clone()), (b, sb));
    assert_eq!(a.lines().count(), 7);
    assert!(sa.starts_with("dataset,model,seed,n,radius,q1,median,q3\n"));

    ok(&kantsc(&train_args(&["--arch", "kan", "--epochs", "1"]), ws.path()));
    ok(&kantsc(
        &[
            "lipschitz",
            "--checkpoint",
            "runs/CBF_kan_s1/model.ckpt",
            "--diff",
            ckpt,
            "--max-points",
            "4",
            "--steps",
            "2",
            "--out",
            "diff",
        ],
        ws.path(),
    ));
    let text = std::fs::read_to_string(ws.path().join("diff/lipschitz_diff.csv")).unwrap();
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let (a, b, d): (f64, f64, f64) = (fields[3].parse().unwrap(), fields[4].parse().unwrap(), fields[5].parse().unwrap());
    assert_eq!(&fields[..3], ["CBF", "kan", "mlp1"]);
    assert_eq!(d, a - b);
}

#[test]
fn exit_codes() {
    let ws = workspace();
    // Configuration errors: unknown architecture, zero jobs.
    assert_eq!(kantsc(&train_args(&["--arch", "resnet"]), ws.path()).status.code(), Some(2));
    assert_eq!(kantsc(&train_args(&["--jobs", "0"]), ws.path()).status.code(), Some(2));
    // Data errors: missing dataset, missing data root.
    let out = kantsc(&["train", "--data", "data", "--dataset", "Missing", "--epochs", "1"], ws.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Missing_TRAIN.tsv"));
    assert_eq!(kantsc(&["train", "--dataset", "CBF"], ws.path()).status.code(), Some(2));
    // Numeric failure: a step size that overflows the weights.
    assert_eq!(kantsc(&train_args(&["--arch", "mlp1", "--lr", "1e300"]), ws.path()).status.code(), Some(4));
    // Incompatible checkpoints.
    ok(&kantsc(&train_args(&["--arch", "kan", "--epochs", "0"]), ws.path()));
    let ckpt = "runs/CBF_kan_s1/model.ckpt";
    assert_eq!(kantsc(&["attack", "--checkpoint", ckpt, "--arch", "mlp1"], ws.path()).status.code(), Some(5));
    std::fs::write(ws.path().join("bad.ckpt"), b"not a checkpoint").unwrap();
    let out = kantsc(&["lipschitz", "--checkpoint", "bad.ckpt", "--data", "data", "--dataset", "CBF"], ws.path());
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn config_file_and_flag_precedence() {
    let ws = workspace();
    std::fs::write(
        ws.path().join("c.json"),
        r#"{"data": "data", "dataset": "CBF", "arch": "mlp2", "seed": 4, "train": {"epochs": 2}}"#,
    )
    .unwrap();
    ok(&kantsc(&["train", "--config", "c.json", "--seed", "5"], ws.path()));
    let run = ws.path().join("runs/CBF_mlp2_s5");
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 5);
}

#[test]
fn ablation_table_and_histograms() {
    let ws = workspace();
    ok(&kantsc(
        &["ablate", "--data", "data", "--dataset", "CBF", "--epochs", "1", "--grids", "1,5,50", "--bins", "8"],
        ws.path(),
    ));
    let dir = ws.path().join("runs/ablation_CBF_s0");
    let table = std::fs::read_to_string(dir.join("ablation.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 7);
    let base_only: Vec<&Vec<&str>> = rows.iter().filter(|r| r[1] == "base_only").collect();
    assert_eq!(base_only.len(), 1);
    assert_eq!(base_only[0][2], "-");

    let hists: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("histograms.json")).unwrap()).unwrap();
    let configs = hists.as_object().unwrap();
    assert_eq!(configs.len(), 7);
    for (name, per_ds) in configs {
        let h = &per_ds["CBF"];
        for (key, n) in [("train_base", 30), ("train_spline", 30), ("test_base", 900), ("test_spline", 900)] {
            let counts = h[key]["counts"].as_array().unwrap();
            assert_eq!(counts.len(), 8);
            let total: u64 = counts.iter().map(|c| c.as_u64().unwrap()).sum();
            assert_eq!(total, n * 3, "{name} {key}");
        }
    }
    let pairwise = std::fs::read_to_string(dir.join("pairwise.csv")).unwrap();
    assert_eq!(pairwise.lines().count(), 8);
    assert!(dir.join("quantiles.csv").is_file() && dir.join("config.json").is_file());
}

fn metrics_row(dataset: &str, model: &str, seed: u64, acc: f64) -> MetricsRow {
    MetricsRow {
        dataset: dataset.into(),
        model: model.into(),
        arch: Arch::Kan,
        grid: 5,
        use_base: true,
        use_spline: true,
        seed,
        epochs: 1,
        n_params: 1,
        accuracy: acc,
        macro_f1: acc,
        weighted_f1: acc,
        best_test_acc: None,
        best_epoch: None,
    }
}

fn write_fixture(root: &Path, models: &[&str], datasets: &[&str], skip: Option<(&str, &str)>) {
    for (mi, m) in models.iter().enumerate() {
        for (di, d) in datasets.iter().enumerate() {
            if skip == Some((m, d)) {
                continue;
            }
            let dir: PathBuf = root.join(format!("{d}_{m}_s0"));
            std::fs::create_dir_all(&dir).unwrap();
            // Model "a" dominates; the others interleave.
            let acc = if *m == "a" { 0.99 } else { 0.5 + 0.07 * ((mi * 3 + di * 5) % 6) as f64 };
            write_csv(&dir.join("metrics.csv"), &[metrics_row(d, m, 0, acc)]).unwrap();
            let attack = AttackRow {
                dataset: d.to_string(),
                model: m.to_string(),
                seed: 0,
                eps: 0.1,
                denominator: Default::default(),
                n_eval: 10,
                n_correct_before: 10,
                n_success: mi,
                asr: mi as f64 / 10.0,
                undefined: false,
            };
            std::fs::create_dir_all(dir.join("attack")).unwrap();
            write_csv(&dir.join("attack/attack.csv"), &[attack]).unwrap();
        }
    }
}

#[test]
fn report_ranks_models() {
    let ws = tempfile::tempdir().unwrap();
    let models = ["a", "b", "c", "d", "e"];
    write_fixture(&ws.path().join("runs"), &models, &["D1", "D2", "D3"], None);
    ok(&kantsc(&["report", "--runs", "runs", "--out", "rep"], ws.path()));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path().join("rep/rank_summary.json")).unwrap()).unwrap();
    let ranks: Vec<f64> = summary["accuracy"]["mean_ranks"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(ranks[0], 1.0);
    assert!((ranks.iter().sum::<f64>() - 15.0).abs() < 1e-12);
    // Lower ASR ranks better: model a (ASR 0) first, model e last.
    let asr: Vec<f64> = summary["asr"]["0.1"]["mean_ranks"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(asr, [1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(summary["accuracy"]["posthoc"], "nemenyi");
    let merged = std::fs::read_to_string(ws.path().join("rep/merged_metrics.csv")).unwrap();
    assert_eq!(merged.lines().count(), 16);
}

#[test]
fn report_preconditions() {
    let ws = tempfile::tempdir().unwrap();
    write_fixture(&ws.path().join("one"), &["a"], &["D1", "D2"], None);
    assert_eq!(kantsc(&["report", "--runs", "one", "--out", "r1"], ws.path()).status.code(), Some(2));

    write_fixture(&ws.path().join("gap"), &["a", "b"], &["D1", "D2", "D3"], Some(("b", "D2")));
    let out = kantsc(&["report", "--runs", "gap", "--out", "r2"], ws.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("b/D2"));
    ok(&kantsc(&["report", "--runs", "gap", "--out", "r3", "--allow-missing"], ws.path()));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path().join("r3/rank_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["datasets"], serde_json::json!(["D1", "D3"]));
}

#[test]
fn gradcheck_command_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = kantsc(&["gradcheck", "--seeds", "2"], dir.path());
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("kan-G50") && text.contains("0 failed"));
}
