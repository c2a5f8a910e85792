use super::{load, resolve_datasets, write_provenance};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::output::{run_parallel, write_csv};
use kantsc::evalstats::{accuracy, macro_f1, weighted_f1};
use kantsc::train::{train, TrainHistory};
use kantsc::{build_model, Arch, Model, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub model: String,
    pub arch: Arch,
    pub grid: usize,
    pub use_base: bool,
    pub use_spline: bool,
    pub seed: u64,
    pub epochs: usize,
    pub n_params: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub best_test_acc: Option<f64>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub metrics: MetricsRow,
    pub history: TrainHistory,
    pub model: Model,
}

/// Trains one model on one dataset and writes its run directory.
pub fn train_one(cfg: &RunConfig, dataset: &str) -> Result<TrainOutcome> {
    let ds = load(cfg, dataset)?;
    let mut model = build_model(&cfg.model_config(ds.d, ds.m))?;
    let history = train(&mut model, &ds, &cfg.train_config())?;
    let preds = model.predict(&ds.test.x)?;
    let best = history.best_test_acc();
    let metrics = MetricsRow {
        dataset: dataset.to_string(),
        model: cfg.model_tag(),
        arch: cfg.arch,
        grid: cfg.grid,
        use_base: cfg.use_base,
        use_spline: cfg.use_spline,
        seed: cfg.seed,
        epochs: cfg.train.epochs,
        n_params: model.count_params(),
        accuracy: accuracy(&preds, &ds.test.y)?,
        macro_f1: macro_f1(&preds, &ds.test.y, ds.m)?,
        weighted_f1: weighted_f1(&preds, &ds.test.y, ds.m)?,
        best_test_acc: best.map(|b| b.1),
        best_epoch: best.map(|b| b.0),
    };

    let dir = cfg.run_dir(dataset);
    let resolved = RunConfig {
        dataset: dataset.to_string(),
        ..cfg.clone()
    };
    write_provenance(&dir, &resolved)?;
    checkpoint::save(dir.join("model.ckpt"), &model, cfg.seed, cfg.train.epochs)?;
    write_csv(&dir.join("history.csv"), &history.epochs)?;
    write_csv(&dir.join("metrics.csv"), std::slice::from_ref(&metrics))?;
    Ok(TrainOutcome {
        dir,
        metrics,
        history,
        model,
    })
}

/// Trains on every selected dataset; `--jobs` runs datasets concurrently.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TrainOutcome>> {
    cfg.validate()?;
    let names = resolve_datasets(cfg)?;
    run_parallel(cfg.jobs, &names, |name| {
        let out = train_one(cfg, name)?;
        eprintln!(
            "{}: {} seed {} test accuracy {:.4} macro F1 {:.4} -> {}",
            name,
            out.metrics.model,
            cfg.seed,
            out.metrics.accuracy,
            out.metrics.macro_f1,
            out.dir.display()
        );
        Ok(out)
    })
    .into_iter()
    .collect()
}
