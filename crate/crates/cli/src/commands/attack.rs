use super::{load, write_provenance};
use crate::checkpoint::{self, Manifest};
use crate::config::RunConfig;
use crate::output::{write_csv, ensure_dir};
use kantsc::data::Split;
use kantsc::robust::{attack_success_rate, subsample_indices, AsrDenominator, AttackConfig};
use kantsc::{Arch, Error, Model, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub eps: f64,
    pub denominator: AsrDenominator,
    pub n_eval: usize,
    pub n_correct_before: usize,
    pub n_success: usize,
    pub asr: f64,
    pub undefined: bool,
}

#[derive(Debug, Serialize)]
struct SampleRow {
    eps: f64,
    index: usize,
    label: usize,
    pred_before: usize,
    pred_after: usize,
    success: bool,
    linf: f64,
}

/// Loads a checkpoint and checks it against the dataset it will be run on.
///
/// `expected_arch` is the architecture named on the command line, if any.
pub(crate) fn load_checked(
    path: &Path,
    expected_arch: Option<Arch>,
    d: usize,
    m: usize,
) -> Result<(Model, Manifest)> {
    let (model, manifest) = checkpoint::load(path)?;
    if let Some(arch) = expected_arch {
        if arch != manifest.model.arch {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} model, not {arch}",
                path.display(),
                manifest.model.arch
            )));
        }
    }
    if manifest.model.d != d || manifest.model.m != m {
        return Err(Error::Checkpoint(format!(
            "{} expects d={}, m={} but the dataset has d={d}, m={m}",
            path.display(),
            manifest.model.d,
            manifest.model.m
        )));
    }
    Ok((model, manifest))
}

/// Seeded subsample of the test split when `max` is set.
pub(crate) fn limit(split: &Split, max: Option<usize>, seed: u64) -> Split {
    match max {
        Some(max) if max < split.len() => split.subset(&subsample_indices(split.len(), max, seed)),
        _ => split.clone(),
    }
}

/// PGD at every eps of `cfg.attack.eps`; writes `attack.csv` and
/// `attack_samples.csv` into `out_dir`.
pub fn cmd_attack(
    cfg: &RunConfig,
    checkpoint: &Path,
    expected_arch: Option<Arch>,
    out_dir: &Path,
) -> Result<Vec<AttackRow>> {
    cfg.validate()?;
    let ds = load(cfg, &cfg.dataset)?;
    let (mut model, manifest) = load_checked(checkpoint, expected_arch, ds.d, ds.m)?;
    let test = limit(&ds.test, cfg.attack.max_samples, cfg.seed);
    let model_tag = RunConfig {
        arch: manifest.model.arch,
        grid: manifest.model.grid_size,
        use_base: manifest.model.use_base,
        use_spline: manifest.model.use_spline,
        ..cfg.clone()
    }
    .model_tag();

    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for &eps in &cfg.attack.eps {
        let attack = AttackConfig {
            eps,
            alpha: cfg.attack.alpha,
            iters: cfg.attack.iters,
            random_start: cfg.attack.random_start,
            seed: cfg.seed,
        };
        let report = attack_success_rate(&mut model, &test, &attack, cfg.attack.denominator)?;
        eprintln!(
            "{} {} eps {eps}: ASR {:.4} ({} / {})",
            cfg.dataset, model_tag, report.asr, report.n_success, report.n_correct_before
        );
        samples.extend(report.samples.iter().map(|s| SampleRow {
            eps,
            index: s.index,
            label: s.label,
            pred_before: s.pred_before,
            pred_after: s.pred_after,
            success: s.success,
            linf: s.linf,
        }));
        rows.push(AttackRow {
            dataset: cfg.dataset.clone(),
            model: model_tag.clone(),
            seed: manifest.seed,
            eps,
            denominator: report.denominator,
            n_eval: report.n_eval,
            n_correct_before: report.n_correct_before,
            n_success: report.n_success,
            asr: report.asr,
            undefined: report.undefined,
        });
    }

    let mut by_eps: Vec<&AttackRow> = rows.iter().filter(|r| !r.undefined).collect();
    by_eps.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    for w in by_eps.windows(2) {
        if w[1].asr < w[0].asr {
            eprintln!(
                "warning: ASR decreases from {:.4} at eps {} to {:.4} at eps {}",
                w[0].asr, w[0].eps, w[1].asr, w[1].eps
            );
        }
    }

    ensure_dir(out_dir)?;
    write_provenance(out_dir, cfg)?;
    write_csv(&out_dir.join("attack.csv"), &rows)?;
    write_csv(&out_dir.join("attack_samples.csv"), &samples)?;
    Ok(rows)
}
