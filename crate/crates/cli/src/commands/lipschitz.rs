use super::attack::load_checked;
use super::{load, write_provenance};
use crate::config::RunConfig;
use crate::output::write_csv;
use kantsc::robust::{lipschitz_dataset_summary, LipschitzSummary};
use kantsc::{Arch, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzRow {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub index: usize,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSummaryRow {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub n: usize,
    pub radius: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzDiffRow {
    pub dataset: String,
    pub model_a: String,
    pub model_b: String,
    pub median_a: f64,
    pub median_b: f64,
    /// `median_a - median_b`.
    pub diff: f64,
}

fn estimate(
    cfg: &RunConfig,
    checkpoint: &Path,
    expected_arch: Option<Arch>,
) -> Result<(String, u64, LipschitzSummary)> {
    let ds = load(cfg, &cfg.dataset)?;
    let (mut model, manifest) = load_checked(checkpoint, expected_arch, ds.d, ds.m)?;
    let tag = RunConfig {
        arch: manifest.model.arch,
        grid: manifest.model.grid_size,
        use_base: manifest.model.use_base,
        use_spline: manifest.model.use_spline,
        ..cfg.clone()
    }
    .model_tag();
    let summary = lipschitz_dataset_summary(&mut model, &ds.test, &cfg.lipschitz_config())?;
    Ok((tag, manifest.seed, summary))
}

/// Per-sample estimates (`lipschitz.csv`) and their quartiles
/// (`lipschitz_summary.csv`).
pub fn cmd_lipschitz(
    cfg: &RunConfig,
    checkpoint: &Path,
    expected_arch: Option<Arch>,
    out_dir: &Path,
) -> Result<(Vec<LipschitzRow>, LipschitzSummaryRow)> {
    cfg.validate()?;
    let (tag, seed, s) = estimate(cfg, checkpoint, expected_arch)?;
    let rows: Vec<LipschitzRow> = s
        .indices
        .iter()
        .zip(&s.estimates)
        .map(|(&index, &estimate)| LipschitzRow {
            dataset: cfg.dataset.clone(),
            model: tag.clone(),
            seed,
            index,
            estimate,
        })
        .collect();
    let summary = LipschitzSummaryRow {
        dataset: cfg.dataset.clone(),
        model: tag,
        seed,
        n: rows.len(),
        radius: cfg.lipschitz.radius,
        q1: s.q1,
        median: s.median,
        q3: s.q3,
    };
    eprintln!(
        "{} {}: median local Lipschitz {:.4} (q1 {:.4}, q3 {:.4}, n {})",
        summary.dataset, summary.model, summary.median, summary.q1, summary.q3, summary.n
    );
    write_provenance(out_dir, cfg)?;
    write_csv(&out_dir.join("lipschitz.csv"), &rows)?;
    write_csv(&out_dir.join("lipschitz_summary.csv"), std::slice::from_ref(&summary))?;
    Ok((rows, summary))
}

/// Median estimates of two checkpoints under the same configuration, and
/// their difference.
pub fn cmd_lipschitz_diff(cfg: &RunConfig, a: &Path, b: &Path, out_dir: &Path) -> Result<LipschitzDiffRow> {
    cfg.validate()?;
    let (tag_a, _, sa) = estimate(cfg, a, None)?;
    let (tag_b, _, sb) = estimate(cfg, b, None)?;
    let row = LipschitzDiffRow {
        dataset: cfg.dataset.clone(),
        model_a: tag_a,
        model_b: tag_b,
        median_a: sa.median,
        median_b: sb.median,
        diff: sa.median - sb.median,
    };
    eprintln!(
        "{}: median {} {:.4} - {} {:.4} = {:.4}",
        row.dataset, row.model_a, row.median_a, row.model_b, row.median_b, row.diff
    );
    write_provenance(out_dir, cfg)?;
    write_csv(&out_dir.join("lipschitz_diff.csv"), std::slice::from_ref(&row))?;
    Ok(row)
}
