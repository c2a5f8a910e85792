use super::{AttackRow, MetricsRow};
use crate::output::{ensure_dir, read_csv, write_csv, write_json};
use kantsc::evalstats::{friedman_ranks, median, RankSummary};
use kantsc::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedMetricRow {
    pub dataset: String,
    pub model: String,
    pub n_seeds: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedAsrRow {
    pub dataset: String,
    pub model: String,
    pub eps: f64,
    pub n_seeds: usize,
    pub asr: f64,
}

/// Rank summaries over the datasets every model covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// Model/dataset cells without results (only with `--allow-missing`).
    pub missing: Vec<(String, String)>,
    pub accuracy: RankSummary,
    pub macro_f1: RankSummary,
    /// Keyed by eps; lower ASR ranks better.
    pub asr: BTreeMap<String, RankSummary>,
    pub note: String,
}

fn find_files(dir: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    paths.sort();
    for p in paths {
        if p.is_dir() {
            find_files(&p, name, out)?;
        } else if p.file_name().is_some_and(|f| f == name) {
            out.push(p);
        }
    }
    Ok(())
}

/// Median over seeds of each (model, dataset) cell.
fn cell_medians<'a>(values: impl Iterator<Item = (&'a str, &'a str, f64)>) -> Result<BTreeMap<(String, String), (usize, f64)>> {
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for (model, dataset, v) in values {
        if !v.is_nan() {
            cells.entry((model.to_string(), dataset.to_string())).or_default().push(v);
        }
    }
    cells
        .into_iter()
        .map(|(k, v)| Ok((k, (v.len(), median(&v)?))))
        .collect()
}

/// `acc[dataset][model]` for datasets with complete rows.
fn matrix(
    cells: &BTreeMap<(String, String), (usize, f64)>,
    models: &[String],
    datasets: &[String],
    higher_is_better: bool,
) -> Vec<Vec<f64>> {
    datasets
        .iter()
        .map(|d| {
            models
                .iter()
                .map(|m| {
                    let v = cells[&(m.clone(), d.clone())].1;
                    if higher_is_better {
                        v
                    } else {
                        -v
                    }
                })
                .collect()
        })
        .collect()
}

/// Aggregates every `metrics.csv` and `attack.csv` under `runs` into
/// `merged_metrics.csv`, `merged_asr.csv` and `rank_summary.json` in `out_dir`.
pub fn cmd_report(runs: &Path, out_dir: &Path, allow_missing: bool) -> Result<ReportOutcome> {
    let mut metric_files = Vec::new();
    find_files(runs, "metrics.csv", &mut metric_files)?;
    let mut metrics: Vec<MetricsRow> = Vec::new();
    for f in &metric_files {
        metrics.extend(read_csv::<MetricsRow>(f)?);
    }
    let mut attack_files = Vec::new();
    find_files(runs, "attack.csv", &mut attack_files)?;
    let mut attacks: Vec<AttackRow> = Vec::new();
    for f in &attack_files {
        attacks.extend(read_csv::<AttackRow>(f)?);
    }
    if metrics.is_empty() {
        return Err(Error::Data(format!("no metrics.csv found under {}", runs.display())));
    }

    let acc = cell_medians(metrics.iter().map(|r| (r.model.as_str(), r.dataset.as_str(), r.accuracy)))?;
    let f1 = cell_medians(metrics.iter().map(|r| (r.model.as_str(), r.dataset.as_str(), r.macro_f1)))?;
    let models: Vec<String> = metrics.iter().map(|r| r.model.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let all_datasets: Vec<String> = metrics.iter().map(|r| r.dataset.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if models.len() < 2 {
        return Err(Error::Config(format!(
            "ranking needs at least 2 models, found {}",
            models.len()
        )));
    }

    let mut missing = Vec::new();
    for m in &models {
        for d in &all_datasets {
            if !acc.contains_key(&(m.clone(), d.clone())) {
                missing.push((m.clone(), d.clone()));
            }
        }
    }
    if !missing.is_empty() && !allow_missing {
        let list: Vec<String> = missing.iter().map(|(m, d)| format!("{m}/{d}")).collect();
        return Err(Error::Data(format!(
            "missing results for {} cells: {} (pass --allow-missing to rank the complete datasets only)",
            missing.len(),
            list.join(", ")
        )));
    }
    let datasets: Vec<String> = all_datasets
        .iter()
        .filter(|d| !missing.iter().any(|(_, md)| md == *d))
        .cloned()
        .collect();

    let acc_ranks = friedman_ranks(&matrix(&acc, &models, &datasets, true))?;
    let f1_ranks = friedman_ranks(&matrix(&f1, &models, &datasets, true))?;

    let eps_values: BTreeSet<u64> = attacks.iter().map(|r| r.eps.to_bits()).collect();
    let mut asr_ranks = BTreeMap::new();
    let mut merged_asr = Vec::new();
    for bits in eps_values {
        let eps = f64::from_bits(bits);
        let rows: Vec<&AttackRow> = attacks.iter().filter(|r| r.eps.to_bits() == bits).collect();
        let cells = cell_medians(rows.iter().map(|r| (r.model.as_str(), r.dataset.as_str(), r.asr)))?;
        for ((m, d), (n, v)) in &cells {
            merged_asr.push(MergedAsrRow {
                dataset: d.clone(),
                model: m.clone(),
                eps,
                n_seeds: *n,
                asr: *v,
            });
        }
        let complete: Vec<String> = datasets
            .iter()
            .filter(|d| models.iter().all(|m| cells.contains_key(&(m.clone(), (*d).clone()))))
            .cloned()
            .collect();
        if complete.len() >= 2 {
            asr_ranks.insert(eps.to_string(), friedman_ranks(&matrix(&cells, &models, &complete, false))?);
        } else {
            eprintln!("note: ASR at eps {eps} covers fewer than 2 complete datasets, not ranked");
        }
    }

    let merged: Vec<MergedMetricRow> = acc
        .iter()
        .map(|((m, d), (n, a))| MergedMetricRow {
            dataset: d.clone(),
            model: m.clone(),
            n_seeds: *n,
            accuracy: *a,
            macro_f1: f1.get(&(m.clone(), d.clone())).map_or(f64::NAN, |v| v.1),
        })
        .collect();

    let outcome = ReportOutcome {
        models,
        datasets,
        missing,
        accuracy: acc_ranks,
        macro_f1: f1_ranks,
        asr: asr_ranks,
        note: "post-hoc test assumed to be Nemenyi (alpha 0.05); cells are medians over seeds".into(),
    };
    ensure_dir(out_dir)?;
    let provenance = serde_json::json!({ "runs": runs, "allow_missing": allow_missing });
    write_json(&out_dir.join("config.json"), &provenance)?;
    write_csv(&out_dir.join("merged_metrics.csv"), &merged)?;
    write_csv(&out_dir.join("merged_asr.csv"), &merged_asr)?;
    write_json(&out_dir.join("rank_summary.json"), &outcome)?;
    Ok(outcome)
}
