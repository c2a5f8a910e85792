use super::{resolve_datasets, train_one, write_provenance, load};
use crate::config::RunConfig;
use crate::output::{run_parallel, write_csv, write_csv_records, write_json};
use kantsc::evalstats::{histogram_auto, pairwise_geq_counts, quantiles, Histogram};
use kantsc::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// One spline/base configuration of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationVariant {
    /// `None` for the base-only variant, where the grid plays no role.
    pub grid: Option<usize>,
    pub use_base: bool,
    pub use_spline: bool,
}

impl AblationVariant {
    /// Full and spline-only per grid, then one base-only row.
    pub fn all(grids: &[usize]) -> Vec<AblationVariant> {
        let mut v: Vec<AblationVariant> = grids
            .iter()
            .map(|&g| AblationVariant {
                grid: Some(g),
                use_base: true,
                use_spline: true,
            })
            .collect();
        v.extend(grids.iter().map(|&g| AblationVariant {
            grid: Some(g),
            use_base: false,
            use_spline: true,
        }));
        v.push(AblationVariant {
            grid: None,
            use_base: true,
            use_spline: false,
        });
        v
    }

    pub fn name(&self) -> String {
        match (self.use_base, self.grid) {
            (true, Some(g)) => format!("base_spline_g{g}"),
            (false, Some(g)) => format!("spline_only_g{g}"),
            (_, None) => "base_only".into(),
        }
    }

    fn apply(&self, cfg: &RunConfig) -> RunConfig {
        RunConfig {
            grid: self.grid.unwrap_or(cfg.grid),
            use_base: self.use_base,
            use_spline: self.use_spline,
            ..cfg.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub dataset: String,
    pub config: String,
    /// Grid size, or `-` for the base-only variant.
    pub grid: String,
    pub use_base: bool,
    pub use_spline: bool,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Histograms of the final layer's base and spline addends, one value per
/// (sample, class) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentHistograms {
    pub train_base: Histogram,
    pub train_spline: Histogram,
    pub test_base: Histogram,
    pub test_spline: Histogram,
}

#[derive(Serialize)]
struct QuantileRow {
    config: String,
    n_datasets: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    mean: f64,
}

type Cell = (AblationRow, ComponentHistograms);

fn run_cell(cfg: &RunConfig, dataset: &str, variant: AblationVariant) -> Result<Cell> {
    let vcfg = variant.apply(cfg);
    let mut out = train_one(&vcfg, dataset)?;
    let ds = load(&vcfg, dataset)?;
    let bins = cfg.ablate.bins;
    let (train_base, train_spline) = out.model.last_layer_components(&ds.train.x)?;
    let (test_base, test_spline) = out.model.last_layer_components(&ds.test.x)?;
    let hist = ComponentHistograms {
        train_base: histogram_auto(&train_base, bins)?,
        train_spline: histogram_auto(&train_spline, bins)?,
        test_base: histogram_auto(&test_base, bins)?,
        test_spline: histogram_auto(&test_spline, bins)?,
    };
    eprintln!("{dataset} {}: accuracy {:.4}", variant.name(), out.metrics.accuracy);
    Ok((
        AblationRow {
            dataset: dataset.to_string(),
            config: variant.name(),
            grid: variant.grid.map_or("-".into(), |g| g.to_string()),
            use_base: variant.use_base,
            use_spline: variant.use_spline,
            seed: cfg.seed,
            accuracy: out.metrics.accuracy,
            macro_f1: out.metrics.macro_f1,
        },
        hist,
    ))
}

/// Trains every variant on every selected dataset and writes
/// `ablation.csv`, `pairwise.csv`, `quantiles.csv` and `histograms.json`
/// into `out_dir`. Individual runs land under `cfg.out` as usual.
pub fn cmd_ablate(cfg: &RunConfig, out_dir: &Path) -> Result<(Vec<AblationRow>, BTreeMap<String, BTreeMap<String, ComponentHistograms>>)> {
    cfg.validate()?;
    if !cfg.arch.kan_layers()[2] {
        return Err(Error::Capability(format!(
            "ablation needs a KAN final layer, {} has none",
            cfg.arch
        )));
    }
    let datasets = resolve_datasets(cfg)?;
    let variants = AblationVariant::all(&cfg.ablate.grids);
    let cells: Vec<(String, AblationVariant)> = datasets
        .iter()
        .flat_map(|d| variants.iter().map(move |v| (d.clone(), *v)))
        .collect();
    let results = run_parallel(cfg.jobs, &cells, |(d, v)| run_cell(cfg, d, *v))
        .into_iter()
        .collect::<Result<Vec<Cell>>>()?;

    let mut rows = Vec::with_capacity(results.len());
    let mut hists: BTreeMap<String, BTreeMap<String, ComponentHistograms>> = BTreeMap::new();
    for (row, h) in results {
        hists.entry(row.config.clone()).or_default().insert(row.dataset.clone(), h);
        rows.push(row);
    }

    // acc[config][dataset], in variant and dataset order.
    let names: Vec<String> = variants.iter().map(|v| v.name()).collect();
    let acc: Vec<Vec<f64>> = names
        .iter()
        .map(|n| rows.iter().filter(|r| &r.config == n).map(|r| r.accuracy).collect())
        .collect();
    let counts = pairwise_geq_counts(&acc)?;
    let mut header = vec!["config".to_string()];
    header.extend(names.iter().cloned());
    let pair_rows: Vec<Vec<String>> = names
        .iter()
        .zip(&counts)
        .map(|(n, c)| std::iter::once(n.clone()).chain(c.iter().map(|v| v.to_string())).collect())
        .collect();
    let quant_rows = names
        .iter()
        .zip(&acc)
        .map(|(n, a)| {
            let q = quantiles(a, &[0.0, 0.25, 0.5, 0.75, 1.0])?;
            Ok(QuantileRow {
                config: n.clone(),
                n_datasets: a.len(),
                min: q[0],
                q1: q[1],
                median: q[2],
                q3: q[3],
                max: q[4],
                mean: a.iter().sum::<f64>() / a.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    write_provenance(out_dir, cfg)?;
    write_csv(&out_dir.join("ablation.csv"), &rows)?;
    write_csv_records(&out_dir.join("pairwise.csv"), &header, &pair_rows)?;
    write_csv(&out_dir.join("quantiles.csv"), &quant_rows)?;
    write_json(&out_dir.join("histograms.json"), &hists)?;
    Ok((rows, hists))
}
