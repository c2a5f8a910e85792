//! One module per subcommand. Each `cmd_*` function takes a resolved
//! [`RunConfig`](crate::config::RunConfig), writes its files and returns the
//! rows it wrote so tests can inspect them without re-reading.

mod ablate;
mod attack;
mod lipschitz;
mod report;
mod train;

pub use ablate::{cmd_ablate, AblationRow, AblationVariant, ComponentHistograms};
pub use attack::{cmd_attack, AttackRow};
pub use lipschitz::{cmd_lipschitz, cmd_lipschitz_diff, LipschitzDiffRow, LipschitzRow, LipschitzSummaryRow};
pub use report::{cmd_report, ReportOutcome};
pub use train::{cmd_train, train_one, MetricsRow, TrainOutcome};

use crate::config::RunConfig;
use kantsc::data::{list_datasets, load_dataset, Dataset};
use kantsc::{Error, Result};
use std::path::Path;

/// Dataset names selected by `cfg.dataset` (`all` lists the data root).
pub fn resolve_datasets(cfg: &RunConfig) -> Result<Vec<String>> {
    let root = cfg.data_root()?;
    if cfg.dataset == "all" {
        let names = list_datasets(&root)?;
        if names.is_empty() {
            return Err(Error::Data(format!("no datasets found under {}", root.display())));
        }
        Ok(names)
    } else {
        Ok(vec![cfg.dataset.clone()])
    }
}

pub fn load(cfg: &RunConfig, name: &str) -> Result<Dataset> {
    load_dataset(cfg.data_root()?, name)
}

/// Writes the resolved configuration as `config.json` in `dir`.
pub fn write_provenance(dir: &Path, cfg: &RunConfig) -> Result<()> {
    crate::output::ensure_dir(dir)?;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
