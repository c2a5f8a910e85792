//! Fully resolved run configuration.
//!
//! Values come from defaults, then JSON config files (later files win, keys
//! merge recursively), then command-line flags. The resolved value is written
//! to `config.json` beside every output.

use kantsc::robust::{AsrDenominator, LipschitzConfig, EPS_GRID};
use kantsc::train::TrainConfig;
use kantsc::{Arch, Error, ModelConfig, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

pub const DATA_ENV: &str = "KANTSC_DATA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSettings {
    pub eps: Vec<f64>,
    pub iters: usize,
    /// Absolute step size; `None` means `0.01 * eps`.
    pub alpha: Option<f64>,
    pub random_start: bool,
    pub denominator: AsrDenominator,
    /// Attack a seeded subsample of the test split of at most this size.
    pub max_samples: Option<usize>,
}

impl Default for AttackSettings {
    fn default() -> Self {
        AttackSettings {
            eps: EPS_GRID.to_vec(),
            iters: 100,
            alpha: None,
            random_start: false,
            denominator: AsrDenominator::Correct,
            max_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSettings {
    pub grids: Vec<usize>,
    pub bins: usize,
}

impl Default for AblateSettings {
    fn default() -> Self {
        AblateSettings {
            grids: vec![1, 5, 50],
            bins: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of the UCR-style archive; falls back to `$KANTSC_DATA`.
    pub data: Option<PathBuf>,
    /// Dataset name, or `all` for every dataset under the data root.
    pub dataset: String,
    pub arch: Arch,
    pub grid: usize,
    pub spline_order: usize,
    pub use_base: bool,
    pub use_spline: bool,
    pub dropout: f64,
    /// Seeds both the initialization and the training shuffles.
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    /// The seed field here is ignored in favor of the top-level seed.
    pub train: TrainConfig,
    pub attack: AttackSettings,
    pub lipschitz: LipschitzConfig,
    pub ablate: AblateSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            dataset: "all".into(),
            arch: Arch::Kan,
            grid: 5,
            spline_order: 3,
            use_base: true,
            use_spline: true,
            dropout: 0.1,
            seed: 0,
            out: PathBuf::from("runs"),
            jobs: 1,
            train: TrainConfig::default(),
            attack: AttackSettings::default(),
            lipschitz: LipschitzConfig::default(),
            ablate: AblateSettings::default(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Defaults overlaid with each file in turn.
    pub fn from_files(files: &[&Path]) -> Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default()).expect("config serializes");
        for f in files {
            merge(&mut value, read_json(f)?);
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn data_root(&self) -> Result<PathBuf> {
        match &self.data {
            Some(p) => Ok(p.clone()),
            None => std::env::var_os(DATA_ENV).map(PathBuf::from).ok_or_else(|| {
                Error::Config(format!("no data root: pass --data or set {DATA_ENV}"))
            }),
        }
    }

    pub fn model_config(&self, d: usize, m: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(self.arch, d, m)
            .with_grid(self.grid)
            .with_paths(self.use_base, self.use_spline)
            .with_dropout(self.dropout)
            .with_seed(self.seed);
        cfg.spline_order = self.spline_order;
        cfg
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn lipschitz_config(&self) -> LipschitzConfig {
        LipschitzConfig {
            seed: self.seed,
            ..self.lipschitz.clone()
        }
    }

    /// Model label used in run directory names and result tables, e.g.
    /// `kan`, `kan_g50_nobase`.
    pub fn model_tag(&self) -> String {
        let mut tag = self.arch.name().to_string();
        if self.arch.has_kan() {
            if self.use_spline && self.grid != 5 {
                tag.push_str(&format!("_g{}", self.grid));
            }
            if !self.use_base {
                tag.push_str("_nobase");
            }
            if !self.use_spline {
                tag.push_str("_nospline");
            }
        }
        tag
    }

    pub fn run_dir(&self, dataset: &str) -> PathBuf {
        self.out.join(format!("{dataset}_{}_s{}", self.model_tag(), self.seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        if self.dataset.is_empty() {
            return Err(Error::Config("dataset name is empty".into()));
        }
        self.train.validate()?;
        self.lipschitz.validate()?;
        if self.attack.eps.is_empty() {
            return Err(Error::Config("empty eps list".into()));
        }
        if self.ablate.bins == 0 || self.ablate.grids.is_empty() {
            return Err(Error::Config("ablation needs at least one grid and one bin".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
