use clap::{Args, Parser, Subcommand};
use kantsc::robust::AsrDenominator;
use kantsc::{Arch, Error, Result};
use kantsc_cli::commands::{cmd_ablate, cmd_attack, cmd_lipschitz, cmd_lipschitz_diff, cmd_report, cmd_train};
use kantsc_cli::config::RunConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kantsc", version, about = "KAN and MLP time-series classifiers: training, attacks, Lipschitz estimates and rank reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per dataset and write a run directory for each.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// PGD attack success rate of a checkpoint across an eps list.
    Attack {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointFlags,
        #[command(flatten)]
        attack: AttackFlags,
    },
    /// Empirical local Lipschitz estimates of a checkpoint on the test split.
    Lipschitz {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointFlags,
        #[command(flatten)]
        lip: LipschitzFlags,
        /// Second checkpoint; emits the median difference (first minus second).
        #[arg(long, value_name = "CHECKPOINT")]
        diff: Option<PathBuf>,
    },
    /// Base/spline ablation over a list of grid sizes.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        /// Comma-separated grid sizes.
        #[arg(long, value_delimiter = ',')]
        grids: Option<Vec<usize>>,
        /// Histogram bins for the final-layer components.
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Merge metrics and attack results under a run tree and rank the models.
    Report {
        /// Directory searched recursively for metrics.csv and attack.csv.
        #[arg(long, default_value = "runs")]
        runs: PathBuf,
        #[arg(long, default_value = "runs/report")]
        out: PathBuf,
        /// Rank only the datasets every model covers instead of failing.
        #[arg(long)]
        allow_missing: bool,
    },
    /// Analytic versus finite-difference gradients for every layer type.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Write a synthetic Cylinder-Bell-Funnel dataset in the archive layout.
    GenCbf {
        /// Data root; the dataset lands in <out>/CBF.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Default)]
struct Common {
    /// Archive root (default: $KANTSC_DATA).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset name, or `all`.
    #[arg(long)]
    dataset: Option<String>,
    /// kan, mlp1, mlp2, kan_mlp or mlp_kan.
    #[arg(long)]
    arch: Option<Arch>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    no_base: bool,
    #[arg(long)]
    no_spline: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Evaluate the test split every N epochs (0: only at the end).
    #[arg(long)]
    eval_every: Option<usize>,
}

#[derive(Args)]
struct CheckpointFlags {
    /// A model.ckpt written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct AttackFlags {
    /// Comma-separated eps values.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    iters: Option<usize>,
    /// Absolute step size (default 0.01 * eps).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    random_start: bool,
    /// correct or all.
    #[arg(long)]
    asr_denominator: Option<AsrDenominator>,
    /// Attack a seeded subsample of at most this many test series.
    #[arg(long)]
    max_samples: Option<usize>,
}

#[derive(Args)]
struct LipschitzFlags {
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    ascent_lr: Option<f64>,
    #[arg(long)]
    max_points: Option<usize>,
}

fn resolve(common: &Common, base: Option<&Path>) -> Result<RunConfig> {
    let mut files: Vec<&Path> = base.into_iter().collect();
    if let Some(c) = &common.config {
        files.push(c);
    }
    let mut cfg = RunConfig::from_files(&files)?;
    if let Some(v) = &common.data {
        cfg.data = Some(v.clone());
    }
    if let Some(v) = &common.dataset {
        cfg.dataset = v.clone();
    }
    if let Some(v) = common.arch {
        cfg.arch = v;
    }
    if let Some(v) = common.grid {
        cfg.grid = v;
    }
    if common.no_base {
        cfg.use_base = false;
    }
    if common.no_spline {
        cfg.use_spline = false;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = &common.out {
        cfg.out = v.clone();
    }
    if let Some(v) = common.jobs {
        cfg.jobs = v;
    }
    Ok(cfg)
}

fn apply_train(cfg: &mut RunConfig, t: &TrainFlags) {
    if let Some(v) = t.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = t.lr {
        cfg.train.lr0 = v;
    }
    if let Some(v) = t.weight_decay {
        cfg.train.weight_decay = v;
    }
    if let Some(v) = t.batch_size {
        cfg.train.batch_size = Some(v);
    }
    if let Some(v) = t.eval_every {
        cfg.train.eval_every = v;
    }
}

/// The training run's `config.json` beside a checkpoint, when present, seeds
/// the configuration of commands that evaluate the checkpoint.
fn sibling_config(checkpoint: &Path) -> Option<PathBuf> {
    let p = checkpoint.parent()?.join("config.json");
    p.is_file().then_some(p)
}

/// Output directory for checkpoint commands: `--out`, else `<run dir>/<name>`.
fn checkpoint_out(common: &Common, checkpoint: &Path, name: &str) -> PathBuf {
    match &common.out {
        Some(o) => o.clone(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(name),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { common, train } => {
            let mut cfg = resolve(&common, None)?;
            apply_train(&mut cfg, &train);
            cmd_train(&cfg)?;
        }
        Command::Attack { common, ckpt, attack } => {
            let sibling = sibling_config(&ckpt.checkpoint);
            let mut cfg = resolve(&common, sibling.as_deref())?;
            if let Some(v) = attack.eps {
                cfg.attack.eps = v;
            }
            if let Some(v) = attack.iters {
                cfg.attack.iters = v;
            }
            if attack.alpha.is_some() {
                cfg.attack.alpha = attack.alpha;
            }
            if attack.random_start {
                cfg.attack.random_start = true;
            }
            if let Some(v) = attack.asr_denominator {
                cfg.attack.denominator = v;
            }
            if attack.max_samples.is_some() {
                cfg.attack.max_samples = attack.max_samples;
            }
            let out = checkpoint_out(&common, &ckpt.checkpoint, "attack");
            cfg.out = out.clone();
            cmd_attack(&cfg, &ckpt.checkpoint, common.arch, &out)?;
        }
        Command::Lipschitz { common, ckpt, lip, diff } => {
            let sibling = sibling_config(&ckpt.checkpoint);
            let mut cfg = resolve(&common, sibling.as_deref())?;
            if let Some(v) = lip.radius {
                cfg.lipschitz.radius = v;
            }
            if let Some(v) = lip.starts {
                cfg.lipschitz.n_starts = v;
            }
            if let Some(v) = lip.steps {
                cfg.lipschitz.ascent_steps = v;
            }
            if let Some(v) = lip.ascent_lr {
                cfg.lipschitz.ascent_lr = v;
            }
            if let Some(v) = lip.max_points {
                cfg.lipschitz.max_points = v;
            }
            match diff {
                Some(other) => {
                    let out = checkpoint_out(&common, &ckpt.checkpoint, "lipschitz_diff");
                    cfg.out = out.clone();
                    cmd_lipschitz_diff(&cfg, &ckpt.checkpoint, &other, &out)?;
                }
                None => {
                    let out = checkpoint_out(&common, &ckpt.checkpoint, "lipschitz");
                    cfg.out = out.clone();
                    cmd_lipschitz(&cfg, &ckpt.checkpoint, common.arch, &out)?;
                }
            }
        }
        Command::Ablate {
            common,
            train,
            grids,
            bins,
        } => {
            let mut cfg = resolve(&common, None)?;
            apply_train(&mut cfg, &train);
            if let Some(g) = grids {
                cfg.ablate.grids = g;
            }
            if let Some(b) = bins {
                cfg.ablate.bins = b;
            }
            let out = cfg.out.join(format!("ablation_{}_s{}", cfg.dataset, cfg.seed));
            cmd_ablate(&cfg, &out)?;
        }
        Command::Report { runs, out, allow_missing } => {
            let r = cmd_report(&runs, &out, allow_missing)?;
            for (m, rank) in r.models.iter().zip(&r.accuracy.mean_ranks) {
                println!("{m:<20} mean accuracy rank {rank:.3}");
            }
            println!(
                "critical difference {:.4} over {} datasets",
                r.accuracy.critical_difference, r.accuracy.n_datasets
            );
        }
        Command::Gradcheck { seeds } => {
            let cases = kantsc_cli::cmd_gradcheck(seeds);
            let failed = cases.iter().filter(|c| !c.report.passed).count();
            println!("{} cases, {failed} failed", cases.len());
            if failed > 0 {
                return Err(Error::Numeric(format!("{failed} gradient checks failed")));
            }
        }
        Command::GenCbf { out, seed } => {
            let dir = kantsc::data::write_cbf_dataset(&out, seed)?;
            println!("wrote {}", dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
