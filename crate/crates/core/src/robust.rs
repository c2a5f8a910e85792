//! Untargeted L-infinity PGD, attack success rate and empirical local
//! Lipschitz estimation.

use crate::data::Split;
use crate::error::{Error, Result};
use crate::layer::Layer;
use crate::tensor::Tensor;
use crate::train::softmax_cross_entropy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Attack budgets used throughout the experiments.
pub const EPS_GRID: [f64; 4] = [0.05, 0.1, 0.25, 0.5];

/// Rows attacked together; per-row results do not depend on the chunking
/// because the model runs in eval mode.
const CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub eps: f64,
    /// Step size; `None` means `0.01 * eps`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default)]
    pub random_start: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_iters() -> usize {
    100
}

impl AttackConfig {
    pub fn new(eps: f64) -> Self {
        AttackConfig {
            eps,
            alpha: None,
            iters: default_iters(),
            random_start: false,
            seed: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.01 * self.eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::Config(format!("eps must be >= 0, got {}", self.eps)));
        }
        if self.eps > 0.0 && !(self.alpha() > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha())));
        }
        if self.iters == 0 {
            return Err(Error::Config("iters must be at least 1".into()));
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clip_to_ball(x_adv: &mut [f64], x: &[f64], eps: f64) {
    for (a, &c) in x_adv.iter_mut().zip(x) {
        *a = a.clamp(c - eps, c + eps);
    }
}

/// PGD with a callback after every projected step (`iteration`, current iterate).
pub fn pgd_attack_observed(
    model: &mut dyn Layer,
    x: &Tensor,
    y: &[usize],
    cfg: &AttackConfig,
    mut observe: impl FnMut(usize, &Tensor),
) -> Result<Tensor> {
    cfg.validate()?;
    if y.len() != x.rows() {
        return Err(Error::Data(format!("{} labels for {} inputs", y.len(), x.rows())));
    }
    if cfg.eps == 0.0 || x.rows() == 0 {
        return Ok(x.clone());
    }
    let was_train = model.is_train();
    model.set_train(false);
    let alpha = cfg.alpha();
    let mut x_adv = x.clone();
    if cfg.random_start {
        let width = x.cols();
        for i in 0..x.rows() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            for v in &mut x_adv.data_mut()[i * width..(i + 1) * width] {
                *v += rng.random_range(-cfg.eps..=cfg.eps);
            }
        }
        clip_to_ball(x_adv.data_mut(), x.data(), cfg.eps);
    }
    let result = (|| {
        for it in 0..cfg.iters {
            let logits = model.forward(&x_adv)?;
            let (_, g) = softmax_cross_entropy(&logits, y, false)?;
            let gx = model.backward_input(&g)?;
            for (a, &d) in x_adv.data_mut().iter_mut().zip(gx.data()) {
                *a += alpha * sign(d);
            }
            clip_to_ball(x_adv.data_mut(), x.data(), cfg.eps);
            observe(it, &x_adv);
        }
        Ok(())
    })();
    model.set_train(was_train);
    result.map(|_| x_adv)
}

/// Untargeted PGD: signed-gradient ascent on the cross-entropy of the true
/// label, projected onto the eps-ball around `x` after every step.
pub fn pgd_attack(model: &mut dyn Layer, x: &Tensor, y: &[usize], cfg: &AttackConfig) -> Result<Tensor> {
    pgd_attack_observed(model, x, y, cfg, |_, _| {})
}

/// Which samples form the ASR denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsrDenominator {
    /// Samples classified correctly before the attack; success means
    /// misclassified afterwards.
    #[default]
    Correct,
    /// Every sample; success means the prediction changed.
    All,
}

impl FromStr for AsrDenominator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correct" => Ok(AsrDenominator::Correct),
            "all" => Ok(AsrDenominator::All),
            other => Err(Error::Config(format!(
                "unknown ASR denominator '{other}' (expected correct or all)"
            ))),
        }
    }
}

impl fmt::Display for AsrDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AsrDenominator::Correct => "correct",
            AsrDenominator::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub index: usize,
    pub label: usize,
    pub pred_before: usize,
    pub pred_after: usize,
    pub success: bool,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub eps: f64,
    pub denominator: AsrDenominator,
    pub n_eval: usize,
    pub n_correct_before: usize,
    pub n_success: usize,
    /// NaN when the denominator is empty.
    pub asr: f64,
    pub undefined: bool,
    pub samples: Vec<SampleOutcome>,
}

fn predict_chunked(model: &mut dyn Layer, x: &Tensor) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(x.rows());
    let idx: Vec<usize> = (0..x.rows()).collect();
    for chunk in idx.chunks(CHUNK) {
        preds.extend(model.forward(&x.select_rows(chunk))?.argmax_rows());
    }
    Ok(preds)
}

/// Attacks every sample of `split` and counts successes.
pub fn attack_success_rate(
    model: &mut dyn Layer,
    split: &Split,
    cfg: &AttackConfig,
    denominator: AsrDenominator,
) -> Result<AttackReport> {
    cfg.validate()?;
    if split.is_empty() {
        return Err(Error::Data("cannot attack an empty test set".into()));
    }
    let was_train = model.is_train();
    model.set_train(false);
    let result = (|| {
        let before = predict_chunked(model, &split.x)?;
        let width = split.x.cols();
        let idx: Vec<usize> = (0..split.len()).collect();
        let mut samples = Vec::with_capacity(split.len());
        for chunk in idx.chunks(CHUNK) {
            let x = split.x.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| split.y[i]).collect();
            let chunk_cfg = AttackConfig {
                seed: cfg.seed.wrapping_add(chunk[0] as u64),
                ..cfg.clone()
            };
            let adv = pgd_attack(model, &x, &y, &chunk_cfg)?;
            let after = model.forward(&adv)?.argmax_rows();
            for (r, &i) in chunk.iter().enumerate() {
                let linf = adv.data()[r * width..(r + 1) * width]
                    .iter()
                    .zip(x.row(r))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let success = match denominator {
                    AsrDenominator::Correct => before[i] == y[r] && after[r] != y[r],
                    AsrDenominator::All => after[r] != before[i],
                };
                samples.push(SampleOutcome {
                    index: i,
                    label: y[r],
                    pred_before: before[i],
                    pred_after: after[r],
                    success,
                    linf,
                });
            }
        }
        let n_correct_before = samples.iter().filter(|s| s.pred_before == s.label).count();
        let n_success = samples.iter().filter(|s| s.success).count();
        let denom = match denominator {
            AsrDenominator::Correct => n_correct_before,
            AsrDenominator::All => samples.len(),
        };
        let undefined = denom == 0;
        Ok(AttackReport {
            eps: cfg.eps,
            denominator,
            n_eval: samples.len(),
            n_correct_before,
            n_success,
            asr: if undefined { f64::NAN } else { n_success as f64 / denom as f64 },
            undefined,
            samples,
        })
    })();
    model.set_train(was_train);
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LipschitzConfig {
    pub radius: f64,
    pub n_starts: usize,
    pub ascent_steps: usize,
    /// Step of each signed ascent move, as a fraction of `radius`.
    pub ascent_lr: f64,
    /// Test points summarized per dataset; larger splits are subsampled.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        LipschitzConfig {
            radius: 0.5,
            n_starts: 4,
            ascent_steps: 10,
            ascent_lr: 0.1,
            max_points: 256,
            seed: 0,
        }
    }
}

impl LipschitzConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("radius must be > 0, got {}", self.radius)));
        }
        if self.n_starts == 0 {
            return Err(Error::Config("n_starts must be at least 1".into()));
        }
        if !(self.ascent_lr >= 0.0) {
            return Err(Error::Config("ascent_lr must be non-negative".into()));
        }
        Ok(())
    }
}

fn norm2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|a| a * a).sum::<f64>().sqrt()
}

fn sample_pair(rng: &mut ChaCha8Rng, x0: &[f64], r: f64) -> (Vec<f64>, Vec<f64>) {
    loop {
        let a: Vec<f64> = x0.iter().map(|&c| c + rng.random_range(-r..=r)).collect();
        let b: Vec<f64> = x0.iter().map(|&c| c + rng.random_range(-r..=r)).collect();
        if norm2(a.iter().zip(&b).map(|(p, q)| p - q)) >= 1e-9 {
            return (a, b);
        }
    }
}

/// Difference quotient of a pair and its gradient with respect to both points.
fn quotient_and_grad(model: &mut dyn Layer, x1: &[f64], x2: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let d = x1.len();
    let mut both = x1.to_vec();
    both.extend_from_slice(x2);
    let out = model.forward(&Tensor::new(vec![2, d], both)?)?;
    let m = out.cols();
    let df: Vec<f64> = (0..m).map(|j| out.data()[j] - out.data()[m + j]).collect();
    let dx: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| a - b).collect();
    let nf = norm2(df.iter().copied());
    let nx = norm2(dx.iter().copied());
    let q = nf / nx;
    if nf == 0.0 {
        return Ok((q, vec![0.0; d], vec![0.0; d]));
    }
    let mut up = vec![0.0; 2 * m];
    for j in 0..m {
        up[j] = df[j] / (nf * nx);
        up[m + j] = -df[j] / (nf * nx);
    }
    let g = model.backward_input(&Tensor::new(vec![2, m], up)?)?;
    let c = nf / (nx * nx * nx);
    let g1 = (0..d).map(|i| g.data()[i] - c * dx[i]).collect();
    let g2 = (0..d).map(|i| g.data()[d + i] + c * dx[i]).collect();
    Ok((q, g1, g2))
}

/// Empirical lower bound on the local Lipschitz constant of `model` at `x0`.
///
/// Random pairs in the inf-ball of radius `r` are refined by signed,
/// projected ascent on `|f(x1) - f(x2)|_2 / |x1 - x2|_2`; the largest
/// quotient seen is returned. `stream` selects an independent random stream
/// (the sample index when summarizing a dataset).
pub fn lipschitz_estimate(model: &mut dyn Layer, x0: &[f64], cfg: &LipschitzConfig, stream: u64) -> Result<f64> {
    cfg.validate()?;
    let was_train = model.is_train();
    model.set_train(false);
    let result = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let r = cfg.radius;
        let step = cfg.ascent_lr * r;
        let mut best = 0.0f64;
        for _ in 0..cfg.n_starts {
            let (mut x1, mut x2) = sample_pair(&mut rng, x0, r);
            for s in 0..=cfg.ascent_steps {
                let (q, g1, g2) = quotient_and_grad(model, &x1, &x2)?;
                if q.is_finite() {
                    best = best.max(q);
                }
                if s == cfg.ascent_steps {
                    break;
                }
                for i in 0..x1.len() {
                    x1[i] = (x1[i] + step * sign(g1[i])).clamp(x0[i] - r, x0[i] + r);
                    x2[i] = (x2[i] + step * sign(g2[i])).clamp(x0[i] - r, x0[i] + r);
                }
                if norm2(x1.iter().zip(&x2).map(|(a, b)| a - b)) < 1e-9 {
                    (x1, x2) = sample_pair(&mut rng, x0, r);
                }
            }
        }
        Ok(best)
    })();
    model.set_train(was_train);
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSummary {
    pub indices: Vec<usize>,
    pub estimates: Vec<f64>,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Seeded subsample of at most `max` indices out of `n`, in ascending order.
pub fn subsample_indices(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, max).into_vec();
    idx.sort_unstable();
    idx
}

/// Lipschitz estimates at the test points (or a seeded subsample of them).
pub fn lipschitz_dataset_summary(model: &mut dyn Layer, split: &Split, cfg: &LipschitzConfig) -> Result<LipschitzSummary> {
    if split.is_empty() {
        return Err(Error::Data("cannot summarize an empty test set".into()));
    }
    let indices = subsample_indices(split.len(), cfg.max_points.max(1), cfg.seed);
    let estimates = indices
        .iter()
        .map(|&i| lipschitz_estimate(model, split.x.row(i), cfg, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let q = crate::evalstats::quantiles(&estimates, &[0.25, 0.5, 0.75])?;
    Ok(LipschitzSummary {
        indices,
        estimates,
        median: q[1],
        q1: q[0],
        q3: q[2],
    })
}
