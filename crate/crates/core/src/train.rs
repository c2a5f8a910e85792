//! Loss, spline regularization, AdamW and the minibatch training loop.

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::layer::Layer;
use crate::models::{Block, Model};
use crate::tensor::{Param, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-row softmax cross-entropy and its gradient with respect to the logits.
///
/// With `mean` the loss and gradient are averaged over the batch, otherwise summed.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize], mean: bool) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 {
        return Err(Error::Config(format!(
            "logits must be [batch, m], got {:?}",
            logits.shape()
        )));
    }
    let (n, m) = (logits.rows(), logits.cols());
    if n == 0 {
        return Err(Error::Data("cross-entropy of an empty batch".into()));
    }
    if labels.len() != n {
        return Err(Error::Data(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    let scale = if mean { 1.0 / n as f64 } else { 1.0 };
    let mut grad = Tensor::zeros(&[n, m]);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= m {
            return Err(Error::Data(format!("label {label} out of range for {m} classes")));
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = z.ln() + max;
        loss += log_z - row[label];
        let g = grad.row_mut(i);
        let mut others = 0.0;
        for j in 0..m {
            g[j] = (row[j] - log_z).exp() * scale;
            if j != label {
                others += g[j];
            }
        }
        // p_y - 1 written as -sum of the other probabilities: no cancellation
        // when p_y is near 1, and the row sums to exactly zero for m = 2.
        g[label] = -others;
    }
    Ok((loss * scale, grad))
}

/// Mean cross-entropy over the batch and `(softmax - onehot) / batch`.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    softmax_cross_entropy(logits, labels, true)
}

/// Spline-weight penalty for one coefficient tensor `[out, in, nb]`.
///
/// `a[o,i]` is the mean absolute coefficient of edge `(o, i)`. The L1 term is
/// `sum a` and the entropy term is that of `a / sum a`. Gradients are
/// accumulated into `w.grad`.
pub fn spline_penalty(w: &mut Param, l1_coeff: f64, entropy_coeff: f64) -> f64 {
    if l1_coeff == 0.0 && entropy_coeff == 0.0 {
        return 0.0;
    }
    let shape = w.value.shape().to_vec();
    let nb = shape[2];
    let edges = shape[0] * shape[1];
    let vals = w.value.data();
    let a: Vec<f64> = (0..edges)
        .map(|e| vals[e * nb..(e + 1) * nb].iter().map(|v| v.abs()).sum::<f64>() / nb as f64)
        .collect();
    let total: f64 = a.iter().sum();
    let entropy = if total > 0.0 {
        -a.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| {
                let p = x / total;
                p * p.ln()
            })
            .sum::<f64>()
    } else {
        0.0
    };
    // d/da_e of (l1 * sum a + c * H) = l1 - c (ln p_e + H) / S
    let da: Vec<f64> = a
        .iter()
        .map(|&x| {
            let mut g = l1_coeff;
            if total > 0.0 && x > 0.0 {
                g -= entropy_coeff * ((x / total).ln() + entropy) / total;
            }
            g
        })
        .collect();
    let Param { value, grad, .. } = w;
    let (vals, grad) = (value.data(), grad.data_mut());
    for e in 0..edges {
        for b in 0..nb {
            let v = vals[e * nb + b];
            let s = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad[e * nb + b] += da[e] * s / nb as f64;
        }
    }
    l1_coeff * total + entropy_coeff * entropy
}

/// Sum of [`spline_penalty`] over every KAN layer with a spline path.
pub fn kan_regularization(model: &mut Model, l1_coeff: f64, entropy_coeff: f64) -> f64 {
    let mut penalty = 0.0;
    for block in &mut model.layers {
        if let Block::Kan(k) = block {
            if let Some(w) = k.w_spline.as_mut() {
                penalty += spline_penalty(w, l1_coeff, entropy_coeff);
            }
        }
    }
    penalty
}

/// Adam with decoupled weight decay; moment state follows parameter order.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, index: usize) -> Option<(&[f64], &[f64])> {
        self.moments.get(index).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.numel()], vec![0.0; p.numel()]))
                .collect();
        }
        assert_eq!(self.moments.len(), params.len(), "parameter set changed under AdamW");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (p, (m, v)) in params.iter_mut().zip(&mut self.moments) {
            let Param { value, grad, .. } = &mut **p;
            let (value, grad) = (value.data_mut(), grad.data());
            for j in 0..value.len() {
                let g = grad[j];
                value[j] -= lr * self.weight_decay * value[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                value[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    pub l1_coeff: f64,
    pub entropy_coeff: f64,
    /// `None` picks `min(32, ceil(n_train / 4))`.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Test accuracy is measured every this many epochs and always after the
    /// last one; 0 means only after the last.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            lr0: 1e-2,
            lr_decay: 0.9,
            decay_every: 25,
            weight_decay: 1e-2,
            l1_coeff: 0.0,
            entropy_coeff: 1e-5,
            batch_size: None,
            seed: 0,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.weight_decay < 0.0 || self.l1_coeff < 0.0 || self.entropy_coeff < 0.0 {
            return Err(Error::Config("regularization coefficients must be non-negative".into()));
        }
        Ok(())
    }

    pub fn batch_size_for(&self, n_train: usize) -> usize {
        self.batch_size.unwrap_or_else(|| n_train.div_ceil(4).clamp(1, 32))
    }
}

pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.lr_decay.powi((epoch / cfg.decay_every.max(1)) as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_acc: f64,
    /// NaN on epochs where the test split was not evaluated.
    pub test_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_test_acc(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.test_acc).filter(|v| !v.is_nan())
    }

    /// Best evaluated test accuracy and its epoch.
    pub fn best_test_acc(&self) -> Option<(usize, f64)> {
        self.epochs
            .iter()
            .filter(|r| !r.test_acc.is_nan())
            .fold(None, |best: Option<(usize, f64)>, r| match best {
                Some((_, b)) if b >= r.test_acc => best,
                _ => Some((r.epoch, r.test_acc)),
            })
    }
}

/// Fraction of eval-mode predictions on `split` that match its labels.
pub fn evaluate(model: &mut Model, split: &Split) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty split".into()));
    }
    let preds = model.predict(&split.x)?;
    let hits = preds.iter().zip(&split.y).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / split.len() as f64)
}

/// Trains `model` in place and returns the per-epoch history.
///
/// Every epoch reshuffles the training set with a generator seeded from
/// `cfg.seed`. A trailing batch of one sample is dropped because batch norm
/// cannot normalize it.
pub fn train(model: &mut Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if dataset.d != model.config().d || dataset.m != model.config().m {
        return Err(Error::Config(format!(
            "model expects d={}, m={} but dataset {} has d={}, m={}",
            model.config().d,
            model.config().m,
            dataset.name,
            dataset.d,
            dataset.m
        )));
    }
    let n = dataset.train.len();
    if n < 2 {
        return Err(Error::Data(format!(
            "{}: need at least 2 training series, got {n}",
            dataset.name
        )));
    }
    let bs = cfg.batch_size_for(n).max(2).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(cfg.weight_decay);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        order.shuffle(&mut rng);
        model.set_train(true);
        let (mut loss_sum, mut hits, mut seen) = (0.0, 0usize, 0usize);
        for batch in order.chunks(bs) {
            if batch.len() < 2 {
                continue;
            }
            let x = dataset.train.x.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| dataset.train.y[i]).collect();
            model.zero_grads();
            let logits = model.forward(&x)?;
            let (loss, grad) = cross_entropy_loss(&logits, &y)?;
            model.backward(&grad)?;
            let penalty = kan_regularization(model, cfg.l1_coeff, cfg.entropy_coeff);
            let total = loss + penalty;
            if !total.is_finite() {
                return Err(Error::Numeric(format!(
                    "{}: non-finite loss {total} at epoch {epoch}",
                    dataset.name
                )));
            }
            opt.step(&mut model.params_mut(), lr);
            loss_sum += total * batch.len() as f64;
            hits += logits
                .argmax_rows()
                .iter()
                .zip(&y)
                .filter(|(p, t)| p == t)
                .count();
            seen += batch.len();
        }
        let last = epoch + 1 == cfg.epochs;
        let due = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
        let test_acc = if (last || due) && !dataset.test.is_empty() {
            evaluate(model, &dataset.test)?
        } else {
            f64::NAN
        };
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / seen.max(1) as f64,
            train_acc: hits as f64 / seen.max(1) as f64,
            test_acc,
        });
    }
    model.set_train(false);
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{preprocess, PreprocessPolicy, RawSeries};
    use crate::layer::rel_error;
    use crate::models::{build_model, Arch, ModelConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng;

    #[test]
    fn cross_entropy_hand_values() {
        let (l, g) = cross_entropy_loss(&Tensor::from_rows(&[[0.0, 0.0]]).unwrap(), &[0]).unwrap();
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(g.data()[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.data()[1], 0.5, epsilon = 1e-15);
        let (l, _) = cross_entropy_loss(&Tensor::from_rows(&[[100.0, 0.0]]).unwrap(), &[0]).unwrap();
        assert!(l < 1e-10);
        let a = [0.3, -1.2, 2.0];
        let b = [1.0, 0.5, -0.5];
        let (la, _) = cross_entropy_loss(&Tensor::from_rows(&[a]).unwrap(), &[2]).unwrap();
        let (lb, _) = cross_entropy_loss(&Tensor::from_rows(&[b]).unwrap(), &[0]).unwrap();
        let (lab, _) = cross_entropy_loss(&Tensor::from_rows(&[a, b]).unwrap(), &[2, 0]).unwrap();
        assert_abs_diff_eq!(lab, (la + lb) / 2.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn two_class_gradient_rows_cancel_exactly(a in -30.0f64..30.0, b in -30.0f64..30.0, label in 0usize..2) {
            let (_, g) = cross_entropy_loss(&Tensor::from_rows(&[[a, b]]).unwrap(), &[label]).unwrap();
            prop_assert!(g.data()[0] + g.data()[1] == 0.0);
        }
    }

    #[test]
    fn cross_entropy_errors() {
        assert!(cross_entropy_loss(&Tensor::zeros(&[0, 2]), &[]).is_err());
        assert!(cross_entropy_loss(&Tensor::zeros(&[1, 2]), &[2]).is_err());
        assert!(cross_entropy_loss(&Tensor::zeros(&[1, 2]), &[0, 1]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let data: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
            let logits = Tensor::new(vec![3, 4], data).unwrap();
            let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..4)).collect();
            let (_, g) = cross_entropy_loss(&logits, &labels).unwrap();
            let h = 1e-6;
            for j in 0..12 {
                let mut p = logits.clone();
                p.data_mut()[j] += h;
                let mut q = logits.clone();
                q.data_mut()[j] -= h;
                let num = (cross_entropy_loss(&p, &labels).unwrap().0
                    - cross_entropy_loss(&q, &labels).unwrap().0)
                    / (2.0 * h);
                assert!(rel_error(g.data()[j], num) <= 1e-6, "{} vs {num}", g.data()[j]);
            }
        }
    }

    fn spline_param(values: Vec<f64>, shape: [usize; 3]) -> Param {
        Param::new("w", Tensor::new(shape.to_vec(), values).unwrap())
    }

    #[test]
    fn regularization_examples() {
        let mut w = spline_param(vec![0.5, -0.2, 0.1], [1, 1, 3]);
        assert_eq!(spline_penalty(&mut w, 0.0, 0.0), 0.0);
        assert!(w.grad.data().iter().all(|v| *v == 0.0));
        assert_eq!(spline_penalty(&mut w, 0.0, 1.0), 0.0);

        let mut two = spline_param(vec![1.0, -1.0, 0.5, -0.5, 0.5, 1.5], [2, 1, 3]);
        let h = spline_penalty(&mut two, 0.0, 1.0);
        assert_abs_diff_eq!(h, std::f64::consts::LN_2, epsilon = 1e-15);

        let mut zero = spline_param(vec![0.0; 6], [1, 2, 3]);
        assert_eq!(spline_penalty(&mut zero, 1.0, 1.0), 0.0);
        assert!(zero.grad.all_finite());

        // L1 alone: sum over edges of the mean |w|.
        let mut l1 = spline_param(vec![1.0, -2.0, 3.0, -4.0], [2, 1, 2]);
        assert_abs_diff_eq!(spline_penalty(&mut l1, 1.0, 0.0), 1.5 + 3.5, epsilon = 1e-15);
    }

    #[test]
    fn regularization_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let vals: Vec<f64> = (0..24)
                .map(|_| {
                    let v: f64 = rng.random_range(0.05..1.0);
                    if rng.random::<bool>() { v } else { -v }
                })
                .collect();
            let (l1, ent) = (rng.random_range(0.0..1.0), rng.random_range(0.1..1.0));
            let mut w = spline_param(vals.clone(), [2, 3, 4]);
            spline_penalty(&mut w, l1, ent);
            let h = 1e-7;
            for j in 0..24 {
                let mut p = vals.clone();
                p[j] += h;
                let mut q = vals.clone();
                q[j] -= h;
                let fp = spline_penalty(&mut spline_param(p, [2, 3, 4]), l1, ent);
                let fq = spline_penalty(&mut spline_param(q, [2, 3, 4]), l1, ent);
                let num = (fp - fq) / (2.0 * h);
                assert!(
                    rel_error(w.grad.data()[j], num) <= 1e-4,
                    "{j}: {} vs {num}",
                    w.grad.data()[j]
                );
            }
        }
    }

    #[test]
    fn mlp_has_no_regularization() {
        let mut m = build_model(&ModelConfig::new(Arch::MlpI, 4, 2)).unwrap();
        assert_eq!(kan_regularization(&mut m, 1.0, 1.0), 0.0);
        let mut k = build_model(&ModelConfig::new(Arch::Kan, 4, 2)).unwrap();
        assert!(kan_regularization(&mut k, 0.0, 1.0) > 0.0);
    }

    #[test]
    fn adamw_examples() {
        let mut p = Param::new("p", Tensor::full(&[1], 1.0));
        let mut opt = AdamW::new(0.01);
        opt.step(&mut [&mut p], 0.01);
        assert_abs_diff_eq!(p.value.data()[0], 0.9999, epsilon = 1e-15);
        let (m, v) = opt.moments(0).unwrap();
        assert_eq!((m[0], v[0]), (0.0, 0.0));

        let mut p = Param::new("p", Tensor::new(vec![2], vec![0.5, -0.5]).unwrap());
        p.grad = Tensor::new(vec![2], vec![3.0, -0.2]).unwrap();
        let mut opt = AdamW::new(0.0);
        opt.step(&mut [&mut p], 0.01);
        assert_abs_diff_eq!(p.value.data()[0], 0.5 - 0.01, epsilon = 1e-9);
        assert_abs_diff_eq!(p.value.data()[1], -0.5 + 0.01, epsilon = 1e-9);

        let mut p = Param::new("p", Tensor::full(&[3], 0.7));
        let mut opt = AdamW::new(0.0);
        for _ in 0..5 {
            opt.step(&mut [&mut p], 0.1);
        }
        assert!(p.value.data().iter().all(|v| *v == 0.7));
    }

    #[test]
    fn adamw_descends_a_quadratic_bowl() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x0: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let mut p = Param::new("x", Tensor::new(vec![4], x0.clone()).unwrap());
            p.grad = Tensor::new(vec![4], x0.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect()).unwrap();
            AdamW::new(0.0).step(&mut [&mut p], 1e-3);
            assert!(f(p.value.data()) < f(&x0));
        }
    }

    #[test]
    fn lr_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 1e-2);
        assert_abs_diff_eq!(lr_at(25, &cfg), 9e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(lr_at(50, &cfg), 8.1e-3, epsilon = 1e-15);
        assert_eq!(lr_at(24, &cfg), lr_at(0, &cfg));
    }

    proptest! {
        #[test]
        fn lr_is_piecewise_constant_and_non_increasing(
            epoch in 0usize..5000,
            every in 1usize..100,
            decay in 0.01f64..=1.0,
        ) {
            let cfg = TrainConfig { decay_every: every, lr_decay: decay, ..TrainConfig::default() };
            prop_assert!(lr_at(epoch + 1, &cfg) <= lr_at(epoch, &cfg));
            let start = epoch - epoch % every;
            prop_assert!(lr_at(start, &cfg) == lr_at(epoch, &cfg));
        }
    }

    pub(crate) fn separable_dataset(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<RawSeries> = (0..20)
            .map(|i| {
                let label = (i % 2) as i64;
                let sign = if label == 0 { 1.0 } else { -1.0 };
                let values = (0..8)
                    .map(|t| sign * (t as f64 - 3.5) + rng.random_range(-0.3..0.3))
                    .collect();
                RawSeries { label, values }
            })
            .collect();
        preprocess("toy", &raw, &raw, PreprocessPolicy::default()).unwrap()
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let ds = separable_dataset(0);
        let mut model = build_model(&ModelConfig::new(Arch::MlpI, 8, 2).with_seed(1)).unwrap();
        let cfg = TrainConfig { epochs: 200, seed: 2, ..TrainConfig::default() };
        let hist = train(&mut model, &ds, &cfg).unwrap();
        assert_eq!(hist.len(), 200);
        assert_eq!(evaluate(&mut model, &ds.train).unwrap(), 1.0);
        assert_eq!(hist.final_test_acc(), Some(1.0));
        assert!(hist.epochs[199].train_loss < hist.epochs[0].train_loss);
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let ds = separable_dataset(1);
        let cfg_m = ModelConfig::new(Arch::Kan, 8, 2).with_seed(4);
        let mut model = build_model(&cfg_m).unwrap();
        let fresh = build_model(&cfg_m).unwrap();
        let hist = train(&mut model, &ds, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
        assert!(hist.is_empty());
        assert_eq!(model.fingerprint(), fresh.fingerprint());
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let ds = separable_dataset(2);
        let cfg = TrainConfig { epochs: 5, seed: 9, ..TrainConfig::default() };
        let run = || {
            let mut m = build_model(&ModelConfig::new(Arch::KanMlp, 8, 2).with_seed(3)).unwrap();
            let h = train(&mut m, &ds, &cfg).unwrap();
            (m.fingerprint(), format!("{h:?}"))
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_mismatched_dataset() {
        let ds = separable_dataset(3);
        let mut m = build_model(&ModelConfig::new(Arch::MlpI, 9, 2)).unwrap();
        assert!(matches!(train(&mut m, &ds, &TrainConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn nan_loss_is_numeric_error() {
        let ds = separable_dataset(4);
        let mut m = build_model(&ModelConfig::new(Arch::MlpI, 8, 2)).unwrap();
        for p in m.params_mut() {
            p.value.fill(f64::NAN);
        }
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert!(matches!(train(&mut m, &ds, &cfg), Err(Error::Numeric(_))));
    }

    #[test]
    fn default_batch_size() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.batch_size_for(30), 8);
        assert_eq!(cfg.batch_size_for(1000), 32);
        assert_eq!(cfg.batch_size_for(3), 1);
    }
}
