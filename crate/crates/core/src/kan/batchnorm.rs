use crate::error::{Error, Result};
use crate::layer::Layer;
use crate::tensor::{Param, Tensor};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Per-feature batch normalization over `[batch, dim]` inputs.
///
/// Train mode normalizes with the biased batch variance and updates the
/// running statistics (unbiased variance, momentum 0.1). Eval mode uses the
/// running statistics, which makes the layer a fixed affine map. With
/// `bypass` set the layer is the identity; tests use this to pin a KAN layer
/// input to known values.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    dim: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    bypass: bool,
    train: bool,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Vec<f64>,
    /// Standard deviation used for each feature.
    std: Vec<f64>,
    batch_stats: bool,
}

impl BatchNorm1d {
    pub fn new(dim: usize, prefix: &str) -> Self {
        BatchNorm1d {
            dim,
            gamma: Param::new(format!("{prefix}.gamma"), Tensor::ones(&[dim])),
            beta: Param::new(format!("{prefix}.beta"), Tensor::zeros(&[dim])),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
            bypass: false,
            train: true,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn set_bypass(&mut self, bypass: bool) {
        self.bypass = bypass;
        self.cache = None;
    }

    pub fn is_bypassed(&self) -> bool {
        self.bypass
    }

    fn backward_impl(&mut self, upstream: &Tensor, accumulate: bool) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("batch norm backward called before forward".into()))?;
        let batch = upstream.expect_matrix(self.dim, "batch norm backward")?;
        if self.bypass {
            return Ok(upstream.clone());
        }
        if batch * self.dim != cache.xhat.len() {
            return Err(Error::State("upstream batch differs from forward batch".into()));
        }
        let d = self.dim;
        let g = upstream.data();
        let gamma = self.gamma.value.data();
        let mut dx = vec![0.0; batch * d];
        if accumulate {
            let dgamma = self.gamma.grad.data_mut();
            for b in 0..batch {
                for j in 0..d {
                    dgamma[j] += g[b * d + j] * cache.xhat[b * d + j];
                }
            }
            let dbeta = self.beta.grad.data_mut();
            for b in 0..batch {
                for j in 0..d {
                    dbeta[j] += g[b * d + j];
                }
            }
        }
        if cache.batch_stats {
            let n = batch as f64;
            for j in 0..d {
                let mut mean_g = 0.0;
                let mut mean_gx = 0.0;
                for b in 0..batch {
                    mean_g += g[b * d + j];
                    mean_gx += g[b * d + j] * cache.xhat[b * d + j];
                }
                mean_g /= n;
                mean_gx /= n;
                let scale = gamma[j] / cache.std[j];
                for b in 0..batch {
                    let i = b * d + j;
                    dx[i] = scale * (g[i] - mean_g - cache.xhat[i] * mean_gx);
                }
            }
        } else {
            for b in 0..batch {
                for j in 0..d {
                    dx[b * d + j] = g[b * d + j] * gamma[j] / cache.std[j];
                }
            }
        }
        Tensor::new(vec![batch, d], dx)
    }
}

impl Layer for BatchNorm1d {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let batch = x.expect_matrix(self.dim, "batch norm")?;
        if self.bypass {
            self.cache = Some(BnCache {
                xhat: Vec::new(),
                std: Vec::new(),
                batch_stats: false,
            });
            return Ok(x.clone());
        }
        let d = self.dim;
        let use_batch = self.train && batch > 0;
        if use_batch && batch < 2 {
            return Err(Error::Config(
                "batch norm in train mode needs at least 2 samples per batch".into(),
            ));
        }
        let xs = x.data();
        let (mean, std) = if use_batch {
            let n = batch as f64;
            let mut mean = vec![0.0; d];
            let mut var = vec![0.0; d];
            for j in 0..d {
                let m = (0..batch).map(|b| xs[b * d + j]).sum::<f64>() / n;
                let v = (0..batch).map(|b| (xs[b * d + j] - m).powi(2)).sum::<f64>() / n;
                mean[j] = m;
                var[j] = v;
            }
            for j in 0..d {
                self.running_mean[j] =
                    (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
                let unbiased = var[j] * n / (n - 1.0);
                self.running_var[j] =
                    (1.0 - self.momentum) * self.running_var[j] + self.momentum * unbiased;
            }
            let std: Vec<f64> = var.iter().map(|v| (v + self.eps).sqrt()).collect();
            (mean, std)
        } else {
            let std = self
                .running_var
                .iter()
                .map(|v| (v.max(0.0) + self.eps).sqrt())
                .collect();
            (self.running_mean.clone(), std)
        };
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut xhat = vec![0.0; batch * d];
        let mut out = vec![0.0; batch * d];
        for b in 0..batch {
            for j in 0..d {
                let i = b * d + j;
                xhat[i] = (xs[i] - mean[j]) / std[j];
                out[i] = gamma[j] * xhat[i] + beta[j];
            }
        }
        self.cache = Some(BnCache {
            xhat,
            std,
            batch_stats: use_batch,
        });
        Tensor::new(vec![batch, d], out)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        self.backward_impl(upstream, true)
    }

    fn backward_input(&mut self, upstream: &Tensor) -> Result<Tensor> {
        self.backward_impl(upstream, false)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn set_train(&mut self, train: bool) {
        self.train = train;
    }

    fn is_train(&self) -> bool {
        self.train
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_sample_batch_normalizes_to_unit() {
        let mut bn = BatchNorm1d::new(1, "bn");
        let y = bn.forward(&Tensor::from_rows(&[[1.0], [3.0]]).unwrap()).unwrap();
        // var = 1, so eps shifts the result by ~5e-6.
        assert!((y.data()[0] + 1.0).abs() < 1e-5);
        assert!((y.data()[1] - 1.0).abs() < 1e-5);
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_with_identity_stats_is_near_identity() {
        let mut bn = BatchNorm1d::new(3, "bn");
        bn.set_train(false);
        let x = Tensor::from_rows(&[[0.5, -2.0, 3.0]]).unwrap();
        let y = bn.forward(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= b.abs() * 1e-5);
        }
    }

    #[test]
    fn constant_column_gives_zeros() {
        let mut bn = BatchNorm1d::new(2, "bn");
        let x = Tensor::from_rows(&[[4.0, 1.0], [4.0, 2.0], [4.0, 3.0]]).unwrap();
        let y = bn.forward(&x).unwrap();
        assert!(y.all_finite());
        for b in 0..3 {
            assert_eq!(y.row(b)[0], 0.0);
        }
    }

    #[test]
    fn single_sample_train_batch_is_rejected() {
        let mut bn = BatchNorm1d::new(2, "bn");
        let err = bn.forward(&Tensor::from_rows(&[[1.0, 2.0]]).unwrap());
        assert!(matches!(err, Err(Error::Config(_))));
        bn.set_train(false);
        assert!(bn.forward(&Tensor::from_rows(&[[1.0, 2.0]]).unwrap()).is_ok());
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut bn = BatchNorm1d::new(2, "bn");
        assert!(matches!(
            bn.backward(&Tensor::zeros(&[1, 2])),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn train_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..4).map(|j| rng.random_range(-20.0..20.0) * (j + 1) as f64 + 2.0).collect())
            .collect();
        let mut bn = BatchNorm1d::new(4, "bn");
        let y = bn.forward(&Tensor::from_rows(&rows).unwrap()).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..32).map(|b| y.row(b)[j]).collect();
            let m = col.iter().sum::<f64>() / 32.0;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 32.0;
            assert!(m.abs() <= 1e-9);
            // Inputs have variance > 100, so eps shifts this by < 1e-7.
            assert!((v - 1.0).abs() <= 1e-6, "var {v}");
        }
    }

    #[test]
    fn gradients_match_finite_differences_in_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let mut bn = BatchNorm1d::new(3, "bn");
        bn.gamma.value = Tensor::new(vec![3], vec![0.7, -1.3, 2.0]).unwrap();
        bn.beta.value = Tensor::new(vec![3], vec![0.1, 0.2, -0.3]).unwrap();
        bn.running_mean = vec![0.3, -0.2, 0.1];
        bn.running_var = vec![0.5, 2.0, 1.5];
        bn.set_train(false);
        let r = grad_check(&mut bn, &x, 1e-6, 1e-6);
        assert!(r.passed, "{r:?}");

        // Train mode: the sum of outputs is flat in x, so check a weighted sum
        // through a fixed upstream via a wrapper.
        struct Weighted(BatchNorm1d, Vec<f64>);
        impl Layer for Weighted {
            fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
                let saved = (self.0.running_mean.clone(), self.0.running_var.clone());
                let y = self.0.forward(x)?;
                (self.0.running_mean, self.0.running_var) = saved;
                let d: Vec<f64> = y.data().iter().zip(&self.1).map(|(a, w)| a * w).collect();
                Tensor::new(y.shape().to_vec(), d)
            }
            fn backward(&mut self, up: &Tensor) -> Result<Tensor> {
                let d: Vec<f64> = up.data().iter().zip(&self.1).map(|(a, w)| a * w).collect();
                self.0.backward(&Tensor::new(up.shape().to_vec(), d)?)
            }
            fn params(&self) -> Vec<&Param> {
                self.0.params()
            }
            fn params_mut(&mut self) -> Vec<&mut Param> {
                self.0.params_mut()
            }
            fn set_train(&mut self, t: bool) {
                self.0.set_train(t)
            }
            fn is_train(&self) -> bool {
                self.0.is_train()
            }
        }
        let weights: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
        bn.set_train(true);
        let mut w = Weighted(bn, weights);
        let r = grad_check(&mut w, &x, 1e-5, 1e-5);
        assert!(r.passed, "{r:?}");
    }
}
