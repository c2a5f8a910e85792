//! Linear, ReLU and dropout layers for the MLP baselines and hybrid models.

use crate::error::{Error, Result};
use crate::layer::Layer;
use crate::tensor::{Param, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `y = x·Wᵀ + b`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    in_dim: usize,
    out_dim: usize,
    /// `[out, in]`
    pub weight: Param,
    /// `[out]`
    pub bias: Param,
    train: bool,
    input: Option<Tensor>,
}

impl LinearLayer {
    /// Kaiming-uniform weights, biases uniform in `±1/√in`.
    pub fn new(in_dim: usize, out_dim: usize, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("linear layer dimensions must be positive".into()));
        }
        let wb = (6.0 / in_dim as f64).sqrt();
        let bb = 1.0 / (in_dim as f64).sqrt();
        let w = (0..out_dim * in_dim)
            .map(|_| rng.random_range(-wb..=wb))
            .collect();
        let b = (0..out_dim).map(|_| rng.random_range(-bb..=bb)).collect();
        Ok(LinearLayer {
            in_dim,
            out_dim,
            weight: Param::new(format!("{prefix}.weight"), Tensor::new(vec![out_dim, in_dim], w)?),
            bias: Param::new(format!("{prefix}.bias"), Tensor::new(vec![out_dim], b)?),
            train: true,
            input: None,
        })
    }

    pub fn from_weights(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (&[out_dim, in_dim], &[bo]) = (weight.shape(), bias.shape()) else {
            return Err(Error::Config("weight must be [out, in] and bias [out]".into()));
        };
        if bo != out_dim {
            return Err(Error::Config(format!("bias has {bo} entries, expected {out_dim}")));
        }
        Ok(LinearLayer {
            in_dim,
            out_dim,
            weight: Param::new("weight", weight),
            bias: Param::new("bias", bias),
            train: true,
            input: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn backward_impl(&mut self, upstream: &Tensor, accumulate: bool) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("linear backward called before forward".into()))?;
        let batch = upstream.expect_matrix(self.out_dim, "linear backward")?;
        if batch != x.rows() {
            return Err(Error::State("upstream batch differs from forward batch".into()));
        }
        let (i_dim, o_dim) = (self.in_dim, self.out_dim);
        let g = upstream.data();
        let w = self.weight.value.data();
        let mut dx = vec![0.0; batch * i_dim];
        for b in 0..batch {
            let row = &mut dx[b * i_dim..(b + 1) * i_dim];
            for q in 0..o_dim {
                let gq = g[b * o_dim + q];
                if gq == 0.0 {
                    continue;
                }
                for (d, wv) in row.iter_mut().zip(&w[q * i_dim..(q + 1) * i_dim]) {
                    *d += gq * wv;
                }
            }
        }
        if accumulate {
            let dw = self.weight.grad.data_mut();
            for b in 0..batch {
                let xr = x.row(b);
                for q in 0..o_dim {
                    let gq = g[b * o_dim + q];
                    for (d, xv) in dw[q * i_dim..(q + 1) * i_dim].iter_mut().zip(xr) {
                        *d += gq * xv;
                    }
                }
            }
            let db = self.bias.grad.data_mut();
            for b in 0..batch {
                for q in 0..o_dim {
                    db[q] += g[b * o_dim + q];
                }
            }
        }
        Tensor::new(vec![batch, i_dim], dx)
    }
}

impl Layer for LinearLayer {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let batch = x.expect_matrix(self.in_dim, "linear layer")?;
        let (i_dim, o_dim) = (self.in_dim, self.out_dim);
        let w = self.weight.value.data();
        let bias = self.bias.value.data();
        let mut out = vec![0.0; batch * o_dim];
        for b in 0..batch {
            let xr = x.row(b);
            for q in 0..o_dim {
                let dot: f64 = w[q * i_dim..(q + 1) * i_dim]
                    .iter()
                    .zip(xr)
                    .map(|(w, x)| w * x)
                    .sum();
                out[b * o_dim + q] = dot + bias[q];
            }
        }
        self.input = Some(x.clone());
        Tensor::new(vec![batch, o_dim], out)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        self.backward_impl(upstream, true)
    }

    fn backward_input(&mut self, upstream: &Tensor) -> Result<Tensor> {
        self.backward_impl(upstream, false)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn set_train(&mut self, train: bool) {
        self.train = train;
    }

    fn is_train(&self) -> bool {
        self.train
    }
}

/// Elementwise `max(0, x)`; the subgradient at 0 is 0.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    train: bool,
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.mask = Some(x.data().iter().map(|v| *v > 0.0).collect());
        Ok(relu(x))
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::State("relu backward called before forward".into()))?;
        if mask.len() != upstream.len() {
            return Err(Error::State("upstream shape differs from forward input".into()));
        }
        let data = upstream
            .data()
            .iter()
            .zip(mask)
            .map(|(g, &m)| if m { *g } else { 0.0 })
            .collect();
        Tensor::new(upstream.shape().to_vec(), data)
    }

    fn set_train(&mut self, train: bool) {
        self.train = train;
    }

    fn is_train(&self) -> bool {
        self.train
    }
}

/// Inverted dropout with its own seeded generator.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    train: bool,
    rng: ChaCha8Rng,
    /// Per-element multiplier from the last train-mode forward; `None` means identity.
    scale: Option<Vec<f64>>,
    ran: bool,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout {
            rate,
            train: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale: None,
            ran: false,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Layer for Dropout {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.ran = true;
        if !self.train || self.rate == 0.0 {
            self.scale = None;
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - self.rate);
        let scale: Vec<f64> = (0..x.len())
            .map(|_| {
                if self.rng.random::<f64>() < self.rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let data = x.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        self.scale = Some(scale);
        Tensor::new(x.shape().to_vec(), data)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        if !self.ran {
            return Err(Error::State("dropout backward called before forward".into()));
        }
        match &self.scale {
            None => Ok(upstream.clone()),
            Some(scale) => {
                if scale.len() != upstream.len() {
                    return Err(Error::State("upstream shape differs from forward input".into()));
                }
                let data = upstream.data().iter().zip(scale).map(|(g, s)| g * s).collect();
                Tensor::new(upstream.shape().to_vec(), data)
            }
        }
    }

    fn set_train(&mut self, train: bool) {
        self.train = train;
    }

    fn is_train(&self) -> bool {
        self.train
    }
}
