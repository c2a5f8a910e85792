//! The five classifier architectures and their ablation variants.

use crate::error::{Error, Result};
use crate::kan::{KanLayer, KanLayerConfig};
use crate::layer::Layer;
use crate::mlp::{Dropout, LinearLayer, Relu};
use crate::tensor::{Param, Tensor};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Width of the second hidden layer in every architecture.
pub const HIDDEN_WIDTH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "kan")]
    Kan,
    #[serde(rename = "mlp1")]
    MlpI,
    #[serde(rename = "mlp2", alias = "mlp_l")]
    MlpII,
    #[serde(rename = "kan_mlp")]
    KanMlp,
    #[serde(rename = "mlp_kan")]
    MlpKan,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::Kan, Arch::MlpI, Arch::MlpII, Arch::KanMlp, Arch::MlpKan];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Kan => "kan",
            Arch::MlpI => "mlp1",
            Arch::MlpII => "mlp2",
            Arch::KanMlp => "kan_mlp",
            Arch::MlpKan => "mlp_kan",
        }
    }

    /// Layer widths `[d, h1, 128, m]`.
    pub fn widths(self, d: usize, m: usize) -> [usize; 4] {
        match self {
            Arch::MlpII => [d, 10 * d, HIDDEN_WIDTH, m],
            _ => [d, d, HIDDEN_WIDTH, m],
        }
    }

    /// Whether each of the three weight layers is a KAN layer.
    pub fn kan_layers(self) -> [bool; 3] {
        match self {
            Arch::Kan => [true, true, true],
            Arch::MlpI | Arch::MlpII => [false, false, false],
            Arch::KanMlp => [true, true, false],
            Arch::MlpKan => [false, false, true],
        }
    }

    pub fn has_kan(self) -> bool {
        self.kan_layers().iter().any(|&k| k)
    }

    /// Approximate parameter count listed for this architecture in the
    /// original comparison table, as a function of the input length.
    pub fn reference_param_count(self, d: usize, grid_size: usize, order: usize) -> f64 {
        let d = d as f64;
        let gk = (grid_size + order) as f64;
        match self {
            Arch::Kan => (2.0 + gk) * d * d + (258.0 + 128.0 * gk) * d,
            Arch::MlpI => d * d + 131.0 * d,
            Arch::MlpII => 10.0 * d * d + 1310.0 * d,
            Arch::KanMlp => (2.0 + gk) * d * d + 130.0 * d,
            Arch::MlpKan => d * d + (2.0 + gk) * 128.0 * d,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kan" => Ok(Arch::Kan),
            "mlp1" | "mlp_i" | "mlp" => Ok(Arch::MlpI),
            "mlp2" | "mlp_ii" | "mlp_l" => Ok(Arch::MlpII),
            "kan_mlp" => Ok(Arch::KanMlp),
            "mlp_kan" => Ok(Arch::MlpKan),
            other => Err(Error::Config(format!(
                "unknown architecture '{other}' (expected kan, mlp1, mlp2, kan_mlp or mlp_kan)"
            ))),
        }
    }
}

fn default_grid() -> usize {
    5
}
fn default_order() -> usize {
    3
}
fn default_true() -> bool {
    true
}
fn default_dropout() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub d: usize,
    pub m: usize,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default = "default_order")]
    pub spline_order: usize,
    #[serde(default = "default_true")]
    pub use_base: bool,
    #[serde(default = "default_true")]
    pub use_spline: bool,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(arch: Arch, d: usize, m: usize) -> Self {
        ModelConfig {
            arch,
            d,
            m,
            grid_size: default_grid(),
            spline_order: default_order(),
            use_base: true,
            use_spline: true,
            dropout: default_dropout(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_grid(mut self, grid_size: usize) -> Self {
        self.grid_size = grid_size;
        self
    }

    pub fn with_paths(mut self, use_base: bool, use_spline: bool) -> Self {
        self.use_base = use_base;
        self.use_spline = use_spline;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }
}

#[derive(Debug, Clone)]
pub enum Block {
    Kan(KanLayer),
    Linear(LinearLayer),
    Relu(Relu),
    Dropout(Dropout),
}

impl Block {
    fn inner(&self) -> &dyn Layer {
        match self {
            Block::Kan(l) => l,
            Block::Linear(l) => l,
            Block::Relu(l) => l,
            Block::Dropout(l) => l,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Layer {
        match self {
            Block::Kan(l) => l,
            Block::Linear(l) => l,
            Block::Relu(l) => l,
            Block::Dropout(l) => l,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Block::Kan(_) => "kan",
            Block::Linear(_) => "linear",
            Block::Relu(_) => "relu",
            Block::Dropout(_) => "dropout",
        }
    }
}

impl Layer for Block {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.inner_mut().forward(x)
    }
    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        self.inner_mut().backward(upstream)
    }
    fn backward_input(&mut self, upstream: &Tensor) -> Result<Tensor> {
        self.inner_mut().backward_input(upstream)
    }
    fn params(&self) -> Vec<&Param> {
        self.inner().params()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.inner_mut().params_mut()
    }
    fn set_train(&mut self, train: bool) {
        self.inner_mut().set_train(train)
    }
    fn is_train(&self) -> bool {
        self.inner().is_train()
    }
}

/// A stack of blocks applied in order.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    pub layers: Vec<Block>,
    train: bool,
}

/// Builds the architecture described by `config` with weights drawn from `config.seed`.
///
/// Each of the three weight layers is a KAN layer (with its own input batch
/// norm) or a linear layer followed by ReLU. Hidden layers are followed by
/// dropout; the output layer produces raw logits.
pub fn build_model(config: &ModelConfig) -> Result<Model> {
    if config.d == 0 {
        return Err(Error::Config("series length d must be at least 1".into()));
    }
    if config.m < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {}",
            config.m
        )));
    }
    if config.arch.has_kan() && !config.use_base && !config.use_spline {
        return Err(Error::Config(
            "--no-base and --no-spline cannot both be set".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let widths = config.arch.widths(config.d, config.m);
    let kinds = config.arch.kan_layers();
    let mut layers = Vec::new();
    for (i, &is_kan) in kinds.iter().enumerate() {
        let (din, dout) = (widths[i], widths[i + 1]);
        let prefix = format!("layers.{}", layers.len());
        let hidden = i < 2;
        if is_kan {
            let cfg = KanLayerConfig {
                in_dim: din,
                out_dim: dout,
                grid_size: config.grid_size,
                order: config.spline_order,
                use_base: config.use_base,
                use_spline: config.use_spline,
            };
            layers.push(Block::Kan(KanLayer::new(cfg, &prefix, &mut rng)?));
        } else {
            layers.push(Block::Linear(LinearLayer::new(din, dout, &prefix, &mut rng)?));
            if hidden {
                layers.push(Block::Relu(Relu::new()));
            }
        }
        if hidden {
            layers.push(Block::Dropout(Dropout::new(config.dropout, rng.next_u64())?));
        }
    }
    Ok(Model {
        config: config.clone(),
        layers,
        train: true,
    })
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Exact number of learnable scalars, including batch-norm affine terms.
    pub fn count_params(&self) -> usize {
        self.num_params()
    }

    /// `(in, out)` of each weight layer, in order.
    pub fn layer_dims(&self) -> Vec<(&'static str, usize, usize)> {
        self.layers
            .iter()
            .filter_map(|b| match b {
                Block::Kan(l) => Some(("kan", l.in_dim(), l.out_dim())),
                Block::Linear(l) => Some(("linear", l.in_dim(), l.out_dim())),
                _ => None,
            })
            .collect()
    }

    /// Logits for `x`, switching to the requested mode first.
    pub fn forward_mode(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.set_train(train);
        self.forward(x)
    }

    /// Eval-mode class predictions, evaluated in chunks.
    pub fn predict(&mut self, x: &Tensor) -> Result<Vec<usize>> {
        let was_train = self.train;
        self.set_train(false);
        let mut preds = Vec::with_capacity(x.rows());
        let idx: Vec<usize> = (0..x.rows()).collect();
        for chunk in idx.chunks(256) {
            let logits = self.forward(&x.select_rows(chunk))?;
            preds.extend(logits.argmax_rows());
        }
        self.set_train(was_train);
        Ok(preds)
    }

    /// Base and spline addends of the final layer, flattened over `[batch, m]`.
    pub fn last_layer_components(&mut self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let Some((last, rest)) = self.layers.split_last_mut() else {
            return Err(Error::Capability("empty model".into()));
        };
        let Block::Kan(kan) = last else {
            return Err(Error::Capability(format!(
                "final layer of {} is {}, not a KAN layer",
                self.config.arch,
                last.kind()
            )));
        };
        let mut h = x.clone();
        for layer in rest.iter_mut() {
            h = layer.forward(&h)?;
        }
        let (base, spline) = kan.forward_components(&h)?;
        Ok((base.into_data(), spline.into_data()))
    }

    /// Batch-norm running statistics, named `<bn prefix>.running_mean` and
    /// `<bn prefix>.running_var`.
    pub fn buffers(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for b in &self.layers {
            if let Block::Kan(k) = b {
                let prefix = k.bn.gamma.name.trim_end_matches(".gamma");
                out.push((format!("{prefix}.running_mean"), k.bn.running_mean.as_slice()));
                out.push((format!("{prefix}.running_var"), k.bn.running_var.as_slice()));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for b in &mut self.layers {
            if let Block::Kan(k) = b {
                let prefix = k.bn.gamma.name.trim_end_matches(".gamma").to_string();
                out.push((format!("{prefix}.running_mean"), &mut k.bn.running_mean));
                out.push((format!("{prefix}.running_var"), &mut k.bn.running_var));
            }
        }
        out
    }

    /// Order-sensitive hash of every parameter bit pattern and batch-norm statistic.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for p in self.params() {
            p.value.data().iter().copied().for_each(&mut eat);
        }
        for (_, buf) in self.buffers() {
            buf.iter().copied().for_each(&mut eat);
        }
        h
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.config.d {
            return Err(Error::Data(format!(
                "model expects series of length {}, got input of shape {:?}",
                self.config.d,
                x.shape()
            )));
        }
        Ok(())
    }
}

impl Layer for Model {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn backward_input(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward_input(&g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn set_train(&mut self, train: bool) {
        self.train = train;
        for l in &mut self.layers {
            l.set_train(train);
        }
    }

    fn is_train(&self) -> bool {
        self.train
    }
}
