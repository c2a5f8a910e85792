//! The differentiable-layer contract shared by every layer and by whole models.

use crate::error::Result;
use crate::tensor::{Param, Tensor};

/// A layer mapping `[batch, in]` to `[batch, out]` with a hand-written backward pass.
///
/// `forward` caches whatever `backward` needs. `backward` returns the gradient
/// with respect to the input and *adds* parameter gradients into `Param::grad`;
/// call [`Layer::zero_grads`] between steps.
pub trait Layer {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor>;

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor>;

    /// Like [`Layer::backward`] but leaves parameter gradients untouched.
    /// Attacks and Lipschitz estimation only need input gradients.
    fn backward_input(&mut self, upstream: &Tensor) -> Result<Tensor> {
        self.backward(upstream)
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    fn set_train(&mut self, train: bool);

    fn is_train(&self) -> bool;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}

/// Layers applied in order.
pub struct Sequential {
    layers: Vec<Box<dyn Layer + Send>>,
    train: bool,
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer + Send>>) -> Self {
        Sequential { layers, train: true }
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let mut g = upstream.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    fn backward_input(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let mut g = upstream.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward_input(&g)?;
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

/// Outcome of comparing analytic gradients against central finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub max_rel_error_params: f64,
    pub max_rel_error_input: f64,
    /// Name of the tensor (parameter name or `"input"`) holding the worst entry.
    pub worst: String,
    pub n_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_params.max(self.max_rel_error_input)
    }
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Checks every parameter and input gradient of `layer` at `x`.
///
/// The scalar being differentiated is the sum of the layer outputs. The layer
/// must be deterministic (dropout off, batch norm in eval mode or bypassed).
pub fn grad_check(layer: &mut dyn Layer, x: &Tensor, epsilon: f64, tolerance: f64) -> CheckReport {
    grad_check_sampled(layer, x, epsilon, tolerance, usize::MAX)
}

/// [`grad_check`] restricted to at most `max_per_tensor` evenly strided
/// entries per parameter tensor, for layers too large to probe exhaustively.
pub fn grad_check_sampled(
    layer: &mut dyn Layer,
    x: &Tensor,
    epsilon: f64,
    tolerance: f64,
    max_per_tensor: usize,
) -> CheckReport {
    let mut report = CheckReport {
        max_rel_error_params: 0.0,
        max_rel_error_input: 0.0,
        worst: String::new(),
        n_checked: 0,
        tolerance,
        passed: false,
    };
    let failed = |mut r: CheckReport, why: &str| {
        r.max_rel_error_params = f64::INFINITY;
        r.worst = why.to_string();
        r
    };

    layer.zero_grads();
    let y = match layer.forward(x) {
        Ok(y) => y,
        Err(e) => return failed(report, &format!("forward failed: {e}")),
    };
    let dx = match layer.backward(&Tensor::ones(y.shape())) {
        Ok(g) => g,
        Err(e) => return failed(report, &format!("backward failed: {e}")),
    };
    let analytic: Vec<Vec<f64>> = layer
        .params()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();

    // Sum of per-output differences; perturbations that touch few outputs
    // keep their rounding error local.
    let diff = |plus: &Tensor, minus: &Tensor| -> f64 {
        plus.data()
            .iter()
            .zip(minus.data())
            .map(|(a, b)| a - b)
            .sum::<f64>()
            / (2.0 * epsilon)
    };

    let n_params = analytic.len();
    for pi in 0..n_params {
        let numel = analytic[pi].len();
        let stride = numel.div_ceil(max_per_tensor.min(numel).max(1)).max(1);
        let mut j = 0;
        while j < numel {
            let orig = layer.params()[pi].value.data()[j];
            layer.params_mut()[pi].value.data_mut()[j] = orig + epsilon;
            let plus = layer.forward(x);
            layer.params_mut()[pi].value.data_mut()[j] = orig - epsilon;
            let minus = layer.forward(x);
            layer.params_mut()[pi].value.data_mut()[j] = orig;
            let (Ok(plus), Ok(minus)) = (plus, minus) else {
                return failed(report, "forward failed during probing");
            };
            let numeric = diff(&plus, &minus);
            let err = rel_error(analytic[pi][j], numeric);
            report.n_checked += 1;
            if !(err <= report.max_rel_error_params) {
                report.max_rel_error_params = err;
                if err > report.max_rel_error_input {
                    report.worst = layer.params()[pi].name.clone();
                }
            }
            j += stride;
        }
    }

    let mut probe = x.clone();
    for j in 0..x.len() {
        let orig = probe.data()[j];
        probe.data_mut()[j] = orig + epsilon;
        let plus = layer.forward(&probe);
        probe.data_mut()[j] = orig - epsilon;
        let minus = layer.forward(&probe);
        probe.data_mut()[j] = orig;
        let (Ok(plus), Ok(minus)) = (plus, minus) else {
            return failed(report, "forward failed during probing");
        };
        let numeric = diff(&plus, &minus);
        let err = rel_error(dx.data()[j], numeric);
        report.n_checked += 1;
        if !(err <= report.max_rel_error_input) {
            report.max_rel_error_input = err;
            if err > report.max_rel_error_params {
                report.worst = "input".to_string();
            }
        }
    }

    // Restore the caches to the unperturbed point.
    let _ = layer.forward(x);
    report.passed = report.max_rel_error() <= tolerance;
    report
}
