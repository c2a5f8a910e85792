//! The gradient-check suite run by `kantsc gradcheck` and the test targets.
//!
//! Every case compares analytic parameter and input gradients with central
//! differences of the summed output. Layers are checked in eval mode so that
//! dropout is off and batch norm uses frozen running statistics.

use crate::kan::{KanLayer, KanLayerConfig};
use crate::layer::{grad_check, grad_check_sampled, CheckReport, Layer};
use crate::mlp::{Dropout, LinearLayer, Relu};
use crate::models::{build_model, Arch, ModelConfig};
use crate::kan::BatchNorm1d;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SUITE_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: String,
    pub seed: u64,
    pub report: CheckReport,
}

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

/// Entries at least 0.1 away from the ReLU kink.
fn away_from_zero(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..2.0);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

fn frozen_bn(bn: &mut BatchNorm1d, rng: &mut ChaCha8Rng) {
    let d = bn.dim();
    bn.running_mean = (0..d).map(|_| rng.random_range(-0.3..0.3)).collect();
    bn.running_var = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    for g in bn.gamma.value.data_mut() {
        *g = rng.random_range(0.7..1.3);
    }
    for b in bn.beta.value.data_mut() {
        *b = rng.random_range(-0.2..0.2);
    }
}

/// Inputs whose normalized value keeps a margin from every knot. Right next
/// to a knot some basis values are ~1e-7 and their gradients drown in the
/// rounding noise of the difference quotient.
fn kan_input(l: &KanLayer, rows: usize, margin: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let (lo, _) = l.spec().interval();
    let h = l.spec().step();
    let d = l.in_dim();
    let mut data = Vec::with_capacity(rows * d);
    for _ in 0..rows {
        for j in 0..d {
            let xhat = loop {
                let v: f64 = rng.random_range(-0.9..0.9);
                let u = (v - lo) / h;
                let frac = u - u.floor();
                if frac > margin && frac < 1.0 - margin {
                    break v;
                }
            };
            let std = (l.bn.running_var[j] + l.bn.eps).sqrt();
            let g = l.bn.gamma.value.data()[j];
            let b = l.bn.beta.value.data()[j];
            data.push((xhat - b) / g * std + l.bn.running_mean[j]);
        }
    }
    Tensor::new(vec![rows, d], data).expect("shape matches data")
}

fn check(name: &str, seed: u64, layer: &mut dyn Layer, x: &Tensor) -> SuiteCase {
    layer.set_train(false);
    SuiteCase {
        name: name.to_string(),
        seed,
        report: grad_check(layer, x, FD_STEP, SUITE_TOLERANCE),
    }
}

/// Runs every case for one seed.
pub fn suite_for_seed(seed: u64) -> Vec<SuiteCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut lin = LinearLayer::new(5, 4, "fc", &mut rng).expect("valid dims");
    let x = uniform(3, 5, -1.0, 1.0, &mut rng);
    out.push(check("linear", seed, &mut lin, &x));

    let x = away_from_zero(3, 6, &mut rng);
    out.push(check("relu", seed, &mut Relu::new(), &x));

    let mut drop = Dropout::new(0.1, seed).expect("valid rate");
    let x = uniform(3, 6, -2.0, 2.0, &mut rng);
    out.push(check("dropout-off", seed, &mut drop, &x));

    let mut bn = BatchNorm1d::new(4, "bn");
    frozen_bn(&mut bn, &mut rng);
    let x = uniform(5, 4, -2.0, 2.0, &mut rng);
    out.push(check("batchnorm-frozen", seed, &mut bn, &x));

    for g in [1usize, 5, 50] {
        let mut cfg = KanLayerConfig::new(4, 3);
        cfg.grid_size = g;
        let mut l = KanLayer::new(cfg, "kan", &mut rng).expect("valid config");
        frozen_bn(&mut l.bn, &mut rng);
        let x = kan_input(&l, 3, 0.01, &mut rng);
        out.push(check(&format!("kan-G{g}"), seed, &mut l, &x));
    }

    let mut model = build_model(&ModelConfig::new(Arch::Kan, 6, 3).with_seed(seed)).expect("valid config");
    model.set_train(false);
    let x = uniform(2, 6, -1.0, 1.0, &mut rng);
    out.push(SuiteCase {
        name: "kan-model".into(),
        seed,
        report: grad_check_sampled(&mut model, &x, FD_STEP, SUITE_TOLERANCE, 40),
    });
    out
}

/// The full suite over seeds `0..n_seeds`.
pub fn gradcheck_suite(n_seeds: u64) -> Vec<SuiteCase> {
    (0..n_seeds).flat_map(suite_for_seed).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes_on_two_seeds() {
        for case in gradcheck_suite(2) {
            assert!(case.report.passed, "{} seed {}: {:?}", case.name, case.seed, case.report);
        }
    }
}
