//! Kolmogorov-Arnold layers: B-spline bases, the silu base path and the
//! per-layer input batch normalization.

mod batchnorm;
mod layer;
mod spline;

pub use batchnorm::{BatchNorm1d, BN_EPS, BN_MOMENTUM};
pub use layer::{KanLayer, KanLayerConfig};
pub use spline::{bspline_basis, bspline_basis_grad, SplineSpec, MAX_ORDER};

/// Logistic sigmoid, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x * sigmoid(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Derivative of [`silu`]: `σ(x)·(1 + x·(1 − σ(x)))`.
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}
