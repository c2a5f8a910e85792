//! Uniform-knot B-spline bases on a fixed interval.
//!
//! Basis values come from the triangular Cox–de Boor scheme evaluated on a
//! single knot span of the extended knot vector `lo + (j - k) h`,
//! `j = 0 ..= G + 2k`. Inside `[lo, hi]` the `G + k` bases sum to one. In the
//! `k` extra spans on either side only some bases are supported, and beyond
//! the outermost knots every basis is zero, exactly as the recursion defines
//! them. The bases are `C^{k-1}` everywhere, including at the outer knots.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Highest supported spline order.
pub const MAX_ORDER: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    order: usize,
    grid_size: usize,
    lo: f64,
    hi: f64,
    /// `t_{-k} ..= t_{G+3k}`: the real knots padded with `k` virtual knots on
    /// each side so the triangular scheme never indexes out of bounds.
    padded: Vec<f64>,
}

impl SplineSpec {
    pub fn new(grid_size: usize, order: usize) -> Result<Self> {
        SplineSpec::with_interval(grid_size, order, -1.0, 1.0)
    }

    pub fn with_interval(grid_size: usize, order: usize, lo: f64, hi: f64) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::Config("grid size must be positive".into()));
        }
        if order > MAX_ORDER {
            return Err(Error::Config(format!(
                "spline order {order} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("invalid spline interval [{lo}, {hi}]")));
        }
        let h = (hi - lo) / grid_size as f64;
        let padded = (0..=grid_size + 4 * order)
            .map(|j| lo + (j as f64 - 2.0 * order as f64) * h)
            .collect();
        Ok(SplineSpec {
            order,
            grid_size,
            lo,
            hi,
            padded,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// The `G + 2k + 1` knots `t_0 ..= t_{G+2k}`.
    pub fn knots(&self) -> &[f64] {
        &self.padded[self.order..self.padded.len() - self.order]
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.grid_size as f64
    }

    /// Number of basis functions, `G + k`.
    pub fn num_basis(&self) -> usize {
        self.grid_size + self.order
    }

    /// Knot span `j` with `t_j <= x < t_{j+1}`, or `None` outside `[t_0, t_{G+2k})`.
    pub fn span(&self, x: f64) -> Option<usize> {
        let t = self.knots();
        if !(x >= t[0] && x < t[t.len() - 1]) {
            return None;
        }
        Some(t.partition_point(|&v| v <= x) - 1)
    }

    /// Writes the basis values on a window of `k + 1` consecutive indices
    /// into `out[..=k]` and returns the first index of the window. Bases
    /// outside the window are zero at `x`.
    pub fn local_basis(&self, x: f64, out: &mut [f64]) -> usize {
        let k = self.order;
        let Some(span) = self.span(x) else {
            out[..=k].fill(0.0);
            return 0;
        };
        let mut full = [0.0; MAX_ORDER + 1];
        local_values(&self.padded, k, x, span + k, &mut full);
        self.clip_window(span, &full, out)
    }

    /// Values and first derivatives on the same window as [`SplineSpec::local_basis`].
    pub fn local_basis_with_grad(&self, x: f64, values: &mut [f64], grads: &mut [f64]) -> usize {
        let k = self.order;
        let Some(span) = self.span(x) else {
            values[..=k].fill(0.0);
            grads[..=k].fill(0.0);
            return 0;
        };
        let ps = span + k;
        let mut vals = [0.0; MAX_ORDER + 1];
        local_values(&self.padded, k, x, ps, &mut vals);
        let mut dvals = [0.0; MAX_ORDER + 1];
        if k > 0 {
            let mut lower = [0.0; MAX_ORDER + 1];
            local_values(&self.padded, k - 1, x, ps, &mut lower);
            // Order k-1 bases on this span are ps-k+1 ..= ps, stored in lower[0..k].
            let t = &self.padded;
            for r in 0..=k {
                let j = ps - k + r;
                let left = if r >= 1 {
                    k as f64 / (t[j + k] - t[j]) * lower[r - 1]
                } else {
                    0.0
                };
                let right = if r < k {
                    k as f64 / (t[j + k + 1] - t[j + 1]) * lower[r]
                } else {
                    0.0
                };
                dvals[r] = left - right;
            }
        }
        self.clip_window(span, &dvals, grads);
        self.clip_window(span, &vals, values)
    }

    /// Maps the `k + 1` values of bases `span - k ..= span` (some of which may
    /// not exist) onto a window of real basis indices.
    fn clip_window(&self, span: usize, full: &[f64], out: &mut [f64]) -> usize {
        let k = self.order;
        let first_virtual = span as isize - k as isize;
        let first = first_virtual.clamp(0, self.grid_size as isize - 1) as usize;
        for r in 0..=k {
            let src = (first + r) as isize - first_virtual;
            out[r] = if (0..=k as isize).contains(&src) {
                full[src as usize]
            } else {
                0.0
            };
        }
        first
    }
}

fn local_values(knots: &[f64], degree: usize, x: f64, span: usize, out: &mut [f64]) {
    let mut left = [0.0; MAX_ORDER + 1];
    let mut right = [0.0; MAX_ORDER + 1];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

/// All `G + k` basis values at `x`.
pub fn bspline_basis(x: f64, spec: &SplineSpec) -> Vec<f64> {
    let mut full = vec![0.0; spec.num_basis()];
    let mut local = [0.0; MAX_ORDER + 1];
    let first = spec.local_basis(x, &mut local);
    full[first..=first + spec.order].copy_from_slice(&local[..=spec.order]);
    full
}

/// All `G + k` basis derivatives `dB_i/dx` at `x`.
pub fn bspline_basis_grad(x: f64, spec: &SplineSpec) -> Vec<f64> {
    let mut full = vec![0.0; spec.num_basis()];
    let mut vals = [0.0; MAX_ORDER + 1];
    let mut grads = [0.0; MAX_ORDER + 1];
    let first = spec.local_basis_with_grad(x, &mut vals, &mut grads);
    full[first..=first + spec.order].copy_from_slice(&grads[..=spec.order]);
    full
}
