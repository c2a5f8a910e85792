use super::batchnorm::BatchNorm1d;
use super::spline::{SplineSpec, MAX_ORDER};
use super::{silu, silu_grad};
use crate::error::{Error, Result};
use crate::layer::Layer;
use crate::tensor::{Param, Tensor};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KanLayerConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    pub grid_size: usize,
    pub order: usize,
    pub use_base: bool,
    pub use_spline: bool,
}

impl KanLayerConfig {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        KanLayerConfig {
            in_dim,
            out_dim,
            grid_size: 5,
            order: 3,
            use_base: true,
            use_spline: true,
        }
    }
}

/// One KAN layer: input batch norm, then for every edge `(q, p)`
///
/// ```text
/// out[q] = Σ_p w_base[q,p]·silu(x̂_p) + Σ_p scale[q,p]·Σ_i coef[q,p,i]·B_i(x̂_p)
/// ```
///
/// The base and spline sums are accumulated separately and added at the end,
/// so [`KanLayer::forward_components`] reproduces the forward output exactly.
#[derive(Debug, Clone)]
pub struct KanLayer {
    in_dim: usize,
    out_dim: usize,
    spec: SplineSpec,
    pub bn: BatchNorm1d,
    /// `[out, in]`, present when the base path is enabled.
    pub w_base: Option<Param>,
    /// `[out, in]` per-edge spline scale.
    pub spline_scale: Option<Param>,
    /// `[out, in, G + k]` spline coefficients.
    pub w_spline: Option<Param>,
    train: bool,
    cache: Option<KanCache>,
}

#[derive(Debug, Clone)]
struct KanCache {
    batch: usize,
    first: Vec<usize>,
    basis: Vec<f64>,
    dbasis: Vec<f64>,
    silu: Vec<f64>,
    dsilu: Vec<f64>,
}

impl KanLayer {
    pub fn new(cfg: KanLayerConfig, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        if !cfg.use_base && !cfg.use_spline {
            return Err(Error::Config(
                "a KAN layer needs the base path, the spline path, or both".into(),
            ));
        }
        if cfg.in_dim == 0 || cfg.out_dim == 0 {
            return Err(Error::Config("KAN layer dimensions must be positive".into()));
        }
        let spec = SplineSpec::new(cfg.grid_size, cfg.order)?;
        let (i, o, nb) = (cfg.in_dim, cfg.out_dim, spec.num_basis());

        let w_base = cfg.use_base.then(|| {
            let bound = (6.0 / i as f64).sqrt();
            let data = (0..o * i).map(|_| rng.random_range(-bound..=bound)).collect();
            Param::new(format!("{prefix}.w_base"), Tensor::new(vec![o, i], data).unwrap())
        });
        let (spline_scale, w_spline) = if cfg.use_spline {
            let bound = 0.1 / ((i * nb) as f64).sqrt();
            let data = (0..o * i * nb)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            (
                Some(Param::new(
                    format!("{prefix}.spline_scale"),
                    Tensor::ones(&[o, i]),
                )),
                Some(Param::new(
                    format!("{prefix}.w_spline"),
                    Tensor::new(vec![o, i, nb], data).unwrap(),
                )),
            )
        } else {
            (None, None)
        };

        Ok(KanLayer {
            in_dim: i,
            out_dim: o,
            spec,
            bn: BatchNorm1d::new(i, &format!("{prefix}.bn")),
            w_base,
            spline_scale,
            w_spline,
            train: true,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn spec(&self) -> &SplineSpec {
        &self.spec
    }

    pub fn use_base(&self) -> bool {
        self.w_base.is_some()
    }

    pub fn use_spline(&self) -> bool {
        self.w_spline.is_some()
    }

    /// Base and spline addends of the output, each `[batch, out]`.
    pub fn forward_components(&mut self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let batch = x.expect_matrix(self.in_dim, "KAN layer")?;
        let xhat = self.bn.forward(x)?;
        let (i_dim, o_dim) = (self.in_dim, self.out_dim);
        let k1 = self.spec.order() + 1;
        let nb = self.spec.num_basis();

        let n = batch * i_dim;
        let mut cache = KanCache {
            batch,
            first: vec![0; n],
            basis: vec![0.0; n * k1],
            dbasis: vec![0.0; n * k1],
            silu: vec![0.0; n],
            dsilu: vec![0.0; n],
        };
        let mut vals = [0.0; MAX_ORDER + 1];
        let mut grads = [0.0; MAX_ORDER + 1];
        for (e, &v) in xhat.data().iter().enumerate() {
            if self.w_base.is_some() {
                cache.silu[e] = silu(v);
                cache.dsilu[e] = silu_grad(v);
            }
            if self.w_spline.is_some() {
                cache.first[e] = self.spec.local_basis_with_grad(v, &mut vals, &mut grads);
                cache.basis[e * k1..(e + 1) * k1].copy_from_slice(&vals[..k1]);
                cache.dbasis[e * k1..(e + 1) * k1].copy_from_slice(&grads[..k1]);
            }
        }

        let mut base = vec![0.0; batch * o_dim];
        let mut spline = vec![0.0; batch * o_dim];
        if let Some(wb) = &self.w_base {
            let wb = wb.value.data();
            for b in 0..batch {
                let s = &cache.silu[b * i_dim..(b + 1) * i_dim];
                for q in 0..o_dim {
                    let w = &wb[q * i_dim..(q + 1) * i_dim];
                    base[b * o_dim + q] = w.iter().zip(s).map(|(w, s)| w * s).sum();
                }
            }
        }
        if let (Some(sc), Some(coef)) = (&self.spline_scale, &self.w_spline) {
            let sc = sc.value.data();
            let coef = coef.value.data();
            for b in 0..batch {
                for q in 0..o_dim {
                    let mut acc = 0.0;
                    for p in 0..i_dim {
                        let e = b * i_dim + p;
                        let c = &coef[(q * i_dim + p) * nb + cache.first[e]..][..k1];
                        let bv = &cache.basis[e * k1..(e + 1) * k1];
                        let edge: f64 = c.iter().zip(bv).map(|(c, b)| c * b).sum();
                        acc += sc[q * i_dim + p] * edge;
                    }
                    spline[b * o_dim + q] = acc;
                }
            }
        }
        self.cache = Some(cache);
        Ok((
            Tensor::new(vec![batch, o_dim], base)?,
            Tensor::new(vec![batch, o_dim], spline)?,
        ))
    }

    fn backward_impl(&mut self, upstream: &Tensor, accumulate: bool) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("KAN layer backward called before forward".into()))?;
        let batch = upstream.expect_matrix(self.out_dim, "KAN layer backward")?;
        if batch != cache.batch {
            return Err(Error::State(format!(
                "upstream batch {batch} differs from forward batch {}",
                cache.batch
            )));
        }
        let (i_dim, o_dim) = (self.in_dim, self.out_dim);
        let k1 = self.spec.order() + 1;
        let nb = self.spec.num_basis();
        let g = upstream.data();
        let mut dxhat = vec![0.0; batch * i_dim];

        if let Some(wb) = self.w_base.as_mut() {
            for b in 0..batch {
                for q in 0..o_dim {
                    let gq = g[b * o_dim + q];
                    if gq == 0.0 {
                        continue;
                    }
                    let w = &wb.value.data()[q * i_dim..(q + 1) * i_dim];
                    for p in 0..i_dim {
                        dxhat[b * i_dim + p] += gq * w[p] * cache.dsilu[b * i_dim + p];
                    }
                }
            }
            if accumulate {
                let dw = wb.grad.data_mut();
                for b in 0..batch {
                    for q in 0..o_dim {
                        let gq = g[b * o_dim + q];
                        for p in 0..i_dim {
                            dw[q * i_dim + p] += gq * cache.silu[b * i_dim + p];
                        }
                    }
                }
            }
        }

        if let (Some(sc), Some(coef)) = (self.spline_scale.as_mut(), self.w_spline.as_mut()) {
            for b in 0..batch {
                for q in 0..o_dim {
                    let gq = g[b * o_dim + q];
                    if gq == 0.0 {
                        continue;
                    }
                    for p in 0..i_dim {
                        let e = b * i_dim + p;
                        let edge_idx = q * i_dim + p;
                        let off = edge_idx * nb + cache.first[e];
                        let c = &coef.value.data()[off..off + k1];
                        let bv = &cache.basis[e * k1..(e + 1) * k1];
                        let dbv = &cache.dbasis[e * k1..(e + 1) * k1];
                        let s = sc.value.data()[edge_idx];
                        let slope: f64 = c.iter().zip(dbv).map(|(c, d)| c * d).sum();
                        dxhat[e] += gq * s * slope;
                        if accumulate {
                            let edge: f64 = c.iter().zip(bv).map(|(c, b)| c * b).sum();
                            sc.grad.data_mut()[edge_idx] += gq * edge;
                            let dc = &mut coef.grad.data_mut()[off..off + k1];
                            for (d, bval) in dc.iter_mut().zip(bv) {
                                *d += gq * s * bval;
                            }
                        }
                    }
                }
            }
        }

        let dxhat = Tensor::new(vec![batch, i_dim], dxhat)?;
        if accumulate {
            self.bn.backward(&dxhat)
        } else {
            self.bn.backward_input(&dxhat)
        }
    }
}

impl Layer for KanLayer {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (mut base, spline) = self.forward_components(x)?;
        for (b, s) in base.data_mut().iter_mut().zip(spline.data()) {
            *b += s;
        }
        Ok(base)
    }

    fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        self.backward_impl(upstream, true)
    }

    fn backward_input(&mut self, upstream: &Tensor) -> Result<Tensor> {
        self.backward_impl(upstream, false)
    }

    fn params(&self) -> Vec<&Param> {
        let mut out = self.bn.params();
        out.extend(self.w_base.iter());
        out.extend(self.spline_scale.iter());
        out.extend(self.w_spline.iter());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.bn.params_mut();
        out.extend(self.w_base.iter_mut());
        out.extend(self.spline_scale.iter_mut());
        out.extend(self.w_spline.iter_mut());
        out
    }

    fn set_train(&mut self, train: bool) {
        self.train = train;
        self.bn.set_train(train);
    }

    fn is_train(&self) -> bool {
        self.train
    }
}
