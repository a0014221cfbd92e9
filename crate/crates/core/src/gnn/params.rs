use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::GnnConfig;
use crate::error::Result;
use crate::rng;

/// Weights of one attention head. Matrices act on row vectors (`h · W`).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// Message transform, `d_in x d_head`.
    pub w: Array2<f64>,
    /// Attention transform of the receiving node, `d_in x d_head`.
    pub w1: Array2<f64>,
    /// Attention transform of the sending node, `d_in x d_head`.
    pub w2: Array2<f64>,
    /// Edge-weight transform, `d_head`.
    pub w3: Array1<f64>,
    /// Attention vector, `d_head`.
    pub att: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    /// Codebook projection, `d_codebook x d_hidden`.
    pub proj: Array2<f64>,
    pub layers: Vec<LayerParams>,
}

fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

/// Glorot-uniform initialisation, deterministic in `seed`.
pub fn init_params(config: &GnnConfig, seed: u64) -> Result<GnnParams> {
    config.validate()?;
    let mut rng = rng::stream(seed, "gnn/init");
    let proj = glorot(
        config.d_codebook,
        config.d_hidden,
        config.d_codebook,
        config.d_hidden,
        &mut rng,
    );
    let layers = (0..config.n_layers())
        .map(|l| {
            let d_in = config.d_hidden;
            let dh = config.head_dim(l);
            let heads = (0..config.n_heads)
                .map(|_| HeadParams {
                    w: glorot(d_in, dh, d_in, dh, &mut rng),
                    w1: glorot(d_in, dh, d_in, dh, &mut rng),
                    w2: glorot(d_in, dh, d_in, dh, &mut rng),
                    w3: glorot(1, dh, 1, dh, &mut rng).into_shape_with_order(dh).unwrap(),
                    att: glorot(dh, 1, dh, 1, &mut rng).into_shape_with_order(dh).unwrap(),
                })
                .collect();
            LayerParams { heads }
        })
        .collect();
    Ok(GnnParams { proj, layers })
}

impl GnnParams {
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_tensor_mut(|t| t.fill(0.0));
        z
    }

    /// Visit every parameter tensor as a flat slice, in a fixed order.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&[f64])) {
        f(self.proj.as_slice().unwrap());
        for layer in &self.layers {
            for h in &layer.heads {
                f(h.w.as_slice().unwrap());
                f(h.w1.as_slice().unwrap());
                f(h.w2.as_slice().unwrap());
                f(h.w3.as_slice().unwrap());
                f(h.att.as_slice().unwrap());
            }
        }
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        f(self.proj.as_slice_mut().unwrap());
        for layer in &mut self.layers {
            for h in &mut layer.heads {
                f(h.w.as_slice_mut().unwrap());
                f(h.w1.as_slice_mut().unwrap());
                f(h.w2.as_slice_mut().unwrap());
                f(h.w3.as_slice_mut().unwrap());
                f(h.att.as_slice_mut().unwrap());
            }
        }
    }

    /// All parameters concatenated in `for_each_tensor` order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_tensor(|t| out.extend_from_slice(t));
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign(&mut self, flat: &[f64]) {
        let mut at = 0;
        self.for_each_tensor_mut(|t| {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        });
        assert_eq!(at, flat.len(), "flat parameter length mismatch");
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(|t| ok &= t.iter().all(|v| v.is_finite()));
        ok
    }

    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        self.for_each_tensor(|t| sq += t.iter().map(|v| v * v).sum::<f64>());
        sq.sqrt()
    }
}
