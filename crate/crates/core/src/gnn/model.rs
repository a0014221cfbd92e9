//! Forward and reverse passes of the attentional GNN.
//!
//! For receiving node `i`, sender `j` (including `i` itself with weight 1)
//! and one head:
//!
//! ```text
//! z_ij   = h_i W1 + h_j W2 + s_ij w3
//! e_ij   = att · leaky_relu(z_ij)
//! a_ij   = softmax_j(e_ij)
//! out_i  = sum_j a_ij (h_j W)
//! ```
//!
//! Head outputs are concatenated; hidden layers apply ELU, the last layer
//! is linear.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::loss::{objective, Objective};
use super::params::GnnParams;
use super::sample::SampledSubgraph;
use super::GnnConfig;
use crate::error::{Error, Result};

/// Incoming edges in compressed rows; the first entry of every row is the
/// self-edge.
#[derive(Debug, Clone)]
struct Csr {
    offsets: Vec<usize>,
    src: Vec<usize>,
    weight: Vec<f64>,
}

impl Csr {
    fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

#[derive(Debug, Clone)]
struct HeadTrace {
    p1: Array2<f64>,
    p2: Array2<f64>,
    msg: Array2<f64>,
    alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    input: Array2<f64>,
    pre: Array2<f64>,
    heads: Vec<HeadTrace>,
    /// Scaled dropout mask applied after the activation.
    mask: Option<Array2<f64>>,
}

/// Result of a forward pass, with everything the reverse pass needs.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Final-layer output for every local node; batch nodes come first.
    pub output: Array2<f64>,
    n_targets: usize,
    codebook_rows: Array2<f64>,
    input_mask: Option<Array2<f64>>,
    layers: Vec<LayerTrace>,
    csr: Csr,
    leaky_slope: f64,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 - rate;
    Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

fn build_csr(subgraph: &SampledSubgraph, edge_dropout: f64, rng: Option<&mut ChaCha8Rng>) -> Csr {
    let n = subgraph.n_nodes();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut src = Vec::with_capacity(n + subgraph.n_edges());
    let mut weight = Vec::with_capacity(n + subgraph.n_edges());
    let mut rng = rng.filter(|_| edge_dropout > 0.0);
    offsets.push(0);
    for (i, incoming) in subgraph.incoming.iter().enumerate() {
        src.push(i);
        weight.push(1.0);
        for &(j, w) in incoming {
            let kept = match rng.as_deref_mut() {
                Some(r) => r.random::<f64>() >= edge_dropout,
                None => true,
            };
            if kept {
                src.push(j);
                weight.push(w);
            }
        }
        offsets.push(src.len());
    }
    Csr {
        offsets,
        src,
        weight,
    }
}

/// Run the network over `subgraph`.
///
/// With `dropout` set, node-feature dropout is applied after the input
/// projection and after every hidden layer, and each sampled edge is
/// dropped independently (self-edges are always kept). Without it the pass
/// is a pure function of its inputs.
pub fn forward(
    params: &GnnParams,
    config: &GnnConfig,
    subgraph: &SampledSubgraph,
    codebook: &Array2<f32>,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<Forward> {
    let n = subgraph.n_nodes();
    if let Some(&bad) = subgraph.nodes.iter().find(|&&v| v as usize >= codebook.nrows()) {
        return Err(Error::OutOfRangeToken {
            token: bad as usize,
            vocab_size: codebook.nrows(),
        });
    }
    if codebook.ncols() != params.proj.nrows() {
        return Err(Error::DimensionMismatch {
            expected: params.proj.nrows(),
            found: codebook.ncols(),
        });
    }
    let codebook_rows = Array2::from_shape_fn((n, codebook.ncols()), |(i, c)| {
        codebook[[subgraph.nodes[i] as usize, c]] as f64
    });
    let mut x = codebook_rows.dot(&params.proj);
    let input_mask = match dropout.as_deref_mut() {
        Some(rng) if config.dropout > 0.0 => {
            let m = dropout_mask(x.dim(), config.dropout, rng);
            x *= &m;
            Some(m)
        }
        _ => None,
    };
    let csr = build_csr(subgraph, config.edge_dropout, dropout.as_deref_mut());

    let slope = config.leaky_slope;
    let n_layers = params.layers.len();
    let mut layers = Vec::with_capacity(n_layers);
    for (l, layer) in params.layers.iter().enumerate() {
        let dh = layer.heads[0].w.ncols();
        let mut pre = Array2::<f64>::zeros((n, dh * layer.heads.len()));
        let mut heads = Vec::with_capacity(layer.heads.len());
        for (hi, head) in layer.heads.iter().enumerate() {
            let p1 = x.dot(&head.w1);
            let p2 = x.dot(&head.w2);
            let msg = x.dot(&head.w);
            let w3 = head.w3.as_slice().unwrap();
            let att = head.att.as_slice().unwrap();
            let mut alpha = vec![0.0; csr.src.len()];
            for i in 0..n {
                let range = csr.row(i);
                let p1i = p1.row(i);
                let mut max = f64::NEG_INFINITY;
                for k in range.clone() {
                    let (j, s) = (csr.src[k], csr.weight[k]);
                    let p2j = p2.row(j);
                    let mut e = 0.0;
                    for d in 0..dh {
                        e += att[d] * leaky(p1i[d] + p2j[d] + s * w3[d], slope);
                    }
                    alpha[k] = e;
                    max = max.max(e);
                }
                let mut total = 0.0;
                for k in range.clone() {
                    alpha[k] = (alpha[k] - max).exp();
                    total += alpha[k];
                }
                let mut out = pre.slice_mut(s![i, hi * dh..(hi + 1) * dh]);
                for k in range {
                    alpha[k] /= total;
                    out.scaled_add(alpha[k], &msg.row(csr.src[k]));
                }
            }
            heads.push(HeadTrace { p1, p2, msg, alpha });
        }
        if pre.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation { layer: l });
        }
        let last = l + 1 == n_layers;
        let mut next = if last { pre.clone() } else { pre.mapv(elu) };
        let mask = match dropout.as_deref_mut() {
            Some(rng) if !last && config.dropout > 0.0 => {
                let m = dropout_mask(next.dim(), config.dropout, rng);
                next *= &m;
                Some(m)
            }
            _ => None,
        };
        layers.push(LayerTrace {
            input: std::mem::replace(&mut x, next),
            pre,
            heads,
            mask,
        });
    }
    Ok(Forward {
        output: x,
        n_targets: subgraph.n_targets,
        codebook_rows,
        input_mask,
        layers,
        csr,
        leaky_slope: slope,
    })
}

impl Forward {
    /// Output rows of the batch nodes.
    pub fn targets(&self) -> ArrayView2<'_, f64> {
        self.output.slice(s![..self.n_targets, ..])
    }

    /// Attention weights of head `head` in layer `layer`, one row per local
    /// node, self-edge first.
    pub fn attention(&self, layer: usize, head: usize) -> Vec<Vec<f64>> {
        let alpha = &self.layers[layer].heads[head].alpha;
        (0..self.output.nrows())
            .map(|i| alpha[self.csr.row(i)].to_vec())
            .collect()
    }

    /// Smallest distance of any leaky-ReLU or ELU input to its kink at 0.
    pub fn kink_distance(&self, params: &GnnParams) -> f64 {
        let mut min = f64::INFINITY;
        let n_layers = self.layers.len();
        for (l, (trace, layer)) in self.layers.iter().zip(&params.layers).enumerate() {
            if l + 1 < n_layers {
                min = trace.pre.iter().fold(min, |m, v| m.min(v.abs()));
            }
            for (ht, hp) in trace.heads.iter().zip(&layer.heads) {
                for i in 0..self.output.nrows() {
                    for k in self.csr.row(i) {
                        let (j, s) = (self.csr.src[k], self.csr.weight[k]);
                        for d in 0..hp.w3.len() {
                            let z = ht.p1[[i, d]] + ht.p2[[j, d]] + s * hp.w3[d];
                            min = min.min(z.abs());
                        }
                    }
                }
            }
        }
        min
    }

    /// Reverse pass: gradients of all parameters given `d loss / d output`.
    pub fn backward(&self, params: &GnnParams, d_output: &Array2<f64>) -> GnnParams {
        let mut grads = params.zeros_like();
        let slope = self.leaky_slope;
        let n = self.output.nrows();
        let n_layers = self.layers.len();
        let mut d = d_output.clone();
        for l in (0..n_layers).rev() {
            let trace = &self.layers[l];
            let layer = &params.layers[l];
            let dpre = if l + 1 == n_layers {
                d
            } else {
                let mut g = d;
                if let Some(m) = &trace.mask {
                    g *= m;
                }
                g.zip_mut_with(&trace.pre, |g, &p| *g *= elu_grad(p));
                g
            };
            let mut dx = Array2::<f64>::zeros(trace.input.dim());
            for (hi, (ht, hp)) in trace.heads.iter().zip(&layer.heads).enumerate() {
                let dh = hp.w.ncols();
                let w3 = hp.w3.as_slice().unwrap();
                let att = hp.att.as_slice().unwrap();
                let mut dp1 = Array2::<f64>::zeros((n, dh));
                let mut dp2 = Array2::<f64>::zeros((n, dh));
                let mut dmsg = Array2::<f64>::zeros((n, dh));
                let gh = &mut grads.layers[l].heads[hi];
                let mut datt = vec![0.0; dh];
                let mut dw3 = vec![0.0; dh];
                let mut dalpha = Vec::new();
                for i in 0..n {
                    let dout = dpre.slice(s![i, hi * dh..(hi + 1) * dh]);
                    if dout.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let range = self.csr.row(i);
                    dalpha.clear();
                    let mut weighted = 0.0;
                    for k in range.clone() {
                        let da = dout.dot(&ht.msg.row(self.csr.src[k]));
                        weighted += ht.alpha[k] * da;
                        dalpha.push(da);
                    }
                    for (k, &da) in range.zip(&dalpha) {
                        let (j, s) = (self.csr.src[k], self.csr.weight[k]);
                        let a = ht.alpha[k];
                        dmsg.row_mut(j).scaled_add(a, &dout);
                        let de = a * (da - weighted);
                        if de == 0.0 {
                            continue;
                        }
                        for dd in 0..dh {
                            let z = ht.p1[[i, dd]] + ht.p2[[j, dd]] + s * w3[dd];
                            datt[dd] += de * leaky(z, slope);
                            let dz = de * att[dd] * leaky_grad(z, slope);
                            dp1[[i, dd]] += dz;
                            dp2[[j, dd]] += dz;
                            dw3[dd] += s * dz;
                        }
                    }
                }
                let xt = trace.input.t();
                gh.w1 = xt.dot(&dp1);
                gh.w2 = xt.dot(&dp2);
                gh.w = xt.dot(&dmsg);
                gh.w3 = Array1::from(dw3);
                gh.att = Array1::from(datt);
                dx += &dp1.dot(&hp.w1.t());
                dx += &dp2.dot(&hp.w2.t());
                dx += &dmsg.dot(&hp.w.t());
            }
            d = dx;
        }
        if let Some(m) = &self.input_mask {
            d *= m;
        }
        grads.proj = self.codebook_rows.t().dot(&d);
        grads
    }
}

/// Forward, objective and full parameter gradient for one batch.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad(
    params: &GnnParams,
    config: &GnnConfig,
    subgraph: &SampledSubgraph,
    codebook: &Array2<f32>,
    batch_edges: &[(usize, usize, f64)],
    tau: f64,
    beta: f64,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(Objective, GnnParams)> {
    let fwd = forward(params, config, subgraph, codebook, dropout)?;
    let obj = objective(fwd.targets(), batch_edges, tau, beta)?;
    let mut d_output = Array2::<f64>::zeros(fwd.output.dim());
    d_output
        .slice_mut(s![..subgraph.n_targets, ..])
        .assign(&obj.grad);
    let grads = fwd.backward(params, &d_output);
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    Ok((obj, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::params::{HeadParams, LayerParams};
    use crate::gnn::sample::full_subgraph;
    use crate::gnn::init_params;
    use crate::rng;
    use ndarray::array;

    fn scalar_head(w: f64, w1: f64, w2: f64, w3: f64, a: f64) -> HeadParams {
        HeadParams {
            w: array![[w]],
            w1: array![[w1]],
            w2: array![[w2]],
            w3: Array1::from(vec![w3]),
            att: Array1::from(vec![a]),
        }
    }

    fn scalar_config(layers: usize) -> GnnConfig {
        GnnConfig {
            d_codebook: 1,
            d_hidden: 1,
            d_out: 1,
            n_heads: 1,
            neighbor_sizes: vec![48; layers],
            ..GnnConfig::default()
        }
    }

    #[test]
    fn two_node_hand_evaluation() {
        // One hidden layer (ELU) and a linear output layer.
        let params = GnnParams {
            proj: array![[1.0]],
            layers: vec![
                LayerParams {
                    heads: vec![scalar_head(1.0, 0.5, 0.5, 1.0, 1.0)],
                },
                LayerParams {
                    heads: vec![scalar_head(1.0, 0.5, 0.5, 1.0, 1.0)],
                },
            ],
        };
        let adj = vec![vec![(1, 1.0)], vec![(0, 1.0)]];
        let sg = full_subgraph(&adj);
        let cb = array![[1.0f32], [1.0]];
        let fwd = forward(&params, &scalar_config(2), &sg, &cb, None).unwrap();
        let att = fwd.attention(0, 0);
        assert_eq!(att[0], vec![0.5, 0.5]);
        // Layer 1: ELU(0.5 * 1 + 0.5 * 1) = 1; layer 2 is linear: 1.
        assert!((fwd.layers[0].pre[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((fwd.output[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_attends_to_itself() {
        let params = GnnParams {
            proj: array![[2.0]],
            layers: vec![
                LayerParams {
                    heads: vec![scalar_head(-1.5, 0.3, 0.7, 0.2, 1.0)],
                },
                LayerParams {
                    heads: vec![scalar_head(0.5, 0.3, 0.7, 0.2, 1.0)],
                },
            ],
        };
        let sg = full_subgraph(&[Vec::new()]);
        let cb = array![[1.0f32]];
        let fwd = forward(&params, &scalar_config(2), &sg, &cb, None).unwrap();
        assert_eq!(fwd.attention(0, 0), vec![vec![1.0]]);
        // h0 = 2; layer 1 = ELU(-3); layer 2 = 0.5 * ELU(-3).
        let expect = 0.5 * (-3.0f64).exp_m1();
        assert!((fwd.output[[0, 0]] - expect).abs() < 1e-15);
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> Vec<Vec<(u32, f32)>> {
        let mut r = rng::stream(seed, "test/graph");
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if r.random::<f64>() < p {
                    let w = r.random_range(0.05f32..1.0);
                    adj[i].push((j as u32, w));
                    adj[j].push((i as u32, w));
                }
            }
        }
        adj
    }

    fn small_config() -> GnnConfig {
        GnnConfig {
            d_codebook: 3,
            d_hidden: 4,
            d_out: 4,
            n_heads: 2,
            ..GnnConfig::default()
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = small_config();
        let params = init_params(&cfg, 5).unwrap();
        let adj = random_graph(25, 0.2, 1);
        let cb = Array2::from_shape_fn((25, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f32 / 5.0 - 1.0);
        let fwd = forward(&params, &cfg, &full_subgraph(&adj), &cb, None).unwrap();
        for l in 0..2 {
            for h in 0..2 {
                for row in fwd.attention(l, h) {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn deterministic_without_dropout_and_seeded_with_it() {
        let cfg = small_config();
        let params = init_params(&cfg, 5).unwrap();
        let adj = random_graph(20, 0.3, 2);
        let cb = Array2::from_shape_fn((20, 3), |(i, j)| ((i + 2 * j) % 5) as f32 - 2.0);
        let sg = full_subgraph(&adj);
        let a = forward(&params, &cfg, &sg, &cb, None).unwrap().output;
        let b = forward(&params, &cfg, &sg, &cb, None).unwrap().output;
        assert_eq!(a, b);
        let c = forward(&params, &cfg, &sg, &cb, Some(&mut rng::stream(1, "d"))).unwrap().output;
        let d = forward(&params, &cfg, &sg, &cb, Some(&mut rng::stream(1, "d"))).unwrap().output;
        assert_eq!(c, d);
        assert_ne!(a, c);
    }

    #[test]
    fn gradient_matches_finite_differences_with_dropout_masks() {
        // Dropout masks are drawn from a fixed stream, so re-running the
        // same stream reproduces them and the function stays differentiable.
        let cfg = small_config();
        let params = init_params(&cfg, 11).unwrap();
        let adj = random_graph(12, 0.35, 3);
        let cb = Array2::from_shape_fn((12, 3), |(i, j)| ((i * 5 + j * 7) % 13) as f32 / 6.0 - 1.0);
        let sg = full_subgraph(&adj);
        let edges = sg.batch_edges(&adj);
        let run = |p: &GnnParams| {
            loss_and_grad(p, &cfg, &sg, &cb, &edges, 0.5, 0.9, Some(&mut rng::stream(4, "d")))
        };
        let (_, grads) = run(&params).unwrap();
        let g = grads.flatten();
        let base = params.flatten();
        let mut p = params.clone();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for idx in 0..base.len() {
            let mut plus = base.clone();
            plus[idx] += h;
            p.assign(&plus);
            let lp = run(&p).unwrap().0.total;
            let mut minus = base.clone();
            minus[idx] -= h;
            p.assign(&minus);
            let lm = run(&p).unwrap().0.total;
            let num = (lp - lm) / (2.0 * h);
            worst = worst.max((num - g[idx]).abs() / (1.0 + num.abs()));
        }
        assert!(worst < 1e-5, "worst error {worst}");
    }

    #[test]
    fn zero_codebook_column_kills_its_projection_row() {
        let cfg = small_config();
        let params = init_params(&cfg, 2).unwrap();
        let adj = random_graph(10, 0.4, 4);
        let cb = Array2::from_shape_fn((10, 3), |(i, j)| if j == 1 { 0.0 } else { (i as f32 - 4.5) / 3.0 });
        let sg = full_subgraph(&adj);
        let edges = sg.batch_edges(&adj);
        let (_, grads) = loss_and_grad(&params, &cfg, &sg, &cb, &edges, 0.1, 0.9, None).unwrap();
        assert!(grads.proj.row(1).iter().all(|&g| g == 0.0));
        assert!(grads.proj.row(0).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn out_of_range_node_is_rejected() {
        let cfg = small_config();
        let params = init_params(&cfg, 2).unwrap();
        let sg = full_subgraph(&vec![Vec::new(); 4]);
        let cb = Array2::<f32>::zeros((3, 3));
        assert!(matches!(
            forward(&params, &cfg, &sg, &cb, None),
            Err(Error::OutOfRangeToken { .. })
        ));
    }
}
