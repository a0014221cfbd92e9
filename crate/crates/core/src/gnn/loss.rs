//! Training objectives on batch embeddings.
//!
//! Both losses are functions of pairwise cosine similarities. Each returns
//! its gradient with respect to the raw (unnormalised) embeddings.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Value and embedding gradient of one loss term.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Array2<f64>,
}

/// Combined objective plus the similarity statistics used for temperature
/// control.
#[derive(Debug, Clone)]
pub struct Objective {
    pub total: f64,
    pub contrast: f64,
    pub pps: f64,
    pub grad: Array2<f64>,
    pub mean_pos_sim: f64,
    pub mean_neg_sim: f64,
}

/// Unit rows and the original norms; zero rows stay zero.
fn normalize(h: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<f64>) {
    let mut u = h.to_owned();
    let norms: Vec<f64> = h.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    for (mut row, &n) in u.rows_mut().into_iter().zip(&norms) {
        if n > 0.0 {
            row /= n;
        }
    }
    (u, norms)
}

/// Chain rule through `u = h / ||h||`.
fn unnormalize_grad(u: &Array2<f64>, norms: &[f64], du: Array2<f64>) -> Array2<f64> {
    let mut dh = du;
    for ((mut g, ur), &n) in dh.rows_mut().into_iter().zip(u.rows()).zip(norms) {
        if n > 0.0 {
            let proj = g.dot(&ur);
            g.scaled_add(-proj, &ur);
            g /= n;
        } else {
            g.fill(0.0);
        }
    }
    dh
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Weighted InfoNCE over a batch:
/// `-log( sum_edges s * exp(cos/tau) / sum_{m != u} exp(cos/tau) )`.
///
/// `edges` are unordered local pairs `(i, j, s)`, each listed once.
pub fn contrastive_loss(
    h: ArrayView2<'_, f64>,
    edges: &[(usize, usize, f64)],
    tau: f64,
) -> Result<LossValue> {
    let (u, norms) = normalize(h);
    let sims = u.dot(&u.t());
    let (value, dsim) = contrastive_from_sims(&sims, edges, tau)?;
    let du = dsim.dot(&u) + dsim.t().dot(&u);
    Ok(LossValue {
        value,
        grad: unnormalize_grad(&u, &norms, du),
    })
}

/// Loss and gradient with respect to the similarity matrix entries.
fn contrastive_from_sims(
    sims: &Array2<f64>,
    edges: &[(usize, usize, f64)],
    tau: f64,
) -> Result<(f64, Array2<f64>)> {
    let positives: Vec<(usize, usize, f64)> =
        edges.iter().copied().filter(|&(_, _, s)| s > 0.0).collect();
    if positives.is_empty() {
        return Err(Error::NoPositivePairs);
    }
    let n = sims.nrows();
    let num_terms = positives
        .iter()
        .map(|&(i, j, s)| s.ln() + sims[[i, j]] / tau);
    let lse_num = log_sum_exp(num_terms.clone());
    let off_diag = (0..n).flat_map(|m| (0..n).filter(move |&k| k != m).map(move |k| (m, k)));
    let lse_den = log_sum_exp(off_diag.clone().map(|(m, k)| sims[[m, k]] / tau));

    let mut dsim = Array2::<f64>::zeros((n, n));
    for (m, k) in off_diag {
        dsim[[m, k]] = (sims[[m, k]] / tau - lse_den).exp() / tau;
    }
    for (&(i, j, _), t) in positives.iter().zip(num_terms) {
        dsim[[i, j]] -= (t - lse_num).exp() / tau;
    }
    Ok((lse_den - lse_num, dsim))
}

/// Hinge pulling each connected pair above `beta * s`:
/// `sum s * max(0, beta*s - cos) / #violations`, zero without violations.
pub fn pps_loss(h: ArrayView2<'_, f64>, edges: &[(usize, usize, f64)], beta: f64) -> LossValue {
    let (u, norms) = normalize(h);
    let mut du = Array2::<f64>::zeros(h.raw_dim());
    let (value, coeffs) = pps_from_edges(&u, edges, beta);
    for ((i, j, _), c) in edges.iter().zip(coeffs) {
        if c != 0.0 {
            let (ui, uj) = (u.row(*i).to_owned(), u.row(*j).to_owned());
            du.row_mut(*i).scaled_add(c, &uj);
            du.row_mut(*j).scaled_add(c, &ui);
        }
    }
    LossValue {
        value,
        grad: unnormalize_grad(&u, &norms, du),
    }
}

/// Loss and per-edge `d loss / d cos`.
fn pps_from_edges(u: &Array2<f64>, edges: &[(usize, usize, f64)], beta: f64) -> (f64, Vec<f64>) {
    let sims: Vec<f64> = edges
        .iter()
        .map(|&(i, j, _)| u.row(i).dot(&u.row(j)))
        .collect();
    let violating: Vec<bool> = edges
        .iter()
        .zip(&sims)
        .map(|(&(_, _, s), &c)| beta * s > c)
        .collect();
    let n_viol = violating.iter().filter(|&&v| v).count();
    if n_viol == 0 {
        return (0.0, vec![0.0; edges.len()]);
    }
    let n = n_viol as f64;
    let mut value = 0.0;
    let mut coeffs = vec![0.0; edges.len()];
    for (k, (&(_, _, s), &c)) in edges.iter().zip(&sims).enumerate() {
        if violating[k] {
            value += s * (beta * s - c);
            coeffs[k] = -s / n;
        }
    }
    (value / n, coeffs)
}

/// `L_contrast + L_pps` with one shared normalisation pass.
pub fn objective(
    h: ArrayView2<'_, f64>,
    edges: &[(usize, usize, f64)],
    tau: f64,
    beta: f64,
) -> Result<Objective> {
    let (u, norms) = normalize(h);
    let sims = u.dot(&u.t());
    let (contrast, mut dsim) = contrastive_from_sims(&sims, edges, tau)?;
    let (pps, coeffs) = pps_from_edges(&u, edges, beta);
    for (&(i, j, _), c) in edges.iter().zip(coeffs) {
        dsim[[i, j]] += c;
    }
    let du = dsim.dot(&u) + dsim.t().dot(&u);
    let grad = unnormalize_grad(&u, &norms, du);

    let n = sims.nrows();
    let mut is_edge = Array2::<bool>::from_elem((n, n), false);
    let mut pos_sum = 0.0;
    for &(i, j, _) in edges {
        is_edge[[i, j]] = true;
        is_edge[[j, i]] = true;
        pos_sum += sims[[i, j]];
    }
    let (mut neg_sum, mut neg_n) = (0.0, 0usize);
    for ((m, k), &c) in sims.indexed_iter() {
        if m != k && !is_edge[[m, k]] {
            neg_sum += c;
            neg_n += 1;
        }
    }
    Ok(Objective {
        total: contrast + pps,
        contrast,
        pps,
        grad,
        mean_pos_sim: pos_sum / edges.len() as f64,
        mean_neg_sim: if neg_n > 0 { neg_sum / neg_n as f64 } else { 0.0 },
    })
}

/// Mean cosine similarity over the given pairs.
pub fn mean_cosine(h: ArrayView2<'_, f64>, pairs: &[(usize, usize)]) -> f64 {
    let (u, _) = normalize(h);
    let total: f64 = pairs.iter().map(|&(i, j)| u.row(i).dot(&u.row(j))).sum();
    total / pairs.len().max(1) as f64
}
