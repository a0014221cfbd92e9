//! AdamW with global-norm clipping, warmup + cosine learning rate, and the
//! similarity-driven temperature schedule.

use std::f64::consts::PI;

use super::params::GnnParams;
use super::GnnConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Optimizer updates applied so far.
    pub step: usize,
    pub total_steps: usize,
    pub first_moment: GnnParams,
    pub second_moment: GnnParams,
    pub tau: f64,
    pub best_loss: f64,
    pub epochs_since_best: usize,
}

impl TrainState {
    pub fn new(params: &GnnParams, config: &GnnConfig, total_steps: usize) -> Self {
        Self {
            step: 0,
            total_steps,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            tau: config.tau0,
            best_loss: f64::INFINITY,
            epochs_since_best: 0,
        }
    }
}

/// Learning rate after `step` completed updates out of `total`: linear
/// warmup from 0 over `warmup_fraction * total` steps, then cosine decay to 0.
pub fn lr_at(step: usize, total: usize, peak: f64, warmup_fraction: f64) -> f64 {
    let t = step as f64;
    let total = total.max(1) as f64;
    let warmup = warmup_fraction * total;
    if t < warmup {
        return peak * t / warmup;
    }
    let span = (total - warmup).max(f64::MIN_POSITIVE);
    let progress = ((t - warmup) / span).min(1.0);
    peak * 0.5 * (1.0 + (PI * progress).cos())
}

/// Rescale `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the factor applied.
pub fn clip_global_norm(grads: &mut GnnParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.for_each_tensor_mut(|t| t.iter_mut().for_each(|g| *g *= scale));
        scale
    } else {
        1.0
    }
}

/// One clipped AdamW update with decoupled weight decay. Returns the
/// learning rate used.
pub fn optimizer_step(
    state: &mut TrainState,
    params: &mut GnnParams,
    grads: &mut GnnParams,
    config: &GnnConfig,
) -> f64 {
    clip_global_norm(grads, config.max_grad_norm);
    let lr = lr_at(state.step, state.total_steps, config.lr, config.warmup_fraction);
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps, wd) = (
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
        config.weight_decay,
    );
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);

    let mut g_flat = Vec::new();
    grads.for_each_tensor(|g| g_flat.extend_from_slice(g));
    let mut m_flat = state.first_moment.flatten();
    let mut v_flat = state.second_moment.flatten();
    let mut p_flat = params.flatten();
    for k in 0..p_flat.len() {
        let g = g_flat[k];
        m_flat[k] = b1 * m_flat[k] + (1.0 - b1) * g;
        v_flat[k] = b2 * v_flat[k] + (1.0 - b2) * g * g;
        let m_hat = m_flat[k] / bias1;
        let v_hat = v_flat[k] / bias2;
        p_flat[k] -= lr * wd * p_flat[k];
        p_flat[k] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    state.first_moment.assign(&m_flat);
    state.second_moment.assign(&v_flat);
    params.assign(&p_flat);
    lr
}

/// Temperature for the next epoch from the gap between mean positive and
/// mean negative similarity.
pub fn adjust_temperature(tau: f64, mean_pos_sim: f64, mean_neg_sim: f64, config: &GnnConfig) -> f64 {
    let gap = mean_pos_sim - mean_neg_sim;
    if gap < 0.3 {
        config.tau_min.max(tau * 0.95)
    } else if gap > 0.5 {
        config.tau_max.min(tau * 1.1)
    } else {
        tau
    }
}
