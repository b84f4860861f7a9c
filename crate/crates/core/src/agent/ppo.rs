use super::network::{ObsBatch, PolicyNetwork, ACTION_DIM};
use crate::nn::{BatchStats, Mode, ParamSet, Scalar, Tape, Tensor};
use crate::physics::{Action, ActionLimits};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-density of a diagonal Gaussian.
pub fn log_prob(a: &[f64; ACTION_DIM], mean: &[f64; ACTION_DIM], log_std: &[f64; ACTION_DIM]) -> f64 {
    (0..ACTION_DIM)
        .map(|d| {
            let z = (a[d] - mean[d]) * (-log_std[d]).exp();
            -0.5 * z * z - log_std[d] - 0.5 * LN_2PI
        })
        .sum()
}

/// `Σ_d ½·ln(2πe·σ_d²)`.
pub fn entropy(log_std: &[f64; ACTION_DIM]) -> f64 {
    log_std.iter().map(|l| 0.5 * (LN_2PI + 1.0) + l).sum()
}

/// Draws an unclamped sample and returns it with its log-probability.
pub fn sample(mean: &[f64; ACTION_DIM], log_std: &[f64; ACTION_DIM], rng: &mut impl Rng) -> ([f64; ACTION_DIM], f64) {
    let mut a = [0.0; ACTION_DIM];
    for d in 0..ACTION_DIM {
        let z: f64 = rng.sample(StandardNormal);
        a[d] = mean[d] + log_std[d].exp() * z;
    }
    (a, log_prob(&a, mean, log_std))
}

/// Raw policy output to a robot command: forward speed is the first output
/// clamped to the speed range, yaw rate the second clamped to [−1, 1] and
/// scaled by the yaw-rate limit.
pub fn to_action(a: &[f64; ACTION_DIM], limits: &ActionLimits) -> Action {
    Action::new(a[0].clamp(limits.v_min, limits.v_max), limits.omega_max * a[1].clamp(-1.0, 1.0))
}

/// n-step advantages for one environment's rollout of length `T`.
///
/// Each step looks ahead to the earlier of its episode's end or the horizon;
/// `bootstrap` is `V(s_T)` and is only used when the last step is not
/// terminal. Returns `(advantages, returns)` with `R_t = A_t + V(s_t)`.
pub fn compute_advantages(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n);
    let mut adv = vec![0.0; n];
    let mut ret = vec![0.0; n];
    let mut next = bootstrap;
    for t in (0..n).rev() {
        let g = rewards[t] + if dones[t] { 0.0 } else { gamma * next };
        ret[t] = g;
        adv[t] = g - values[t];
        next = g;
    }
    (adv, ret)
}

/// Rescales to zero mean and unit standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let s = var.sqrt().max(1e-8);
    xs.iter_mut().for_each(|x| *x = (*x - m) / s);
}

/// `KL(old ‖ new)` between diagonal Gaussians.
pub fn gaussian_kl(
    old_mean: &[f64; ACTION_DIM],
    old_log_std: &[f64; ACTION_DIM],
    mean: &[f64; ACTION_DIM],
    log_std: &[f64; ACTION_DIM],
) -> f64 {
    (0..ACTION_DIM)
        .map(|d| {
            let r = (2.0 * (old_log_std[d] - log_std[d])).exp();
            let z = (old_mean[d] - mean[d]) * (-log_std[d]).exp();
            log_std[d] - old_log_std[d] + 0.5 * (r + z * z) - 0.5
        })
        .sum()
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, eps: f64, adv: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Derivative of [`clipped_surrogate`] with respect to the ratio. Where
/// both branches coincide the unclipped slope is used.
pub fn clipped_surrogate_slope(ratio: f64, eps: f64, adv: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    if ratio * adv <= clipped * adv {
        adv
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { clip_eps: 0.2, entropy_coef: 0.01, value_coef: 0.5 }
    }
}

/// One minibatch of stored transitions.
#[derive(Clone, Debug)]
pub struct LossBatch<S> {
    pub obs: ObsBatch<S>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss from network outputs, with gradients with respect to the means,
/// values and log standard deviations.
pub struct HeadLoss {
    pub stats: LossStats,
    pub d_mean: Vec<[f64; ACTION_DIM]>,
    pub d_value: Vec<f64>,
    pub d_log_std: [f64; ACTION_DIM],
}

/// `−L_clip − c_H·H + c_V·mean((V − R)²)` and its analytic gradient.
#[allow(clippy::too_many_arguments)]
pub fn head_loss(
    mean: &[[f64; ACTION_DIM]],
    value: &[f64],
    log_std: &[f64; ACTION_DIM],
    actions: &[[f64; ACTION_DIM]],
    old_log_prob: &[f64],
    advantages: &[f64],
    returns: &[f64],
    cfg: &LossConfig,
) -> HeadLoss {
    let n = mean.len();
    let nf = n as f64;
    let inv_var: [f64; ACTION_DIM] = std::array::from_fn(|d| (-2.0 * log_std[d]).exp());
    let mut surr = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let mut v_loss = 0.0;
    let mut d_mean = vec![[0.0; ACTION_DIM]; n];
    let mut d_value = vec![0.0; n];
    let mut d_log_std = [0.0; ACTION_DIM];
    for i in 0..n {
        let lp = log_prob(&actions[i], &mean[i], log_std);
        let ratio = (lp - old_log_prob[i]).exp();
        surr += clipped_surrogate(ratio, cfg.clip_eps, advantages[i]);
        kl += old_log_prob[i] - lp;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            clipped += 1;
        }
        // d(−surr/N)/dlogp = −slope·r/N
        let k = -clipped_surrogate_slope(ratio, cfg.clip_eps, advantages[i]) * ratio / nf;
        for d in 0..ACTION_DIM {
            let diff = actions[i][d] - mean[i][d];
            d_mean[i][d] = k * diff * inv_var[d];
            d_log_std[d] += k * (diff * diff * inv_var[d] - 1.0);
        }
        let e = value[i] - returns[i];
        v_loss += e * e;
        d_value[i] = cfg.value_coef * 2.0 * e / nf;
    }
    for g in &mut d_log_std {
        *g -= cfg.entropy_coef;
    }
    let policy = -surr / nf;
    let value_loss = v_loss / nf;
    let ent = entropy(log_std);
    let stats = LossStats {
        total: policy - cfg.entropy_coef * ent + cfg.value_coef * value_loss,
        policy,
        value: value_loss,
        entropy: ent,
        approx_kl: kl / nf,
        clip_fraction: clipped as f64 / nf,
    };
    HeadLoss { stats, d_mean, d_value, d_log_std }
}

/// Loss over `batch` and gradients for every network parameter. The
/// network is evaluated with parameters `ps`; the value error is measured in
/// the network's standardized value units.
pub fn loss_and_grads<S: Scalar>(
    net: &PolicyNetwork<S>,
    ps: &ParamSet<S>,
    batch: &LossBatch<S>,
    cfg: &LossConfig,
    mode: Mode,
) -> (LossStats, Vec<Tensor<S>>, [Option<BatchStats<S>>; 2]) {
    let mut tape = Tape::new();
    let out = net.forward_with(&mut tape, ps, &batch.obs, mode);
    let mean: Vec<[f64; ACTION_DIM]> =
        tape.value(out.mean).data.chunks_exact(ACTION_DIM).map(|r| [r[0].as_f64(), r[1].as_f64()]).collect();
    let value: Vec<f64> = tape.value(out.value).data.iter().map(|v| v.as_f64()).collect();
    let ls = &ps.tensors[net.layers.log_std].data;
    let log_std = [ls[0].as_f64(), ls[1].as_f64()];
    let targets: Vec<f64> = batch.returns.iter().map(|&r| net.value_norm.normalize(r)).collect();
    let h = head_loss(&mean, &value, &log_std, &batch.actions, &batch.old_log_prob, &batch.advantages, &targets, cfg);
    let n = mean.len();
    let seed_mean = Tensor::from_vec(&[n, ACTION_DIM], h.d_mean.iter().flatten().map(|&v| S::of_f64(v)).collect());
    let seed_value = Tensor::from_vec(&[n, 1], h.d_value.iter().map(|&v| S::of_f64(v)).collect());
    let mut grads = tape.backward(&[(out.mean, seed_mean), (out.value, seed_value)], &ps.shapes());
    for d in 0..ACTION_DIM {
        grads[net.layers.log_std].data[d] = S::of_f64(h.d_log_std[d]);
    }
    (h.stats, grads, out.bn_stats)
}

/// Band rule around the KL target: shrink ×1/1.5 above twice the target,
/// grow ×1.5 below half of it, then clamp to `[min, max]`.
pub fn adaptive_lr(lr: f64, kl: f64, target: f64, min: f64, max: f64) -> f64 {
    let next = if kl > 2.0 * target {
        lr / 1.5
    } else if kl < 0.5 * target {
        lr * 1.5
    } else {
        lr
    };
    next.clamp(min, max)
}

pub const LR_MIN: f64 = 1e-6;
pub const LR_MAX: f64 = 1e-2;
