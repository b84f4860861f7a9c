use super::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
    /// Global gradient-norm cap; `0` disables clipping.
    pub max_grad_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4, max_grad_norm: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<S> {
    pub cfg: AdamConfig,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub step: u64,
    /// Updates refused because of non-finite gradients.
    pub skipped: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdamOutcome {
    Applied { grad_norm: f64, clipped: bool },
    Skipped,
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<S: Scalar>(grads: &mut [Tensor<S>], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sum_squares).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = S::of_f64(max_norm / norm);
        for g in grads.iter_mut() {
            g.data.iter_mut().for_each(|v| *v = *v * s);
        }
    }
    norm
}

impl<S: Scalar> AdamState<S> {
    pub fn new(shapes: &[Vec<usize>], cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step: 0,
            skipped: 0,
        }
    }

    /// Clip, decay, and apply one bias-corrected update.
    pub fn update(&mut self, params: &mut [Tensor<S>], grads: &mut [Tensor<S>]) -> AdamOutcome {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len(), "optimizer was built for a different parameter list");
        if !grads.iter().all(Tensor::is_finite) {
            self.skipped += 1;
            return AdamOutcome::Skipped;
        }
        let norm = clip_global_norm(grads, self.cfg.max_grad_norm);
        let clipped = self.cfg.max_grad_norm > 0.0 && norm > self.cfg.max_grad_norm;
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads.iter()).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.shape, g.shape);
            for i in 0..p.data.len() {
                let gi = g.data[i].as_f64();
                let mi = c.beta1 * m.data[i].as_f64() + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v.data[i].as_f64() + (1.0 - c.beta2) * gi * gi;
                m.data[i] = S::of_f64(mi);
                v.data[i] = S::of_f64(vi);
                let mut pi = p.data[i].as_f64();
                pi -= c.lr * c.weight_decay * pi;
                pi -= c.lr * (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
                p.data[i] = S::of_f64(pi);
            }
        }
        AdamOutcome::Applied { grad_norm: norm, clipped }
    }
}
