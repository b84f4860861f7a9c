//! Two-stream actor-critic network.
//!
//! ```text
//! vector 242 ─ linear 128 ─ relu ─ LN ───────────────────────────────┐
//! grid 48×48 ─ conv 16@8×8/4 ─ relu ─ BN ─ conv 32@4×4/2 ─ relu ─ BN   ├ concat 256 ─ 128 ─ 64 ┬ value
//!              ─ flatten 512 ─ linear 128 ─ relu ─ LN ────────────────┘                        └ mean
//! ```

use crate::env::{Observation, GRID_CELLS, GRID_SIZE, VECTOR_LEN};
use crate::nn::{
    BatchNorm, BatchStats, Conv2d, LayerNorm, Linear, Mode, ParamSet, RunningStats, Scalar, Tape, Tensor, Var,
    BN_MOMENTUM, RELU_GAIN,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const ACTION_DIM: usize = 2;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
pub const HEAD_SCALE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layers {
    pub vec_fc: Linear,
    pub vec_ln: LayerNorm,
    pub conv1: Conv2d,
    pub bn1: BatchNorm,
    pub conv2: Conv2d,
    pub bn2: BatchNorm,
    pub grid_fc: Linear,
    pub grid_ln: LayerNorm,
    pub trunk1: Linear,
    pub trunk1_ln: LayerNorm,
    pub trunk2: Linear,
    pub trunk2_ln: LayerNorm,
    pub value: Linear,
    pub mean: Linear,
    pub log_std: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetwork<S> {
    pub layers: Layers,
    pub params: ParamSet<S>,
    /// Running statistics of the two conv batch norms.
    pub bn: [RunningStats<S>; 2],
    pub value_norm: ValueNormalizer,
}

/// Running mean and variance of value targets. The value head predicts
/// targets in standardized units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueNormalizer {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for ValueNormalizer {
    fn default() -> Self {
        Self { mean: 0.0, var: 1.0, count: 0.0 }
    }
}

impl ValueNormalizer {
    pub fn std(&self) -> f64 {
        self.var.sqrt().max(1e-4)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.std() + self.mean
    }

    /// Merges the moments of `xs` into the running estimate.
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        if self.count == 0.0 {
            (self.mean, self.var, self.count) = (m, v, n);
            return;
        }
        let total = self.count + n;
        let delta = m - self.mean;
        self.mean += delta * n / total;
        self.var = (self.var * self.count + v * n + delta * delta * self.count * n / total) / total;
        self.count = total;
    }
}

/// Handles to the outputs of one forward pass.
pub struct ForwardVars<S> {
    /// `B×2` action means.
    pub mean: Var,
    /// `B×1` value estimates in standardized units.
    pub value: Var,
    /// Batch statistics of the two batch norms (training mode only).
    pub bn_stats: [Option<BatchStats<S>>; 2],
    /// True when evaluation mode fell back to identity normalization.
    pub bn_fallback: bool,
}

/// Batched network inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsBatch<S> {
    /// `B×242`.
    pub vector: Tensor<S>,
    /// `B×48×48×1`.
    pub grid: Tensor<S>,
}

impl<S: Scalar> ObsBatch<S> {
    pub fn from_observations<'a>(obs: impl ExactSizeIterator<Item = &'a Observation>) -> Self {
        let b = obs.len();
        let mut vector = Vec::with_capacity(b * VECTOR_LEN);
        let mut grid = Vec::with_capacity(b * GRID_CELLS);
        for o in obs {
            assert_eq!(o.vector.len(), VECTOR_LEN, "observation vector length");
            assert_eq!(o.grid.len(), GRID_CELLS, "observation grid size");
            vector.extend(o.vector.iter().map(|&v| S::of_f64(v as f64)));
            grid.extend(o.grid.iter().map(|&v| S::of_f64(v as f64)));
        }
        Self {
            vector: Tensor::from_vec(&[b, VECTOR_LEN], vector),
            grid: Tensor::from_vec(&[b, GRID_SIZE, GRID_SIZE, 1], grid),
        }
    }

    pub fn len(&self) -> usize {
        self.vector.shape[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-row outputs of an inference pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<[f64; ACTION_DIM]>,
    pub value: Vec<f64>,
    pub log_std: [f64; ACTION_DIM],
    pub bn_fallback: bool,
}

impl<S: Scalar> PolicyNetwork<S> {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut ps = ParamSet::new();
        let vec_fc = Linear::new(&mut ps, "vector.fc", VECTOR_LEN, 128, RELU_GAIN, rng);
        let vec_ln = LayerNorm::new(&mut ps, "vector.ln", 128);
        let conv1 = Conv2d::new(&mut ps, "grid.conv1", 1, 16, 8, 4, RELU_GAIN, rng);
        let bn1 = BatchNorm::new(&mut ps, "grid.bn1", 16);
        let conv2 = Conv2d::new(&mut ps, "grid.conv2", 16, 32, 4, 2, RELU_GAIN, rng);
        let bn2 = BatchNorm::new(&mut ps, "grid.bn2", 32);
        let grid_fc = Linear::new(&mut ps, "grid.fc", 512, 128, RELU_GAIN, rng);
        let grid_ln = LayerNorm::new(&mut ps, "grid.ln", 128);
        let trunk1 = Linear::new(&mut ps, "trunk.fc1", 256, 128, RELU_GAIN, rng);
        let trunk1_ln = LayerNorm::new(&mut ps, "trunk.ln1", 128);
        let trunk2 = Linear::new(&mut ps, "trunk.fc2", 128, 64, RELU_GAIN, rng);
        let trunk2_ln = LayerNorm::new(&mut ps, "trunk.ln2", 64);
        let value = Linear::new(&mut ps, "head.value", 64, 1, HEAD_SCALE, rng);
        let mean = Linear::new(&mut ps, "head.mean", 64, ACTION_DIM, HEAD_SCALE, rng);
        let log_std = ps.add("head.log_std", Tensor::zeros(&[ACTION_DIM]));
        let layers = Layers {
            vec_fc,
            vec_ln,
            conv1,
            bn1,
            conv2,
            bn2,
            grid_fc,
            grid_ln,
            trunk1,
            trunk1_ln,
            trunk2,
            trunk2_ln,
            value,
            mean,
            log_std,
        };
        Self { layers, params: ps, bn: [RunningStats::new(16), RunningStats::new(32)], value_norm: ValueNormalizer::default() }
    }

    pub fn cast<T: Scalar>(&self) -> PolicyNetwork<T> {
        let cast_stats = |r: &RunningStats<S>| RunningStats {
            mean: r.mean.iter().map(|v| T::of_f64(v.as_f64())).collect(),
            var: r.var.iter().map(|v| T::of_f64(v.as_f64())).collect(),
            initialized: r.initialized,
        };
        PolicyNetwork {
            layers: self.layers,
            params: self.params.cast(),
            bn: [cast_stats(&self.bn[0]), cast_stats(&self.bn[1])],
            value_norm: self.value_norm,
        }
    }

    pub fn log_std(&self) -> [f64; ACTION_DIM] {
        let t = &self.params.tensors[self.layers.log_std];
        [t.data[0].as_f64(), t.data[1].as_f64()]
    }

    pub fn clamp_log_std(&mut self) {
        for v in &mut self.params.tensors[self.layers.log_std].data {
            *v = S::of_f64(v.as_f64().clamp(LOG_STD_MIN, LOG_STD_MAX));
        }
    }

    /// Records the forward pass on `tape` using the parameters in `ps`
    /// (normally `self.params`; gradient checks pass perturbed copies).
    pub fn forward_with(&self, tape: &mut Tape<S>, ps: &ParamSet<S>, batch: &ObsBatch<S>, mode: Mode) -> ForwardVars<S> {
        let l = &self.layers;
        let v = tape.input(batch.vector.clone());
        let v = l.vec_fc.forward(tape, ps, v);
        let v = tape.relu(v);
        let v = l.vec_ln.forward(tape, ps, v);

        let g = tape.input(batch.grid.clone());
        let g = l.conv1.forward(tape, ps, g);
        let g = tape.relu(g);
        let (g, s1, f1) = l.bn1.forward(tape, ps, g, mode, &self.bn[0]);
        let g = l.conv2.forward(tape, ps, g);
        let g = tape.relu(g);
        let (g, s2, f2) = l.bn2.forward(tape, ps, g, mode, &self.bn[1]);
        let g = tape.flatten(g);
        let g = l.grid_fc.forward(tape, ps, g);
        let g = tape.relu(g);
        let g = l.grid_ln.forward(tape, ps, g);

        let h = tape.concat(v, g);
        let h = l.trunk1.forward(tape, ps, h);
        let h = tape.relu(h);
        let h = l.trunk1_ln.forward(tape, ps, h);
        let h = l.trunk2.forward(tape, ps, h);
        let h = tape.relu(h);
        let h = l.trunk2_ln.forward(tape, ps, h);

        let value = l.value.forward(tape, ps, h);
        let mean = l.mean.forward(tape, ps, h);
        ForwardVars { mean, value, bn_stats: [s1, s2], bn_fallback: f1 || f2 }
    }

    pub fn forward(&self, tape: &mut Tape<S>, batch: &ObsBatch<S>, mode: Mode) -> ForwardVars<S> {
        self.forward_with(tape, &self.params, batch, mode)
    }

    /// Inference with frozen batch-norm statistics; values are in return units.
    pub fn infer(&self, batch: &ObsBatch<S>) -> PolicyOutput {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, Mode::Eval);
        let mean = tape.value(out.mean).data.chunks_exact(ACTION_DIM).map(|r| [r[0].as_f64(), r[1].as_f64()]).collect();
        let value = tape.value(out.value).data.iter().map(|v| self.value_norm.denormalize(v.as_f64())).collect();
        PolicyOutput { mean, value, log_std: self.log_std(), bn_fallback: out.bn_fallback }
    }

    /// Folds training-mode batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &[Option<BatchStats<S>>; 2]) {
        for (r, s) in self.bn.iter_mut().zip(stats) {
            if let Some(s) = s {
                r.update(s, BN_MOMENTUM);
            }
        }
    }
}
