use super::tape::{BatchStats, Tape, Var, NORM_EPS};
use super::tensor::{Scalar, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Named trainable tensors, indexed in creation order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<S> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<S>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors.iter().map(|t| t.shape.clone()).collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn var(&self, tape: &mut Tape<S>, index: usize) -> Var {
        tape.param(index, &self.tensors[index])
    }

    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        ParamSet { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }
}

/// Fan-in scaled Gaussian: std = gain / sqrt(fan_in).
pub fn scaled_normal<S: Scalar>(shape: &[usize], fan_in: usize, gain: f64, rng: &mut impl Rng) -> Tensor<S> {
    let std = gain / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| S::of_f64(std * rng.sample::<f64, _>(StandardNormal))).collect())
}

pub const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new<S: Scalar>(ps: &mut ParamSet<S>, name: &str, n_in: usize, n_out: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let w = ps.add(format!("{name}.weight"), scaled_normal(&[n_out, n_in], n_in, gain, rng));
        let b = ps.add(format!("{name}.bias"), Tensor::zeros(&[n_out]));
        Self { w, b }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, ps: &ParamSet<S>, x: Var) -> Var {
        let w = ps.var(tape, self.w);
        let b = ps.var(tape, self.b);
        tape.linear(x, w, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub w: usize,
    pub b: usize,
    pub stride: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar>(
        ps: &mut ParamSet<S>,
        name: &str,
        c_in: usize,
        filters: usize,
        k: usize,
        stride: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = k * k * c_in;
        let w = ps.add(format!("{name}.weight"), scaled_normal(&[filters, k, k, c_in], fan_in, gain, rng));
        let b = ps.add(format!("{name}.bias"), Tensor::zeros(&[filters]));
        Self { w, b, stride }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, ps: &ParamSet<S>, x: Var) -> Var {
        let w = ps.var(tape, self.w);
        let b = ps.var(tape, self.b);
        tape.conv2d(x, w, b, self.stride)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
}

impl LayerNorm {
    pub fn new<S: Scalar>(ps: &mut ParamSet<S>, name: &str, dim: usize) -> Self {
        let gamma = ps.add(format!("{name}.gamma"), Tensor::filled(&[dim], S::one()));
        let beta = ps.add(format!("{name}.beta"), Tensor::zeros(&[dim]));
        Self { gamma, beta }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, ps: &ParamSet<S>, x: Var) -> Var {
        let g = ps.var(tape, self.gamma);
        let b = ps.var(tape, self.beta);
        tape.layer_norm(x, g, b)
    }
}

/// Running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
    /// False until the first training-mode update.
    pub initialized: bool,
}

impl<S: Scalar> RunningStats<S> {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![S::zero(); channels], var: vec![S::one(); channels], initialized: false }
    }

    /// `running = momentum·running + (1 − momentum)·batch`, using the
    /// unbiased batch variance. The first update copies the batch.
    pub fn update(&mut self, stats: &BatchStats<S>, momentum: f64) {
        let n = stats.count as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        let keep = if self.initialized { momentum } else { 0.0 };
        for (r, b) in self.mean.iter_mut().zip(&stats.mean) {
            *r = S::of_f64(keep * r.as_f64() + (1.0 - keep) * b.as_f64());
        }
        for (r, b) in self.var.iter_mut().zip(&stats.var) {
            *r = S::of_f64(keep * r.as_f64() + (1.0 - keep) * b.as_f64() * unbias);
        }
        self.initialized = true;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running estimates are left for the caller to update.
    Train,
    /// Running statistics.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: usize,
    pub beta: usize,
}

pub const BN_MOMENTUM: f64 = 0.9;

impl BatchNorm {
    pub fn new<S: Scalar>(ps: &mut ParamSet<S>, name: &str, channels: usize) -> Self {
        let gamma = ps.add(format!("{name}.gamma"), Tensor::filled(&[channels], S::one()));
        let beta = ps.add(format!("{name}.beta"), Tensor::zeros(&[channels]));
        Self { gamma, beta }
    }

    /// Returns the output, the batch statistics in training mode, and
    /// whether the identity fallback was used in evaluation mode.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        ps: &ParamSet<S>,
        x: Var,
        mode: Mode,
        running: &RunningStats<S>,
    ) -> (Var, Option<BatchStats<S>>, bool) {
        let g = ps.var(tape, self.gamma);
        let b = ps.var(tape, self.beta);
        match mode {
            Mode::Train => {
                let (y, stats) = tape.batch_norm_train(x, g, b);
                (y, Some(stats), false)
            }
            Mode::Eval if running.initialized => (tape.batch_norm_fixed(x, g, b, &running.mean, &running.var), None, false),
            Mode::Eval => {
                let c = running.mean.len();
                let zero = vec![S::zero(); c];
                let unit = vec![S::of_f64(1.0 - NORM_EPS); c];
                (tape.batch_norm_fixed(x, g, b, &zero, &unit), None, true)
            }
        }
    }
}
