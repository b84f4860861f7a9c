use super::network::{ObsBatch, PolicyNetwork, ValueNormalizer, ACTION_DIM};
use super::ppo::{
    adaptive_lr, compute_advantages, gaussian_kl, loss_and_grads, normalize, sample, to_action, LossBatch, LossConfig, LossStats,
    LR_MAX, LR_MIN,
};
use crate::env::{EnvConfig, EnvError, EnvState, NamoEnv, Observation, Outcome, GRID_CELLS, GRID_SIZE, VECTOR_LEN};
use crate::nn::{AdamConfig, AdamOutcome, AdamState, Mode, RunningStats, Tape, Tensor};
use crate::scene::{CurriculumState, MapLayout, SpawnConfig};
use crate::seeds::training_seed;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub kl_target: f64,
    pub horizon: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub envs: usize,
    pub updates: u64,
    pub max_grad_norm: f64,
    pub weight_decay: f64,
    pub normalize_advantages: bool,
    /// Episodes in the rolling completion-rate window.
    pub rolling_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            clip_eps: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lr: 3e-4,
            kl_target: 0.008,
            horizon: 50,
            minibatch: 2000,
            epochs: 2,
            envs: 64,
            updates: 20_000,
            max_grad_norm: 1.0,
            weight_decay: 1e-4,
            normalize_advantages: true,
            rolling_window: 200,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(bad("gamma", "must lie in (0, 1]"));
        }
        if !(self.clip_eps > 0.0) {
            return Err(bad("clip_eps", "must be positive"));
        }
        for (name, v) in [
            ("entropy_coef", self.entropy_coef),
            ("value_coef", self.value_coef),
            ("lr", self.lr),
            ("kl_target", self.kl_target),
            ("max_grad_norm", self.max_grad_norm),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(name, "must be a finite non-negative number"));
            }
        }
        for (name, v) in [
            ("horizon", self.horizon),
            ("minibatch", self.minibatch),
            ("epochs", self.epochs),
            ("envs", self.envs),
            ("rolling_window", self.rolling_window),
        ] {
            if v == 0 {
                return Err(bad(name, "must be at least 1"));
            }
        }
        if self.minibatch < 2 {
            return Err(bad("minibatch", "batch normalization needs at least 2 samples"));
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig { clip_eps: self.clip_eps, entropy_coef: self.entropy_coef, value_coef: self.value_coef }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, max_grad_norm: self.max_grad_norm, ..AdamConfig::default() }
    }
}

/// Everything needed to build a trainer.
#[derive(Clone, Debug)]
pub struct TrainSetup {
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub spawn: SpawnConfig,
    pub maps: Vec<Arc<MapLayout>>,
    /// Fixed obstacle density; `None` runs the curriculum.
    pub lambda: Option<f64>,
    pub seed: u64,
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    train: &'a TrainConfig,
    env: &'a EnvConfig,
    spawn: &'a SpawnConfig,
    maps: Vec<&'a str>,
    lambda: Option<f64>,
    seed: u64,
}

impl TrainSetup {
    /// SHA-256 over everything that shapes the training stream except the
    /// update budget, so a run can be extended from its checkpoint.
    pub fn config_hash(&self) -> String {
        let train = TrainConfig { updates: 0, ..self.train.clone() };
        let h = HashedConfig {
            train: &train,
            env: &self.env,
            spawn: &self.spawn,
            maps: self.maps.iter().map(|m| m.id.as_str()).collect(),
            lambda: self.lambda,
            seed: self.seed,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&h).expect("config serializes")))
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid spawn config: {0}")]
    Spawn(String),
    #[error("no maps selected")]
    NoMaps,
    #[error("environment {env}: {source}")]
    Env { env: usize, source: EnvError },
    #[error("could not generate a scene on map {map} after {attempts} seeds")]
    Scene { map: String, attempts: usize },
    #[error("checkpoint does not match this run: {0}")]
    Mismatch(String),
}

/// One record of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: u64,
    pub transitions: usize,
    /// Mean per-step reward over the rollout.
    pub mean_reward: f64,
    pub episodes: u64,
    pub successes: u64,
    /// Success fraction over the most recent `rolling_window` episodes.
    pub completion_rate: f64,
    pub rolling_episodes: usize,
    pub lambda: BTreeMap<String, f64>,
    pub loss: LossStats,
    /// Mean KL divergence from the rollout policy to the updated policy.
    pub kl: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub skipped_minibatches: u64,
    pub bn_fallback: bool,
}

/// Non-tensor training state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerMeta {
    pub config_hash: String,
    pub update: u64,
    pub rng: ChaCha8Rng,
    pub adam: AdamConfig,
    pub adam_step: u64,
    pub adam_skipped: u64,
    pub bn: [RunningStats<f32>; 2],
    pub value_norm: ValueNormalizer,
    pub curriculum: CurriculumState,
    pub envs: Vec<EnvState>,
    pub recent: VecDeque<bool>,
    pub total_episodes: u64,
    pub total_successes: u64,
}

/// Complete trainer state as named tensors plus metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainerSnapshot {
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub meta: TrainerMeta,
}

struct Rollout {
    vector: Vec<f32>,
    grid: Vec<f32>,
    actions: Vec<[f64; ACTION_DIM]>,
    means: Vec<[f64; ACTION_DIM]>,
    log_std: [f64; ACTION_DIM],
    log_prob: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: Vec<f64>,
}

pub struct Trainer {
    setup: TrainSetup,
    hash: String,
    pub net: PolicyNetwork<f32>,
    opt: AdamState<f32>,
    curriculum: CurriculumState,
    rng: ChaCha8Rng,
    envs: Vec<NamoEnv>,
    obs: Vec<Observation>,
    recent: VecDeque<bool>,
    update: u64,
    total_episodes: u64,
    total_successes: u64,
}

const RESET_ATTEMPTS: usize = 16;

impl Trainer {
    pub fn new(setup: TrainSetup) -> Result<Self, TrainError> {
        setup.train.validate()?;
        if setup.maps.is_empty() {
            return Err(TrainError::NoMaps);
        }
        let spawn = SpawnConfig { lambda: setup.lambda.unwrap_or(0.0), ..setup.spawn.clone() };
        spawn.validate().map_err(|e| TrainError::Spawn(e.to_string()))?;

        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
        let net = PolicyNetwork::<f32>::new(&mut rng);
        let opt = AdamState::new(&net.params.shapes(), setup.train.adam());
        let curriculum = CurriculumState::with_defaults(setup.maps.iter().map(|m| m.id.as_str()));
        let envs: Vec<NamoEnv> = (0..setup.train.envs)
            .map(|i| NamoEnv::new(setup.maps[i % setup.maps.len()].clone(), setup.env.clone()))
            .collect();
        let hash = setup.config_hash();
        let mut t = Self {
            setup,
            hash,
            net,
            opt,
            curriculum,
            rng,
            envs,
            obs: Vec::new(),
            recent: VecDeque::new(),
            update: 0,
            total_episodes: 0,
            total_successes: 0,
        };
        let all: Vec<usize> = (0..t.envs.len()).collect();
        t.obs = vec![Observation::zeros(); t.envs.len()];
        t.reset_envs(&all)?;
        // Seed the batch-norm running statistics from the first observations
        // so rollouts never run on the identity fallback.
        let batch = ObsBatch::from_observations(t.obs.iter());
        if batch.len() >= 2 {
            let mut tape = Tape::new();
            let out = t.net.forward(&mut tape, &batch, Mode::Train);
            t.net.update_running_stats(&out.bn_stats);
        }
        Ok(t)
    }

    pub fn setup(&self) -> &TrainSetup {
        &self.setup
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn updates_done(&self) -> u64 {
        self.update
    }

    pub fn lr(&self) -> f64 {
        self.opt.cfg.lr
    }

    pub fn curriculum(&self) -> &CurriculumState {
        &self.curriculum
    }

    pub fn completion_rate(&self) -> f64 {
        if self.recent.is_empty() {
            0.0
        } else {
            self.recent.iter().filter(|&&s| s).count() as f64 / self.recent.len() as f64
        }
    }

    pub fn rolling_episodes(&self) -> usize {
        self.recent.len()
    }

    fn lambda_for(&self, map: &str) -> f64 {
        self.setup.lambda.unwrap_or_else(|| self.curriculum.lambda(map).expect("map tracked by curriculum"))
    }

    fn lambdas(&self) -> BTreeMap<String, f64> {
        self.setup.maps.iter().map(|m| (m.id.clone(), self.lambda_for(&m.id))).collect()
    }

    /// Starts new episodes in `which`, drawing seeds sequentially from the
    /// coordinator stream so results do not depend on thread scheduling.
    fn reset_envs(&mut self, which: &[usize]) -> Result<(), TrainError> {
        let seeds: Vec<Vec<u64>> =
            which.iter().map(|_| (0..RESET_ATTEMPTS).map(|_| training_seed(self.rng.next_u64())).collect()).collect();
        let spawns: Vec<SpawnConfig> = which
            .iter()
            .map(|&i| SpawnConfig { lambda: self.lambda_for(&self.envs[i].map().id), ..self.setup.spawn.clone() })
            .collect();
        let mut targets: Vec<(usize, &mut NamoEnv)> =
            self.envs.iter_mut().enumerate().filter(|(i, _)| which.contains(i)).collect();
        let results: Vec<(usize, Result<Observation, TrainError>)> = targets
            .par_iter_mut()
            .zip(seeds.par_iter())
            .zip(spawns.par_iter())
            .map(|(((i, env), seeds), spawn)| {
                for &s in seeds {
                    match env.reset(spawn, s) {
                        Ok(o) => return (*i, Ok(o)),
                        Err(EnvError::Scene(_)) => continue,
                        Err(e) => return (*i, Err(TrainError::Env { env: *i, source: e })),
                    }
                }
                (*i, Err(TrainError::Scene { map: env.map().id.clone(), attempts: RESET_ATTEMPTS }))
            })
            .collect();
        for (i, r) in results {
            self.obs[i] = r?;
        }
        Ok(())
    }

    fn collect(&mut self) -> Result<(Rollout, u64, u64), TrainError> {
        let (t_max, n_env) = (self.setup.train.horizon, self.envs.len());
        let n = t_max * n_env;
        let mut ro = Rollout {
            vector: Vec::with_capacity(n * VECTOR_LEN),
            grid: Vec::with_capacity(n * GRID_CELLS),
            actions: Vec::with_capacity(n),
            means: Vec::with_capacity(n),
            log_std: self.net.log_std(),
            log_prob: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            bootstrap: Vec::new(),
        };
        let limits = self.setup.env.physics.limits;
        let (mut episodes, mut successes) = (0, 0);
        for _ in 0..t_max {
            let batch = ObsBatch::<f32>::from_observations(self.obs.iter());
            let out = self.net.infer(&batch);
            let mut commands = Vec::with_capacity(n_env);
            for e in 0..n_env {
                let (a, lp) = sample(&out.mean[e], &out.log_std, &mut self.rng);
                ro.vector.extend_from_slice(&self.obs[e].vector);
                ro.grid.extend_from_slice(&self.obs[e].grid);
                ro.actions.push(a);
                ro.means.push(out.mean[e]);
                ro.log_prob.push(lp);
                ro.values.push(out.value[e]);
                commands.push(to_action(&a, &limits));
            }
            let results: Vec<_> =
                self.envs.par_iter_mut().zip(commands.par_iter()).map(|(env, &a)| env.step(a)).collect();
            let mut finished = Vec::new();
            for (e, r) in results.into_iter().enumerate() {
                let r = r.map_err(|source| TrainError::Env { env: e, source })?;
                ro.rewards.push(r.reward.total);
                ro.dones.push(r.status.done);
                self.obs[e] = r.observation;
                if r.status.done {
                    let success = r.status.outcome == Outcome::Success;
                    episodes += 1;
                    successes += success as u64;
                    self.record_episode(e, success);
                    finished.push(e);
                }
            }
            if !finished.is_empty() {
                self.reset_envs(&finished)?;
            }
        }
        let batch = ObsBatch::<f32>::from_observations(self.obs.iter());
        ro.bootstrap = self.net.infer(&batch).value;
        Ok((ro, episodes, successes))
    }

    fn record_episode(&mut self, env: usize, success: bool) {
        self.total_episodes += 1;
        self.total_successes += success as u64;
        self.recent.push_back(success);
        while self.recent.len() > self.setup.train.rolling_window {
            self.recent.pop_front();
        }
        if self.setup.lambda.is_none() {
            let map = self.envs[env].map().id.clone();
            if let Some(l) = self.curriculum.update(&map, success) {
                log::info!("map {map}: lambda raised to {l:.1}");
            }
        }
    }

    /// One rollout plus optimization cycle.
    pub fn train_iteration(&mut self) -> Result<UpdateMetrics, TrainError> {
        let cfg = self.setup.train.clone();
        let (ro, episodes, successes) = self.collect()?;
        let n_env = self.envs.len();
        let n = ro.rewards.len();

        // slots are stored time-major: slot = t·E + e
        let mut adv = vec![0.0; n];
        let mut ret = vec![0.0; n];
        for e in 0..n_env {
            let idx: Vec<usize> = (0..cfg.horizon).map(|t| t * n_env + e).collect();
            let r: Vec<f64> = idx.iter().map(|&i| ro.rewards[i]).collect();
            let v: Vec<f64> = idx.iter().map(|&i| ro.values[i]).collect();
            let d: Vec<bool> = idx.iter().map(|&i| ro.dones[i]).collect();
            let (a, g) = compute_advantages(&r, &v, &d, ro.bootstrap[e], cfg.gamma);
            for (k, &i) in idx.iter().enumerate() {
                adv[i] = a[k];
                ret[i] = g[k];
            }
        }
        if cfg.normalize_advantages {
            normalize(&mut adv);
        }
        self.net.value_norm.update(&ret);

        let loss_cfg = cfg.loss();
        let mut order: Vec<usize> = (0..n).collect();
        let mut sum = LossStats::default();
        let mut grad_norm = 0.0;
        let mut applied = 0u64;
        let mut skipped = 0u64;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(cfg.minibatch) {
                if chunk.len() < 2 {
                    continue;
                }
                let batch = gather(&ro, &adv, &ret, chunk);
                let (stats, mut grads, bn) = loss_and_grads(&self.net, &self.net.params, &batch, &loss_cfg, Mode::Train);
                if !stats.total.is_finite() {
                    log::warn!("update {}: non-finite loss, minibatch skipped", self.update);
                    skipped += 1;
                    continue;
                }
                match self.opt.update(&mut self.net.params.tensors, &mut grads) {
                    AdamOutcome::Applied { grad_norm: g, .. } => {
                        grad_norm += g;
                        applied += 1;
                        accumulate(&mut sum, &stats);
                        self.net.clamp_log_std();
                        self.net.update_running_stats(&bn);
                    }
                    AdamOutcome::Skipped => {
                        log::warn!("update {}: non-finite gradient, minibatch skipped", self.update);
                        skipped += 1;
                    }
                }
            }
        }
        let loss = if applied > 0 { scale(&sum, 1.0 / applied as f64) } else { LossStats::default() };
        let kl = if applied > 0 { self.policy_shift(&ro) } else { 0.0 };
        if applied > 0 {
            self.opt.cfg.lr = adaptive_lr(self.opt.cfg.lr, kl, cfg.kl_target, LR_MIN, LR_MAX);
        }
        self.update += 1;
        Ok(UpdateMetrics {
            update: self.update,
            transitions: n,
            mean_reward: ro.rewards.iter().sum::<f64>() / n as f64,
            episodes,
            successes,
            completion_rate: self.completion_rate(),
            rolling_episodes: self.recent.len(),
            lambda: self.lambdas(),
            loss,
            kl,
            grad_norm: if applied > 0 { grad_norm / applied as f64 } else { 0.0 },
            lr: self.opt.cfg.lr,
            skipped_minibatches: skipped,
            bn_fallback: !self.net.bn.iter().all(|b| b.initialized),
        })
    }

    /// Mean `KL(π_old ‖ π_new)` over the rollout's observations.
    fn policy_shift(&self, ro: &Rollout) -> f64 {
        let n = ro.actions.len();
        let log_std = self.net.log_std();
        let mut total = 0.0;
        for start in (0..n).step_by(KL_CHUNK) {
            let idx: Vec<usize> = (start..(start + KL_CHUNK).min(n)).collect();
            let out = self.net.infer(&obs_batch(ro, &idx));
            total += idx.iter().zip(&out.mean).map(|(&i, m)| gaussian_kl(&ro.means[i], &ro.log_std, m, &log_std)).sum::<f64>();
        }
        total / n as f64
    }

    pub fn snapshot(&self) -> TrainerSnapshot {
        let mut tensors: Vec<(String, Tensor<f32>)> = Vec::new();
        let names = &self.net.params.names;
        for (name, t) in names.iter().zip(&self.net.params.tensors) {
            tensors.push((name.clone(), t.clone()));
        }
        for (name, t) in names.iter().zip(&self.opt.m) {
            tensors.push((format!("adam.m/{name}"), t.clone()));
        }
        for (name, t) in names.iter().zip(&self.opt.v) {
            tensors.push((format!("adam.v/{name}"), t.clone()));
        }
        let e = self.obs.len();
        let vector: Vec<f32> = self.obs.iter().flat_map(|o| o.vector.iter().copied()).collect();
        let grid: Vec<f32> = self.obs.iter().flat_map(|o| o.grid.iter().copied()).collect();
        tensors.push(("obs.vector".into(), Tensor::from_vec(&[e, VECTOR_LEN], vector)));
        tensors.push(("obs.grid".into(), Tensor::from_vec(&[e, GRID_SIZE, GRID_SIZE], grid)));
        let meta = TrainerMeta {
            config_hash: self.hash.clone(),
            update: self.update,
            rng: self.rng.clone(),
            adam: self.opt.cfg,
            adam_step: self.opt.step,
            adam_skipped: self.opt.skipped,
            bn: self.net.bn.clone(),
            value_norm: self.net.value_norm,
            curriculum: self.curriculum.clone(),
            envs: self.envs.iter().map(|e| e.state().expect("envs are reset").clone()).collect(),
            recent: self.recent.clone(),
            total_episodes: self.total_episodes,
            total_successes: self.total_successes,
        };
        TrainerSnapshot { tensors, meta }
    }

    /// Restores a snapshot taken from a trainer built with the same setup.
    pub fn restore(&mut self, snap: &TrainerSnapshot) -> Result<(), TrainError> {
        let m = &snap.meta;
        if m.config_hash != self.hash {
            return Err(TrainError::Mismatch(format!("config hash {} vs {}", m.config_hash, self.hash)));
        }
        if m.envs.len() != self.envs.len() {
            return Err(TrainError::Mismatch(format!("{} environments vs {}", m.envs.len(), self.envs.len())));
        }
        let find = |name: &str, shape: &[usize]| -> Result<Tensor<f32>, TrainError> {
            let t = snap
                .tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| TrainError::Mismatch(format!("missing tensor {name}")))?;
            if t.shape != shape {
                return Err(TrainError::Mismatch(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape)));
            }
            Ok(t)
        };
        let names = self.net.params.names.clone();
        let shapes = self.net.params.shapes();
        for (i, (name, shape)) in names.iter().zip(&shapes).enumerate() {
            self.net.params.tensors[i] = find(name, shape)?;
            self.opt.m[i] = find(&format!("adam.m/{name}"), shape)?;
            self.opt.v[i] = find(&format!("adam.v/{name}"), shape)?;
        }
        let e = self.envs.len();
        let vector = find("obs.vector", &[e, VECTOR_LEN])?;
        let grid = find("obs.grid", &[e, GRID_SIZE, GRID_SIZE])?;
        for (k, o) in self.obs.iter_mut().enumerate() {
            o.vector = vector.data[k * VECTOR_LEN..(k + 1) * VECTOR_LEN].to_vec();
            o.grid = grid.data[k * GRID_CELLS..(k + 1) * GRID_CELLS].to_vec();
        }
        self.update = m.update;
        self.rng = m.rng.clone();
        self.opt.cfg = m.adam;
        self.opt.step = m.adam_step;
        self.opt.skipped = m.adam_skipped;
        self.net.bn = m.bn.clone();
        self.net.value_norm = m.value_norm;
        self.curriculum = m.curriculum.clone();
        for (env, st) in self.envs.iter_mut().zip(&m.envs) {
            env.restore(st.clone());
        }
        self.recent = m.recent.clone();
        self.total_episodes = m.total_episodes;
        self.total_successes = m.total_successes;
        Ok(())
    }
}

impl TrainerSnapshot {
    /// The policy stored in the snapshot, checked against the network's shape manifest.
    pub fn policy(&self) -> Result<PolicyNetwork<f32>, TrainError> {
        let mut net = PolicyNetwork::<f32>::new(&mut ChaCha8Rng::seed_from_u64(0));
        for (i, (name, shape)) in net.params.names.clone().iter().zip(net.params.shapes()).enumerate() {
            let t = self
                .tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| TrainError::Mismatch(format!("missing tensor {name}")))?;
            if t.shape != shape {
                return Err(TrainError::Mismatch(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape)));
            }
            net.params.tensors[i] = t.clone();
        }
        net.bn = self.meta.bn.clone();
        net.value_norm = self.meta.value_norm;
        Ok(net)
    }
}

const KL_CHUNK: usize = 512;

fn obs_batch(ro: &Rollout, idx: &[usize]) -> ObsBatch<f32> {
    let b = idx.len();
    let mut vector = Vec::with_capacity(b * VECTOR_LEN);
    let mut grid = Vec::with_capacity(b * GRID_CELLS);
    for &i in idx {
        vector.extend_from_slice(&ro.vector[i * VECTOR_LEN..(i + 1) * VECTOR_LEN]);
        grid.extend_from_slice(&ro.grid[i * GRID_CELLS..(i + 1) * GRID_CELLS]);
    }
    ObsBatch {
        vector: Tensor::from_vec(&[b, VECTOR_LEN], vector),
        grid: Tensor::from_vec(&[b, GRID_SIZE, GRID_SIZE, 1], grid),
    }
}

fn gather(ro: &Rollout, adv: &[f64], ret: &[f64], idx: &[usize]) -> LossBatch<f32> {
    LossBatch {
        obs: obs_batch(ro, idx),
        actions: idx.iter().map(|&i| ro.actions[i]).collect(),
        old_log_prob: idx.iter().map(|&i| ro.log_prob[i]).collect(),
        advantages: idx.iter().map(|&i| adv[i]).collect(),
        returns: idx.iter().map(|&i| ret[i]).collect(),
    }
}

fn accumulate(sum: &mut LossStats, s: &LossStats) {
    sum.total += s.total;
    sum.policy += s.policy;
    sum.value += s.value;
    sum.entropy += s.entropy;
    sum.approx_kl += s.approx_kl;
    sum.clip_fraction += s.clip_fraction;
}

fn scale(s: &LossStats, k: f64) -> LossStats {
    LossStats {
        total: s.total * k,
        policy: s.policy * k,
        value: s.value * k,
        entropy: s.entropy * k,
        approx_kl: s.approx_kl * k,
        clip_fraction: s.clip_fraction * k,
    }
}
