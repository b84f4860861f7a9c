//! Episodic pushing environment: observations, reward, termination and
//! domain randomization.

pub mod grid;
pub mod obs;
mod reward;

pub use grid::{rasterize_grid, CellLabel, SemanticGrid, GRID_CELLS, GRID_SIZE};
pub use obs::{build_vector, Frame, Normalizer, HISTORY, VECTOR_LEN};
pub use reward::*;

use crate::math::Vec2;
use crate::physics::{step_world, Action, ContactReport, PhysicsError, PhysicsParams, WorldState};
use crate::scene::{generate_scene, MapLayout, Scene, SceneError, SpawnConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("step called on a finished episode")]
    EpisodeFinished,
    #[error("step called before reset")]
    NotReset,
}

/// Gaussian standard deviations in normalized units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sigma_vector: f64,
    pub sigma_grid: f64,
    pub sigma_action: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma_vector: 0.01, sigma_grid: 0.02, sigma_action: 0.05 }
    }
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig { sigma_vector: 0.0, sigma_grid: 0.0, sigma_action: 0.0 };

    pub fn is_valid(&self) -> bool {
        [self.sigma_vector, self.sigma_grid, self.sigma_action].iter().all(|s| s.is_finite() && *s >= 0.0)
    }
}

/// Adds N(0, σ²) to every entry not flagged in `frozen`, then clamps to [-1, 1].
pub fn apply_vector_noise(v: &mut [f32], frozen: &[bool], sigma: f64, rng: &mut impl Rng) {
    if sigma == 0.0 {
        return;
    }
    for (x, &f) in v.iter_mut().zip(frozen) {
        if !f {
            let n: f64 = rng.sample(StandardNormal);
            *x = (*x as f64 + sigma * n).clamp(-1.0, 1.0) as f32;
        }
    }
}

pub fn apply_grid_noise(g: &mut [f32], sigma: f64, rng: &mut impl Rng) {
    if sigma == 0.0 {
        return;
    }
    for x in g.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *x = (*x as f64 + sigma * n).clamp(-1.0, 1.0) as f32;
    }
}

/// Perturbs a command in normalized units and clamps it back into bounds.
pub fn apply_action_noise(a: Action, sigma: f64, limits: &crate::physics::ActionLimits, rng: &mut impl Rng) -> Action {
    if sigma == 0.0 {
        return a;
    }
    let nv: f64 = rng.sample(StandardNormal);
    let nw: f64 = rng.sample(StandardNormal);
    Action {
        v_x: (a.v_x + sigma * nv * limits.speed_scale()).clamp(limits.v_min, limits.v_max),
        theta_dot_z: (a.theta_dot_z + sigma * nw * limits.omega_max).clamp(-limits.omega_max, limits.omega_max),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub substeps: u32,
    pub max_steps: u32,
    pub goal_radius: f64,
    pub noise: NoiseConfig,
    #[serde(skip)]
    pub physics: PhysicsParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { substeps: 20, max_steps: 135, goal_radius: 0.3, noise: NoiseConfig::default(), physics: PhysicsParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub vector: Vec<f32>,
    pub grid: Vec<f32>,
}

impl Observation {
    pub fn zeros() -> Self {
        Self { vector: vec![0.0; VECTOR_LEN], grid: vec![0.0; GRID_CELLS] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Running,
    Success,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub steps_elapsed: u32,
    pub done: bool,
    pub outcome: Outcome,
}

impl EpisodeStatus {
    fn running(steps: u32) -> Self {
        Self { steps_elapsed: steps, done: false, outcome: Outcome::Running }
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub status: EpisodeStatus,
    pub contacts: ContactReport,
    /// Command after action noise and clamping.
    pub applied: Action,
}

/// Everything that evolves during an episode; enough to resume exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub seed: u64,
    pub rng: ChaCha8Rng,
    pub scene: Scene,
    pub world: WorldState,
    pub history: VecDeque<Frame>,
    pub status: EpisodeStatus,
}

#[derive(Clone, Debug)]
pub struct NamoEnv {
    map: Arc<MapLayout>,
    cfg: EnvConfig,
    walls: Arc<Vec<CellLabel>>,
    norm: Normalizer,
    ctx: RewardContext,
    state: Option<EnvState>,
}

impl NamoEnv {
    pub fn new(map: Arc<MapLayout>, cfg: EnvConfig) -> Self {
        let walls = Arc::new(grid::wall_layer(&map.room_bounds, &map.walls));
        let norm = Normalizer::new(&map.room_bounds, cfg.physics.limits);
        let size = map.room_bounds.size();
        let ctx = RewardContext { limits: cfg.physics.limits, goal_radius: cfg.goal_radius, room_diagonal: size.length() };
        Self { map, cfg, walls, norm, ctx, state: None }
    }

    pub fn map(&self) -> &Arc<MapLayout> {
        &self.map
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn restore(&mut self, state: EnvState) {
        self.state = Some(state);
    }

    fn st(&self) -> &EnvState {
        self.state.as_ref().expect("environment has not been reset")
    }

    pub fn world(&self) -> &WorldState {
        &self.st().world
    }

    pub fn goal(&self) -> Vec2 {
        self.st().scene.goal
    }

    pub fn scene(&self) -> &Scene {
        &self.st().scene
    }

    pub fn status(&self) -> EpisodeStatus {
        self.st().status
    }

    pub fn reward_context(&self) -> &RewardContext {
        &self.ctx
    }

    /// Starts a fresh episode; the scene and all noise derive from `seed`.
    pub fn reset(&mut self, spawn: &SpawnConfig, seed: u64) -> Result<Observation, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = generate_scene(&self.map, spawn, &mut rng)?;
        let world = scene.world.clone();
        let frame = Frame::capture(&world, Action::default());
        self.state = Some(EnvState {
            seed,
            rng,
            scene,
            world,
            history: std::iter::repeat_n(frame, HISTORY).collect(),
            status: EpisodeStatus::running(0),
        });
        Ok(self.emit())
    }

    pub fn semantic_grid(&self) -> SemanticGrid {
        let st = self.st();
        grid::rasterize_onto(&self.walls, &self.map.room_bounds, &st.world, st.scene.goal, self.cfg.goal_radius)
    }

    /// Observation without noise.
    pub fn clean_observation(&self) -> Observation {
        let st = self.st();
        let mut vector = vec![0.0; VECTOR_LEN];
        let history: Vec<Frame> = st.history.iter().cloned().collect();
        build_vector(st.scene.goal, &history, &self.norm, &mut vector).expect("history length is fixed");
        Observation { vector, grid: self.semantic_grid().encode() }
    }

    fn emit(&mut self) -> Observation {
        let mut obs = self.clean_observation();
        let noise = self.cfg.noise;
        let st = self.state.as_mut().expect("reset");
        if noise.sigma_vector > 0.0 {
            let frozen = obs::absent_mask(st.history.make_contiguous());
            apply_vector_noise(&mut obs.vector, &frozen, noise.sigma_vector, &mut st.rng);
        }
        apply_grid_noise(&mut obs.grid, noise.sigma_grid, &mut st.rng);
        obs
    }

    /// Applies one policy action for `substeps` physics steps.
    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        let limits = self.cfg.physics.limits;
        let noise = self.cfg.noise;
        let substeps = self.cfg.substeps;
        let radius = self.cfg.goal_radius;
        let st = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if st.status.done {
            return Err(EnvError::EpisodeFinished);
        }
        let action = action.validated(&limits)?;
        let applied = apply_action_noise(action, noise.sigma_action, &limits, &mut st.rng);

        let prev = st.world.clone();
        let goal = st.scene.goal;
        let mut contacts = ContactReport::default();
        for _ in 0..substeps {
            let r = step_world(&mut st.world, applied, &self.cfg.physics)?;
            contacts.merge(&r);
            if (st.world.robot.pose.position() - goal).length() <= radius {
                break;
            }
        }
        let reward = compute_reward(&prev, &st.world, applied, &contacts, goal, &self.ctx);
        let steps = st.status.steps_elapsed + 1;
        st.status = if reward.goal > 0.0 {
            EpisodeStatus { steps_elapsed: steps, done: true, outcome: Outcome::Success }
        } else if steps >= self.cfg.max_steps {
            EpisodeStatus { steps_elapsed: steps, done: true, outcome: Outcome::Timeout }
        } else {
            EpisodeStatus::running(steps)
        };
        st.history.pop_front();
        st.history.push_back(Frame::capture(&st.world, applied));
        let status = st.status;
        let observation = self.emit();
        Ok(StepResult { observation, reward, status, contacts, applied })
    }
}
