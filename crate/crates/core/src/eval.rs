//! Evaluation sweeps over maps and obstacle densities.

use crate::agent::{sample, to_action, ObsBatch, PolicyNetwork};
use crate::env::{EnvConfig, EnvError, NamoEnv, NoiseConfig, Observation, Outcome};
use crate::io::TrajectoryLog;
use crate::math::{wrap_angle, Vec2};
use crate::physics::{Action, WorldState};
use crate::scene::reach::ReachGrid;
use crate::scene::{MapLayout, SpawnConfig, REACH_RESOLUTION, ROBOT_CLEARANCE};
use crate::seeds::{eval_seed, is_eval_seed, mix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;
use thiserror::Error;

pub const PUSH_DISTANCE: f64 = 0.05;
pub const PUSH_ANGLE: f64 = 5.0 * PI / 180.0;

/// Chooses commands for a batch of running episodes.
pub trait Policy {
    /// `rngs[i]` is the private stream of episode `i`.
    fn act(&mut self, envs: &[&NamoEnv], obs: &[&Observation], rngs: &mut [&mut ChaCha8Rng]) -> Vec<Action>;
}

pub struct NetworkPolicy {
    pub net: PolicyNetwork<f32>,
    /// Use the mean action instead of sampling.
    pub deterministic: bool,
}

impl Policy for NetworkPolicy {
    fn act(&mut self, envs: &[&NamoEnv], obs: &[&Observation], rngs: &mut [&mut ChaCha8Rng]) -> Vec<Action> {
        let out = self.net.infer(&ObsBatch::from_observations(obs.iter().copied()));
        (0..obs.len())
            .map(|i| {
                let limits = envs[i].config().physics.limits;
                let a = if self.deterministic { out.mean[i] } else { sample(&out.mean[i], &out.log_std, &mut *rngs[i]).0 };
                to_action(&a, &limits)
            })
            .collect()
    }
}

/// Turns toward the goal and drives at full speed once roughly aligned.
/// Ignores obstacles; a baseline for open rooms.
pub struct StraightToGoal {
    pub heading_gain: f64,
}

impl Default for StraightToGoal {
    fn default() -> Self {
        Self { heading_gain: 3.0 }
    }
}

impl Policy for StraightToGoal {
    fn act(&mut self, envs: &[&NamoEnv], _obs: &[&Observation], _rngs: &mut [&mut ChaCha8Rng]) -> Vec<Action> {
        envs.iter()
            .map(|env| {
                let lim = env.config().physics.limits;
                let r = &env.world().robot;
                let to_goal = env.goal() - r.pose.position();
                let err = wrap_angle(to_goal.y.atan2(to_goal.x) - r.pose.theta);
                let v = (lim.v_max * err.cos()).max(0.0);
                Action::new(v, (self.heading_gain * err).clamp(-lim.omega_max, lim.omega_max))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub maps: Vec<String>,
    pub lambdas: Vec<f64>,
    pub scenes: usize,
    pub deterministic: bool,
    pub noise: NoiseConfig,
    pub seed: u64,
    /// Episodes stepped in lockstep.
    pub batch: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            maps: vec!["i".into()],
            lambdas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            scenes: 1000,
            deterministic: true,
            noise: NoiseConfig::NONE,
            seed: 0,
            batch: 64,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("scene generation failed on map {map} at lambda {lambda}")]
    Scene { map: String, lambda: f64 },
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |field: &str, message: &str| EvalError::Config { field: field.into(), message: message.into() };
        if self.scenes == 0 {
            return Err(bad("scenes", "must be at least 1"));
        }
        if self.batch == 0 {
            return Err(bad("batch", "must be at least 1"));
        }
        if self.maps.is_empty() {
            return Err(bad("maps", "select at least one map"));
        }
        if self.lambdas.is_empty() {
            return Err(bad("lambdas", "select at least one lambda"));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(bad("lambdas", &format!("{l} outside [0, 1]")));
        }
        if !self.noise.is_valid() {
            return Err(bad("noise", "standard deviations must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// No collision-free path from robot to goal with boxes as obstacles.
    TimeoutBlocked,
    /// A path exists but the goal was not reached.
    TimeoutWandering,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub map: String,
    pub lambda: f64,
    pub seed: u64,
    pub outcome: Outcome,
    pub steps: u32,
    pub time_taken: f64,
    pub boxes_present: usize,
    pub boxes_pushed: usize,
    pub failure: Option<FailureKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub map: String,
    pub lambda: f64,
    pub scenes: usize,
    pub successes: usize,
    pub timeouts: usize,
    pub completion_rate: f64,
    /// Seconds, over successful episodes; `None` without successes.
    pub mean_time_taken: Option<f64>,
    /// Over successful episodes; `None` without successes.
    pub mean_boxes_pushed: Option<f64>,
    pub mean_boxes_present: f64,
    pub timeout_blocked: usize,
    pub timeout_wandering: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<CellMetrics>,
    pub episodes: Vec<EpisodeRecord>,
}

/// Present boxes whose center moved more than 5 cm or that turned more than
/// 5° between the two states.
pub fn count_boxes_pushed(initial: &WorldState, last: &WorldState) -> usize {
    initial
        .boxes
        .iter()
        .zip(&last.boxes)
        .filter(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => {
                (a.pose.position() - b.pose.position()).length() > PUSH_DISTANCE
                    || wrap_angle(a.pose.theta - b.pose.theta).abs() > PUSH_ANGLE
            }
            _ => false,
        })
        .count()
}

/// Labels a timed-out episode by flood fill over the room with walls and
/// boxes inflated by the robot's half width.
pub fn classify_failure(map: &MapLayout, world: &WorldState, goal: Vec2) -> FailureKind {
    let mut obstacles: Vec<_> = map.walls.iter().map(|w| (w.obb(), ROBOT_CLEARANCE)).collect();
    obstacles.extend(world.present_boxes().map(|(_, b)| (b.obb(), ROBOT_CLEARANCE)));
    let grid = ReachGrid::new(map.room_bounds, REACH_RESOLUTION, &obstacles);
    let Some(start) = grid.nearest_free(world.robot.pose.position(), 0.5) else {
        return FailureKind::TimeoutBlocked;
    };
    let reached = grid.flood(&[start]);
    match grid.cell(goal) {
        Some(g) if grid.is_free(g) && reached[g] => FailureKind::TimeoutWandering,
        _ => FailureKind::TimeoutBlocked,
    }
}

fn scene_seed(base: u64, map: usize, lambda: usize, scene: usize, attempt: u64) -> u64 {
    let cell = mix(base ^ mix(((map as u64) << 48) ^ ((lambda as u64) << 32) ^ scene as u64));
    eval_seed(mix(cell.wrapping_add(attempt)))
}

const RESET_ATTEMPTS: u64 = 16;

struct Episode {
    env: NamoEnv,
    obs: Observation,
    rng: ChaCha8Rng,
    seed: u64,
    initial: WorldState,
    record: Option<EpisodeRecord>,
}

/// Runs `cfg.scenes` fresh episodes for every (map, λ) cell. Episodes are
/// independent: results do not depend on `cfg.batch` or thread count.
pub fn evaluate(
    policy: &mut dyn Policy,
    maps: &[Arc<MapLayout>],
    env_cfg: &EnvConfig,
    spawn: &SpawnConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let env_cfg = EnvConfig { noise: cfg.noise, ..env_cfg.clone() };
    let step_time = env_cfg.substeps as f64 * env_cfg.physics.dt;
    let mut cells = Vec::new();
    let mut episodes = Vec::new();
    for (mi, map) in maps.iter().enumerate() {
        for (li, &lambda) in cfg.lambdas.iter().enumerate() {
            let spawn = SpawnConfig { lambda, ..spawn.clone() };
            let mut records = Vec::with_capacity(cfg.scenes);
            let mut start = 0;
            while start < cfg.scenes {
                let end = (start + cfg.batch).min(cfg.scenes);
                let mut batch: Vec<Episode> = (start..end)
                    .into_par_iter()
                    .map(|k| {
                        let mut env = NamoEnv::new(map.clone(), env_cfg.clone());
                        for attempt in 0..RESET_ATTEMPTS {
                            let seed = scene_seed(cfg.seed, mi, li, k, attempt);
                            debug_assert!(is_eval_seed(seed));
                            match env.reset(&spawn, seed) {
                                Ok(obs) => {
                                    let initial = env.world().clone();
                                    let rng = ChaCha8Rng::seed_from_u64(mix(seed));
                                    return Ok(Episode { env, obs, rng, seed, initial, record: None });
                                }
                                Err(EnvError::Scene(_)) => continue,
                                Err(e) => return Err(EvalError::Env(e)),
                            }
                        }
                        Err(EvalError::Scene { map: map.id.clone(), lambda })
                    })
                    .collect::<Result<_, _>>()?;
                run_lockstep(policy, &mut batch, step_time)?;
                records.extend(batch.into_iter().map(|e| EpisodeRecord { lambda, ..e.record.expect("episode finished") }));
                start = end;
            }
            cells.push(aggregate(&map.id, lambda, &records));
            episodes.extend(records);
        }
    }
    Ok(EvalReport { cells, episodes })
}

fn run_lockstep(policy: &mut dyn Policy, batch: &mut [Episode], step_time: f64) -> Result<(), EvalError> {
    loop {
        let (mut envs, mut obs, mut rngs) = (Vec::new(), Vec::new(), Vec::new());
        for e in batch.iter_mut().filter(|e| e.record.is_none()) {
            let Episode { env, obs: o, rng, .. } = e;
            envs.push(&*env);
            obs.push(&*o);
            rngs.push(rng);
        }
        if envs.is_empty() {
            return Ok(());
        }
        let actions = policy.act(&envs, &obs, &mut rngs);
        drop((envs, obs, rngs));
        let mut targets: Vec<&mut Episode> = batch.iter_mut().filter(|e| e.record.is_none()).collect();
        targets.par_iter_mut().zip(actions.par_iter()).try_for_each(|(ep, &a)| -> Result<(), EvalError> {
            let r = ep.env.step(a)?;
            ep.obs = r.observation;
            if r.status.done {
                let world = ep.env.world();
                let success = r.status.outcome == Outcome::Success;
                ep.record = Some(EpisodeRecord {
                    map: ep.env.map().id.clone(),
                    lambda: 0.0,
                    seed: ep.seed,
                    outcome: r.status.outcome,
                    steps: r.status.steps_elapsed,
                    time_taken: r.status.steps_elapsed as f64 * step_time,
                    boxes_present: ep.env.scene().boxes_present(),
                    boxes_pushed: count_boxes_pushed(&ep.initial, world),
                    failure: (!success).then(|| classify_failure(ep.env.map(), world, ep.env.goal())),
                });
            }
            Ok(())
        })?;
    }
}

pub fn aggregate(map: &str, lambda: f64, records: &[EpisodeRecord]) -> CellMetrics {
    let n = records.len();
    let wins: Vec<&EpisodeRecord> = records.iter().filter(|r| r.outcome == Outcome::Success).collect();
    let mean = |xs: Vec<f64>| if xs.is_empty() { None } else { Some(xs.iter().sum::<f64>() / xs.len() as f64) };
    let count = |k: FailureKind| records.iter().filter(|r| r.failure == Some(k)).count();
    CellMetrics {
        map: map.into(),
        lambda,
        scenes: n,
        successes: wins.len(),
        timeouts: n - wins.len(),
        completion_rate: if n == 0 { 0.0 } else { wins.len() as f64 / n as f64 },
        mean_time_taken: mean(wins.iter().map(|r| r.time_taken).collect()),
        mean_boxes_pushed: mean(wins.iter().map(|r| r.boxes_pushed as f64).collect()),
        mean_boxes_present: if n == 0 { 0.0 } else { records.iter().map(|r| r.boxes_present as f64).sum::<f64>() / n as f64 },
        timeout_blocked: count(FailureKind::TimeoutBlocked),
        timeout_wandering: count(FailureKind::TimeoutWandering),
    }
}

pub const CSV_HEADER: &str =
    "map,lambda,scenes,boxes,completion_rate,time_taken,boxes_pushed,timeout_blocked,timeout_wandering";

/// One row per cell: λ, mean boxes present, completion rate, time taken,
/// boxes pushed, then failure tallies. Empty fields mean "no successes".
pub fn to_csv(cells: &[CellMetrics]) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for c in cells {
        let _ = writeln!(
            s,
            "{},{:.2},{},{:.3},{:.4},{},{},{},{}",
            c.map,
            c.lambda,
            c.scenes,
            c.mean_boxes_present,
            c.completion_rate,
            opt(c.mean_time_taken),
            opt(c.mean_boxes_pushed),
            c.timeout_blocked,
            c.timeout_wandering
        );
    }
    s
}

/// Re-runs one evaluation episode from its reset seed and logs every step.
/// Matches the batched run for the same policy and configuration.
pub fn record_episode(
    policy: &mut dyn Policy,
    map: Arc<MapLayout>,
    env_cfg: &EnvConfig,
    spawn: &SpawnConfig,
    seed: u64,
    config_hash: Option<String>,
) -> Result<TrajectoryLog, EvalError> {
    let mut env = NamoEnv::new(map, env_cfg.clone());
    let mut obs = env.reset(spawn, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed));
    let mut log = TrajectoryLog::start(&env, config_hash);
    loop {
        let a = policy.act(&[&env], &[&obs], &mut [&mut rng])[0];
        let r = env.step(a)?;
        log.push(&env, a, &r);
        obs = r.observation.clone();
        if r.status.done {
            return Ok(log);
        }
    }
}
