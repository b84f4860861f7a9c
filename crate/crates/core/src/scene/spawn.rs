//! Probabilistic placement of boxes, robot and goal.

use super::map::MapLayout;
use super::reach::distance_to_obb;
use crate::math::Vec2;
use crate::physics::{box_body, collide, robot_body, Obb, Pose2D, RigidBody2D, WorldState, MAX_BOXES};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const BOX_ATTEMPTS: usize = 50;
pub const ROBOT_ATTEMPTS: usize = 200;
const GOAL_ATTEMPTS: usize = 200;
const BOX_CLEARANCE: f64 = 0.01;
/// Larger than the solver's speculative margin so the robot starts free.
const ROBOT_CLEARANCE: f64 = 0.03;
const GOAL_WALL_CLEARANCE: f64 = 0.25;
pub const CHALLENGING_ROTATION: f64 = PI / 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid spawn config: {0}")]
    Config(String),
    #[error("no collision-free robot pose after {0} attempts")]
    RobotPlacement(usize),
    #[error("no valid goal after {0} attempts")]
    GoalPlacement(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpawnConfig {
    pub lambda: f64,
    /// Per-slot probability of a random (rather than challenging) placement.
    pub p: Vec<f64>,
    pub max_boxes: usize,
    pub robot_anywhere_prob: f64,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self { lambda: 0.2, p: vec![0.2, 0.3, 0.4, 0.5, 0.6], max_boxes: MAX_BOXES, robot_anywhere_prob: 0.05 }
    }
}

impl SpawnConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(SceneError::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.max_boxes > MAX_BOXES {
            return Err(SceneError::Config(format!("max_boxes {} exceeds {MAX_BOXES}", self.max_boxes)));
        }
        if self.p.len() != self.max_boxes {
            return Err(SceneError::Config(format!("p has {} entries, expected {}", self.p.len(), self.max_boxes)));
        }
        if let Some((i, v)) = self.p.iter().enumerate().find(|(_, v)| !(0.2..=0.6).contains(*v)) {
            return Err(SceneError::Config(format!("p[{i}] = {v} outside [0.2, 0.6]")));
        }
        if !(0.0..=1.0).contains(&self.robot_anywhere_prob) {
            return Err(SceneError::Config("robot_anywhere_prob outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Outcome of the per-slot draw, before collision rejection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    Random,
    Challenging,
    Absent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub map_id: String,
    pub world: WorldState,
    pub goal: Vec2,
    pub box_present: Vec<bool>,
    pub slot_kinds: Vec<SlotKind>,
    pub robot_anywhere: bool,
}

impl Scene {
    pub fn boxes_present(&self) -> usize {
        self.box_present.iter().filter(|&&b| b).count()
    }
}

fn overlaps(a: &Obb, b: &Obb, clearance: f64) -> bool {
    collide(a, b, clearance).is_some()
}

fn is_free(body: &RigidBody2D, others: &[Obb], clearance: f64) -> bool {
    let o = body.obb();
    !others.iter().any(|w| overlaps(&o, w, clearance))
}

fn uniform_in(rng: &mut (impl Rng + ?Sized), lo: Vec2, hi: Vec2) -> Vec2 {
    Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y))
}

fn sample_box(map: &MapLayout, kind: SlotKind, rng: &mut (impl Rng + ?Sized)) -> Pose2D {
    match kind {
        SlotKind::Challenging if !map.challenging_poses.is_empty() => {
            let c = map.challenging_poses[rng.gen_range(0..map.challenging_poses.len())];
            let r = c.radius * rng.gen::<f64>().sqrt();
            let phi = rng.gen_range(-PI..PI);
            let dth = rng.gen_range(-CHALLENGING_ROTATION..=CHALLENGING_ROTATION);
            Pose2D::new(c.pose.x + r * phi.cos(), c.pose.y + r * phi.sin(), c.pose.theta + dth)
        }
        _ => {
            let b = map.room_bounds;
            let p = uniform_in(rng, b.min, b.max);
            Pose2D::new(p.x, p.y, rng.gen_range(-PI..PI))
        }
    }
}

/// Draws a fresh scene. Pure in (map, cfg, rng state).
pub fn generate_scene(map: &MapLayout, cfg: &SpawnConfig, rng: &mut (impl Rng + ?Sized)) -> Result<Scene, SceneError> {
    cfg.validate()?;
    let wall_obbs: Vec<Obb> = map.walls.iter().map(|w| w.obb()).collect();
    let mut obstacles = wall_obbs.clone();

    let mut boxes: Vec<Option<RigidBody2D>> = vec![None; MAX_BOXES];
    let mut kinds = vec![SlotKind::Absent; MAX_BOXES];
    for slot in 0..cfg.max_boxes {
        let u: f64 = rng.gen();
        let kind = if u < cfg.lambda * cfg.p[slot] {
            SlotKind::Random
        } else if u < cfg.lambda {
            SlotKind::Challenging
        } else {
            SlotKind::Absent
        };
        kinds[slot] = kind;
        if kind == SlotKind::Absent {
            continue;
        }
        for _ in 0..BOX_ATTEMPTS {
            let pose = sample_box(map, kind, rng);
            if !map.is_reachable(pose.position()) {
                continue;
            }
            let body = box_body(pose);
            if is_free(&body, &obstacles, BOX_CLEARANCE) {
                obstacles.push(body.obb());
                boxes[slot] = Some(body);
                break;
            }
        }
    }

    let anywhere = rng.gen::<f64>() < cfg.robot_anywhere_prob;
    let region = if anywhere { map.room_bounds } else { map.robot_spawn_region };
    let mut robot = None;
    for _ in 0..ROBOT_ATTEMPTS {
        let p = uniform_in(rng, region.min, region.max);
        let theta = rng.gen_range(-PI..PI);
        if !map.is_reachable(p) {
            continue;
        }
        let body = robot_body(Pose2D::new(p.x, p.y, theta));
        if is_free(&body, &obstacles, ROBOT_CLEARANCE) {
            robot = Some(body);
            break;
        }
    }
    let robot = robot.ok_or(SceneError::RobotPlacement(ROBOT_ATTEMPTS))?;

    let g = map.goal_spawn_region;
    let mut goal = None;
    for _ in 0..GOAL_ATTEMPTS {
        let p = uniform_in(rng, g.min, g.max);
        if wall_obbs.iter().all(|o| distance_to_obb(o, p) >= GOAL_WALL_CLEARANCE) {
            goal = Some(p);
            break;
        }
    }
    let goal = goal.ok_or(SceneError::GoalPlacement(GOAL_ATTEMPTS))?;

    let box_present = boxes.iter().map(Option::is_some).collect();
    Ok(Scene {
        map_id: map.id.clone(),
        world: WorldState::new(robot, boxes, map.walls.clone()),
        goal,
        box_present,
        slot_kinds: kinds,
        robot_anywhere: anywhere,
    })
}
