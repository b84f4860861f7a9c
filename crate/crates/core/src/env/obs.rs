//! The 242-element observation vector.

use crate::math::Vec2;
use crate::physics::{body_vertices, Action, ActionLimits, RigidBody2D, WorldState, MAX_BOXES};
use crate::scene::Rect;
use std::f64::consts::PI;
use thiserror::Error;

pub const HISTORY: usize = 5;
pub const GOAL_LEN: usize = 2;
pub const ROBOT_FRAME_LEN: usize = 6;
pub const BOX_FRAME_LEN: usize = MAX_BOXES * 4 * 2;
pub const ACTION_FRAME_LEN: usize = 2;
pub const VECTOR_LEN: usize = GOAL_LEN + HISTORY * (ROBOT_FRAME_LEN + BOX_FRAME_LEN + ACTION_FRAME_LEN);

pub const RP_OFFSET: usize = GOAL_LEN;
pub const BV_OFFSET: usize = RP_OFFSET + HISTORY * ROBOT_FRAME_LEN;
pub const ACTION_OFFSET: usize = BV_OFFSET + HISTORY * BOX_FRAME_LEN;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("history must hold exactly {HISTORY} frames, got {0}")]
pub struct HistoryLengthError(pub usize);

/// One history frame in physical units.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Frame {
    pub robot: RigidBody2D,
    pub box_vertices: Vec<Option<[Vec2; 4]>>,
    pub action: Action,
}

impl Frame {
    pub fn capture(world: &WorldState, action: Action) -> Self {
        Self {
            robot: world.robot.clone(),
            box_vertices: world.boxes.iter().map(|b| b.as_ref().map(body_vertices)).collect(),
            action,
        }
    }
}

/// Maps room coordinates to [-1, 1].
#[derive(Clone, Copy, Debug)]
pub struct Normalizer {
    pub center: Vec2,
    pub half: Vec2,
    pub limits: ActionLimits,
}

impl Normalizer {
    pub fn new(bounds: &Rect, limits: ActionLimits) -> Self {
        Self { center: bounds.center(), half: bounds.size() * 0.5, limits }
    }

    pub fn position(&self, p: Vec2) -> [f32; 2] {
        let q = p - self.center;
        [clamp1(q.x / self.half.x), clamp1(q.y / self.half.y)]
    }

    pub fn speed_scale(&self) -> f64 {
        self.limits.speed_scale()
    }
}

fn clamp1(v: f64) -> f32 {
    v.clamp(-1.0, 1.0) as f32
}

/// Layout: `[G | RP oldest→newest | BV oldest→newest | a oldest→newest]`.
/// Absent box slots are exactly zero.
pub fn build_vector(goal: Vec2, history: &[Frame], norm: &Normalizer, out: &mut [f32]) -> Result<(), HistoryLengthError> {
    if history.len() != HISTORY {
        return Err(HistoryLengthError(history.len()));
    }
    assert_eq!(out.len(), VECTOR_LEN, "output buffer must hold {VECTOR_LEN} values");
    out[..2].copy_from_slice(&norm.position(goal));
    let vs = norm.speed_scale();
    let ws = norm.limits.omega_max;
    for (f, frame) in history.iter().enumerate() {
        let r = &frame.robot;
        let o = RP_OFFSET + f * ROBOT_FRAME_LEN;
        let [px, py] = norm.position(r.pose.position());
        out[o..o + ROBOT_FRAME_LEN].copy_from_slice(&[
            px,
            py,
            clamp1(r.linear_velocity.x / vs),
            clamp1(r.linear_velocity.y / vs),
            clamp1(r.pose.theta / PI),
            clamp1(r.angular_velocity / ws),
        ]);

        let o = BV_OFFSET + f * BOX_FRAME_LEN;
        out[o..o + BOX_FRAME_LEN].fill(0.0);
        for (slot, verts) in frame.box_vertices.iter().enumerate().take(MAX_BOXES) {
            if let Some(vs) = verts {
                for (k, v) in vs.iter().enumerate() {
                    let i = o + slot * 8 + k * 2;
                    out[i..i + 2].copy_from_slice(&norm.position(*v));
                }
            }
        }

        let o = ACTION_OFFSET + f * ACTION_FRAME_LEN;
        out[o] = clamp1(frame.action.v_x / vs);
        out[o + 1] = clamp1(frame.action.theta_dot_z / ws);
    }
    Ok(())
}

/// Entries that must stay exactly zero because their box slot is empty in
/// that frame.
pub fn absent_mask(history: &[Frame]) -> Vec<bool> {
    let mut mask = vec![false; VECTOR_LEN];
    for (f, frame) in history.iter().enumerate() {
        for slot in 0..MAX_BOXES {
            if frame.box_vertices.get(slot).is_none_or(Option::is_none) {
                let o = BV_OFFSET + f * BOX_FRAME_LEN + slot * 8;
                mask[o..o + 8].fill(true);
            }
        }
    }
    mask
}
