//! Per-step reward terms and their weights.

use crate::math::Vec2;
use crate::physics::{Action, ActionLimits, ContactReport, WorldState};
use serde::{Deserialize, Serialize};

pub const W_GOAL: f64 = 10.0;
pub const W_PROGRESS: f64 = 1.0;
pub const W_DIST: f64 = 0.1;
pub const W_WALL: f64 = 0.2;
pub const W_BOX: f64 = 0.1;
pub const W_VEL_EFFORT: f64 = 0.05;
pub const W_ROT_EFFORT: f64 = 0.1;
pub const W_VEL_OFFSET: f64 = 0.2;
pub const W_ROT_OFFSET: f64 = 0.1;
pub const W_TIME: f64 = 1.0;

/// Each field is already multiplied by its weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub goal: f64,
    pub progress: f64,
    pub dist: f64,
    pub wall_collision: f64,
    pub box_collision: f64,
    pub vel_effort: f64,
    pub rot_effort: f64,
    pub vel_offset: f64,
    pub rot_offset: f64,
    pub time: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn terms(&self) -> [f64; 10] {
        [
            self.goal,
            self.progress,
            self.dist,
            self.wall_collision,
            self.box_collision,
            self.vel_effort,
            self.rot_effort,
            self.vel_offset,
            self.rot_offset,
            self.time,
        ]
    }

    /// Admissible range of each weighted term, in `terms()` order.
    pub fn bounds() -> [(f64, f64); 10] {
        [
            (0.0, W_GOAL),
            (-W_PROGRESS, W_PROGRESS),
            (0.0, W_DIST),
            (-W_WALL, 0.0),
            (-W_BOX, 0.0),
            (-W_VEL_EFFORT, 0.0),
            (-W_ROT_EFFORT, 0.0),
            (-W_VEL_OFFSET, 0.0),
            (-W_ROT_OFFSET, 0.0),
            (-W_TIME, -W_TIME),
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RewardContext {
    pub limits: ActionLimits,
    pub goal_radius: f64,
    /// Normalizes the distance term.
    pub room_diagonal: f64,
}

/// `progress` uses the displacement over the step, the offset terms use the
/// velocity at the end of the step, the effort terms use the command.
pub fn compute_reward(
    prev: &WorldState,
    next: &WorldState,
    action: Action,
    contacts: &ContactReport,
    goal: Vec2,
    ctx: &RewardContext,
) -> RewardBreakdown {
    let l = &ctx.limits;
    let p0 = prev.robot.pose.position();
    let p1 = next.robot.pose.position();
    let elapsed = next.time - prev.time;
    let to_goal = (goal - p0).normalized();
    let v_disp = if elapsed > 0.0 { (p1 - p0) * (1.0 / elapsed) } else { Vec2::ZERO };
    let d = (goal - p1).length();
    let success = d <= ctx.goal_radius;

    let v_actual = next.robot.forward_speed();
    let w_actual = next.robot.angular_velocity;

    let mut r = RewardBreakdown {
        goal: if success { W_GOAL } else { 0.0 },
        progress: (v_disp.dot(to_goal) / l.v_max).clamp(-1.0, 1.0) * W_PROGRESS,
        dist: (1.0 - d / ctx.room_diagonal).clamp(0.0, 1.0) * W_DIST,
        wall_collision: if contacts.robot_wall_contact { -W_WALL } else { 0.0 },
        box_collision: if contacts.any_robot_box() { -W_BOX } else { 0.0 },
        vel_effort: -(action.v_x.abs() / l.v_max).min(1.0) * W_VEL_EFFORT,
        rot_effort: -(action.theta_dot_z.abs() / l.omega_max).min(1.0) * W_ROT_EFFORT,
        vel_offset: -((v_actual - action.v_x).abs() / l.v_max).min(1.0) * W_VEL_OFFSET,
        rot_offset: -((w_actual - action.theta_dot_z).abs() / l.omega_max).min(1.0) * W_ROT_OFFSET,
        time: -W_TIME,
        total: 0.0,
    };
    r.total = r.terms().iter().sum();
    r
}
