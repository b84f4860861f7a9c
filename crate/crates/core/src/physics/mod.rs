//! Deterministic impulse-based 2D rigid-body simulation of one room.
//!
//! The robot is a velocity-controlled unicycle whose drive acts through
//! force-capped motor constraints. Boxes slide on the floor with Coulomb
//! friction. Walls are static thickened segments. Contacts are resolved
//! with sequential impulses followed by Baumgarte-scaled position
//! projection.

mod collide;
mod solver;

pub use collide::{collide, ContactPoint, Manifold, Obb};

use crate::math::{wrap_angle, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_BOXES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("invalid action: non-finite component (v_x={v_x}, theta_dot_z={theta_dot_z})")]
    InvalidAction { v_x: f64, theta_dot_z: f64 },
    #[error("invalid timestep {0}")]
    InvalidTimestep(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Heading in (−π, π].
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidBody2D {
    pub pose: Pose2D,
    pub linear_velocity: Vec2,
    pub angular_velocity: f64,
    pub half_extents: Vec2,
    pub mass: f64,
    pub inertia: f64,
    pub movable: bool,
}

impl RigidBody2D {
    /// Solid rectangle with uniform density.
    pub fn rectangle(pose: Pose2D, width: f64, length_y: f64, mass: f64) -> Self {
        let inertia = mass * (width * width + length_y * length_y) / 12.0;
        Self {
            pose,
            linear_velocity: Vec2::ZERO,
            angular_velocity: 0.0,
            half_extents: Vec2::new(0.5 * width, 0.5 * length_y),
            mass,
            inertia,
            movable: true,
        }
    }

    pub fn obb(&self) -> Obb {
        Obb::new(self.pose.position(), self.pose.theta, self.half_extents)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.pose.theta)
    }

    /// Signed speed along the heading.
    pub fn forward_speed(&self) -> f64 {
        self.linear_velocity.dot(self.heading())
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.linear_velocity.length_squared()
            + 0.5 * self.inertia * self.angular_velocity * self.angular_velocity
    }

    fn inv_mass(&self) -> f64 {
        if self.movable {
            1.0 / self.mass
        } else {
            0.0
        }
    }

    fn inv_inertia(&self) -> f64 {
        if self.movable {
            1.0 / self.inertia
        } else {
            0.0
        }
    }
}

/// Corners of the oriented rectangle in world frame, counter-clockwise,
/// starting from the body-frame (+x, +y) corner.
pub fn body_vertices(body: &RigidBody2D) -> [Vec2; 4] {
    body.obb().vertices()
}

/// Target forward velocity and yaw rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub v_x: f64,
    pub theta_dot_z: f64,
}

impl Action {
    pub fn new(v_x: f64, theta_dot_z: f64) -> Self {
        Self { v_x, theta_dot_z }
    }

    /// Rejects non-finite commands and clamps the rest into `limits`.
    pub fn validated(self, limits: &ActionLimits) -> Result<Action, PhysicsError> {
        if !self.v_x.is_finite() || !self.theta_dot_z.is_finite() {
            return Err(PhysicsError::InvalidAction { v_x: self.v_x, theta_dot_z: self.theta_dot_z });
        }
        Ok(Action {
            v_x: self.v_x.clamp(limits.v_min, limits.v_max),
            theta_dot_z: self.theta_dot_z.clamp(-limits.omega_max, limits.omega_max),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub accel_max: f64,
    pub angular_accel_max: f64,
}

impl Default for ActionLimits {
    fn default() -> Self {
        Self { v_min: -0.5, v_max: 1.0, omega_max: 1.5, accel_max: 2.0, angular_accel_max: 6.0 }
    }
}

impl ActionLimits {
    /// Scale used to normalize forward speeds to [−1, 1].
    pub fn speed_scale(&self) -> f64 {
        self.v_max.abs().max(self.v_min.abs())
    }
}

/// Static wall: a segment thickened to `thickness`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub a: Vec2,
    pub b: Vec2,
    pub thickness: f64,
}

impl Wall {
    pub fn new(a: Vec2, b: Vec2, thickness: f64) -> Self {
        Self { a, b, thickness }
    }

    /// Collision rectangle: the segment extended by half the thickness at
    /// each end.
    pub fn obb(&self) -> Obb {
        let d = self.b - self.a;
        let len = d.length();
        let theta = d.y.atan2(d.x);
        let r = 0.5 * self.thickness;
        Obb::new((self.a + self.b) * 0.5, theta, Vec2::new(0.5 * len + r, r))
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        let d = self.b - self.a;
        let l2 = d.length_squared();
        let t = if l2 > 0.0 { ((p - self.a).dot(d) / l2).clamp(0.0, 1.0) } else { 0.0 };
        (p - (self.a + d * t)).length()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsParams {
    pub dt: f64,
    pub gravity: f64,
    pub push_force_max: f64,
    pub lateral_force_max: f64,
    pub drive_torque_max: f64,
    pub floor_friction: f64,
    pub robot_box_friction: f64,
    pub box_box_friction: f64,
    pub wall_friction: f64,
    pub velocity_iterations: usize,
    pub position_iterations: usize,
    pub baumgarte: f64,
    pub velocity_baumgarte: f64,
    pub max_push_out_speed: f64,
    pub linear_slop: f64,
    pub max_correction: f64,
    pub speculative_margin: f64,
    pub penetration_tolerance: f64,
    pub limits: ActionLimits,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            dt: 1.0 / 60.0,
            gravity: 9.81,
            push_force_max: 40.0,
            lateral_force_max: 300.0,
            drive_torque_max: 15.0,
            floor_friction: 0.35,
            robot_box_friction: 0.3,
            box_box_friction: 0.4,
            wall_friction: 0.3,
            velocity_iterations: 8,
            position_iterations: 4,
            baumgarte: 0.2,
            velocity_baumgarte: 0.3,
            max_push_out_speed: 0.1,
            linear_slop: 0.005,
            max_correction: 0.2,
            speculative_margin: 0.02,
            penetration_tolerance: 0.01,
            limits: ActionLimits::default(),
        }
    }
}

pub const ROBOT_LENGTH: f64 = 0.7;
pub const ROBOT_WIDTH: f64 = 0.4;
pub const ROBOT_MASS: f64 = 30.0;
pub const BOX_SIDE: f64 = 0.6;
pub const BOX_MASS: f64 = 5.0;
pub const WALL_THICKNESS: f64 = 0.1;

/// The simulated robot at `pose`, at rest.
pub fn robot_body(pose: Pose2D) -> RigidBody2D {
    RigidBody2D::rectangle(pose, ROBOT_LENGTH, ROBOT_WIDTH, ROBOT_MASS)
}

/// A standard box at `pose`, at rest.
pub fn box_body(pose: Pose2D) -> RigidBody2D {
    RigidBody2D::rectangle(pose, BOX_SIDE, BOX_SIDE, BOX_MASS)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub robot_wall_contact: bool,
    /// Sorted, de-duplicated slot indices.
    pub robot_box_contacts: Vec<usize>,
    pub box_wall_contacts: Vec<usize>,
    pub max_penetration: f64,
}

impl ContactReport {
    /// Union of two reports (used to aggregate sub-steps).
    pub fn merge(&mut self, other: &ContactReport) {
        self.robot_wall_contact |= other.robot_wall_contact;
        for &i in &other.robot_box_contacts {
            if !self.robot_box_contacts.contains(&i) {
                self.robot_box_contacts.push(i);
            }
        }
        for &i in &other.box_wall_contacts {
            if !self.box_wall_contacts.contains(&i) {
                self.box_wall_contacts.push(i);
            }
        }
        self.robot_box_contacts.sort_unstable();
        self.box_wall_contacts.sort_unstable();
        self.max_penetration = self.max_penetration.max(other.max_penetration);
    }

    pub fn any_robot_box(&self) -> bool {
        !self.robot_box_contacts.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot: RigidBody2D,
    /// One entry per box slot; `None` marks an absent box.
    pub boxes: Vec<Option<RigidBody2D>>,
    pub walls: Vec<Wall>,
    pub time: f64,
}

impl WorldState {
    pub fn new(robot: RigidBody2D, boxes: Vec<Option<RigidBody2D>>, walls: Vec<Wall>) -> Self {
        Self { robot, boxes, walls, time: 0.0 }
    }

    pub fn present_boxes(&self) -> impl Iterator<Item = (usize, &RigidBody2D)> {
        self.boxes.iter().enumerate().filter_map(|(i, b)| b.as_ref().map(|b| (i, b)))
    }

    pub fn box_kinetic_energy(&self) -> f64 {
        self.present_boxes().map(|(_, b)| b.kinetic_energy()).sum()
    }

    /// Deepest overlap between any pair of bodies (0 when none overlap).
    pub fn max_penetration(&self) -> f64 {
        solver::measure_penetration(self)
    }
}

/// Free-space unicycle update: the commanded speed and yaw rate move toward
/// the target under the acceleration limits, then the pose is integrated.
pub fn integrate_unicycle(
    robot: &RigidBody2D,
    action: Action,
    limits: &ActionLimits,
    dt: f64,
) -> Result<RigidBody2D, PhysicsError> {
    if !(dt > 0.0) {
        return Err(PhysicsError::InvalidTimestep(dt));
    }
    let action = action.validated(limits)?;
    let (v, w) = commanded_rates(robot, action, limits, dt);
    let mut out = robot.clone();
    let heading = robot.heading();
    out.pose.x += v * heading.x * dt;
    out.pose.y += v * heading.y * dt;
    out.pose.theta = wrap_angle(robot.pose.theta + w * dt);
    out.linear_velocity = out.heading() * v;
    out.angular_velocity = w;
    Ok(out)
}

fn approach(current: f64, target: f64, max_delta: f64) -> f64 {
    current + (target - current).clamp(-max_delta, max_delta)
}

/// Commanded (speed, yaw rate) for the next step given the robot's current
/// motion and the acceleration limits.
pub(crate) fn commanded_rates(robot: &RigidBody2D, action: Action, limits: &ActionLimits, dt: f64) -> (f64, f64) {
    let v = approach(robot.forward_speed(), action.v_x, limits.accel_max * dt);
    let w = approach(robot.angular_velocity, action.theta_dot_z, limits.angular_accel_max * dt);
    (v, w)
}

/// Advance the world by one physics step of `params.dt` seconds.
pub fn step_world(
    world: &mut WorldState,
    action: Action,
    params: &PhysicsParams,
) -> Result<ContactReport, PhysicsError> {
    if !(params.dt > 0.0) {
        return Err(PhysicsError::InvalidTimestep(params.dt));
    }
    let action = action.validated(&params.limits)?;
    Ok(solver::step(world, action, params))
}
