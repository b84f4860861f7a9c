//! Sequential-impulse step for one world.

use super::collide::{collide, Manifold, Obb};
use super::{commanded_rates, Action, ContactReport, PhysicsParams, WorldState};
use crate::math::{wrap_angle, Vec2};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Robot,
    Box(usize),
    Wall,
}

#[derive(Clone, Copy)]
struct Body {
    kind: Kind,
    pos: Vec2,
    theta: f64,
    vel: Vec2,
    omega: f64,
    half: Vec2,
    inv_m: f64,
    inv_i: f64,
    mass: f64,
    inertia: f64,
}

impl Body {
    fn obb(&self) -> Obb {
        Obb::new(self.pos, self.theta, self.half)
    }

    fn is_static(&self) -> bool {
        self.inv_m == 0.0 && self.inv_i == 0.0
    }
}

#[derive(Clone, Copy, Default)]
struct PointConstraint {
    r_a: Vec2,
    r_b: Vec2,
    normal_mass: f64,
    tangent_mass: f64,
    normal_impulse: f64,
    tangent_impulse: f64,
    bias: f64,
}

struct ContactConstraint {
    a: usize,
    b: usize,
    normal: Vec2,
    friction: f64,
    points: [PointConstraint; 2],
    count: usize,
}

fn gather(world: &WorldState) -> Vec<Body> {
    let mut bodies = Vec::with_capacity(1 + world.boxes.len() + world.walls.len());
    let r = &world.robot;
    bodies.push(Body {
        kind: Kind::Robot,
        pos: r.pose.position(),
        theta: r.pose.theta,
        vel: r.linear_velocity,
        omega: r.angular_velocity,
        half: r.half_extents,
        inv_m: r.inv_mass(),
        inv_i: r.inv_inertia(),
        mass: r.mass,
        inertia: r.inertia,
    });
    for (i, b) in world.present_boxes() {
        bodies.push(Body {
            kind: Kind::Box(i),
            pos: b.pose.position(),
            theta: b.pose.theta,
            vel: b.linear_velocity,
            omega: b.angular_velocity,
            half: b.half_extents,
            inv_m: b.inv_mass(),
            inv_i: b.inv_inertia(),
            mass: b.mass,
            inertia: b.inertia,
        });
    }
    for w in &world.walls {
        let o = w.obb();
        bodies.push(Body {
            kind: Kind::Wall,
            pos: o.center,
            theta: o.rot.y.atan2(o.rot.x),
            vel: Vec2::ZERO,
            omega: 0.0,
            half: o.half,
            inv_m: 0.0,
            inv_i: 0.0,
            mass: f64::INFINITY,
            inertia: f64::INFINITY,
        });
    }
    bodies
}

/// Candidate pairs in a fixed order; static–static pairs are skipped.
fn pairs(bodies: &[Body]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..bodies.len() {
        if bodies[i].kind == Kind::Wall {
            break;
        }
        for j in (i + 1)..bodies.len() {
            if bodies[i].is_static() && bodies[j].is_static() {
                continue;
            }
            out.push((i, j));
        }
    }
    out
}

fn friction_for(a: Kind, b: Kind, p: &PhysicsParams) -> f64 {
    match (a, b) {
        (Kind::Robot, Kind::Box(_)) | (Kind::Box(_), Kind::Robot) => p.robot_box_friction,
        (Kind::Box(_), Kind::Box(_)) => p.box_box_friction,
        _ => p.wall_friction,
    }
}

fn build_constraint(bodies: &[Body], a: usize, b: usize, m: &Manifold, p: &PhysicsParams) -> ContactConstraint {
    let ba = &bodies[a];
    let bb = &bodies[b];
    let n = m.normal;
    let t = n.perp();
    let mut c = ContactConstraint {
        a,
        b,
        normal: n,
        friction: friction_for(ba.kind, bb.kind, p),
        points: [PointConstraint::default(); 2],
        count: m.count,
    };
    for (k, cp) in m.points().iter().enumerate() {
        let r_a = cp.point - ba.pos;
        let r_b = cp.point - bb.pos;
        let rn_a = r_a.cross(n);
        let rn_b = r_b.cross(n);
        let kn = ba.inv_m + bb.inv_m + ba.inv_i * rn_a * rn_a + bb.inv_i * rn_b * rn_b;
        let rt_a = r_a.cross(t);
        let rt_b = r_b.cross(t);
        let kt = ba.inv_m + bb.inv_m + ba.inv_i * rt_a * rt_a + bb.inv_i * rt_b * rt_b;
        c.points[k] = PointConstraint {
            r_a,
            r_b,
            normal_mass: if kn > 0.0 { 1.0 / kn } else { 0.0 },
            tangent_mass: if kt > 0.0 { 1.0 / kt } else { 0.0 },
            normal_impulse: 0.0,
            tangent_impulse: 0.0,
            // speculative gap closing when apart, Baumgarte push-out when overlapping
            bias: if cp.separation > 0.0 {
                cp.separation / p.dt
            } else {
                ((p.velocity_baumgarte * (cp.separation + p.linear_slop)).min(0.0) / p.dt).max(-p.max_push_out_speed)
            },
        };
    }
    c
}

fn apply_impulse(bodies: &mut [Body], a: usize, b: usize, r_a: Vec2, r_b: Vec2, impulse: Vec2) {
    let (ia_m, ia_i) = (bodies[a].inv_m, bodies[a].inv_i);
    bodies[a].vel -= impulse * ia_m;
    bodies[a].omega -= ia_i * r_a.cross(impulse);
    let (ib_m, ib_i) = (bodies[b].inv_m, bodies[b].inv_i);
    bodies[b].vel += impulse * ib_m;
    bodies[b].omega += ib_i * r_b.cross(impulse);
}

fn solve_contact(bodies: &mut [Body], c: &mut ContactConstraint) {
    let n = c.normal;
    let t = n.perp();
    for k in 0..c.count {
        let pc = c.points[k];
        // friction first, bounded by the current normal impulse
        let dv = relative_velocity(bodies, c.a, c.b, pc.r_a, pc.r_b);
        let lambda = -pc.tangent_mass * dv.dot(t);
        let max_f = c.friction * pc.normal_impulse;
        let new_t = (pc.tangent_impulse + lambda).clamp(-max_f, max_f);
        let applied = new_t - pc.tangent_impulse;
        c.points[k].tangent_impulse = new_t;
        apply_impulse(bodies, c.a, c.b, pc.r_a, pc.r_b, t * applied);

        let dv = relative_velocity(bodies, c.a, c.b, pc.r_a, pc.r_b);
        let vn = dv.dot(n);
        let lambda = -pc.normal_mass * (vn + pc.bias);
        let new_n = (c.points[k].normal_impulse + lambda).max(0.0);
        let applied = new_n - c.points[k].normal_impulse;
        c.points[k].normal_impulse = new_n;
        apply_impulse(bodies, c.a, c.b, pc.r_a, pc.r_b, n * applied);
    }
}

#[inline]
fn relative_velocity(bodies: &[Body], a: usize, b: usize, r_a: Vec2, r_b: Vec2) -> Vec2 {
    let ba = &bodies[a];
    let bb = &bodies[b];
    bb.vel + Vec2::cross_sv(bb.omega, r_b) - ba.vel - Vec2::cross_sv(ba.omega, r_a)
}

/// Force-capped motor holding the robot on its commanded unicycle motion.
struct Drive {
    forward: Vec2,
    v_cmd: f64,
    w_cmd: f64,
    max_forward: f64,
    max_lateral: f64,
    max_torque: f64,
    acc_forward: f64,
    acc_lateral: f64,
    acc_torque: f64,
}

impl Drive {
    fn solve(&mut self, robot: &mut Body) {
        let f = self.forward;
        let l = f.perp();

        let lambda = -robot.mass * (robot.vel.dot(f) - self.v_cmd);
        let new = (self.acc_forward + lambda).clamp(-self.max_forward, self.max_forward);
        robot.vel += f * ((new - self.acc_forward) * robot.inv_m);
        self.acc_forward = new;

        let lambda = -robot.mass * robot.vel.dot(l);
        let new = (self.acc_lateral + lambda).clamp(-self.max_lateral, self.max_lateral);
        robot.vel += l * ((new - self.acc_lateral) * robot.inv_m);
        self.acc_lateral = new;

        let lambda = -robot.inertia * (robot.omega - self.w_cmd);
        let new = (self.acc_torque + lambda).clamp(-self.max_torque, self.max_torque);
        robot.omega += (new - self.acc_torque) * robot.inv_i;
        self.acc_torque = new;
    }
}

/// Coulomb floor friction on one box, as a bounded velocity constraint.
struct FloorFriction {
    body: usize,
    max_linear: f64,
    max_angular: f64,
    acc_linear: Vec2,
    acc_angular: f64,
}

impl FloorFriction {
    fn solve(&mut self, b: &mut Body) {
        let lambda = -(b.vel * b.mass);
        let mut new = self.acc_linear + lambda;
        let len = new.length();
        if len > self.max_linear {
            new = new * (self.max_linear / len);
        }
        b.vel += (new - self.acc_linear) * b.inv_m;
        self.acc_linear = new;

        let lambda = -b.inertia * b.omega;
        let new = (self.acc_angular + lambda).clamp(-self.max_angular, self.max_angular);
        b.omega += (new - self.acc_angular) * b.inv_i;
        self.acc_angular = new;
    }
}

fn detect(bodies: &[Body], pairs: &[(usize, usize)], margin: f64) -> Vec<(usize, usize, Manifold)> {
    let obbs: Vec<Obb> = bodies.iter().map(Body::obb).collect();
    pairs
        .iter()
        .filter_map(|&(a, b)| collide(&obbs[a], &obbs[b], margin).map(|m| (a, b, m)))
        .collect()
}

fn project_positions(bodies: &mut [Body], pairs: &[(usize, usize)], p: &PhysicsParams) {
    for &(a, b) in pairs {
        let Some(m) = collide(&bodies[a].obb(), &bodies[b].obb(), 0.0) else {
            continue;
        };
        let n = m.normal;
        for cp in m.points() {
            let c = (p.baumgarte * (cp.separation + p.linear_slop)).clamp(-p.max_correction, 0.0);
            if c == 0.0 {
                continue;
            }
            let r_a = cp.point - bodies[a].pos;
            let r_b = cp.point - bodies[b].pos;
            let rn_a = r_a.cross(n);
            let rn_b = r_b.cross(n);
            let k = bodies[a].inv_m + bodies[b].inv_m + bodies[a].inv_i * rn_a * rn_a + bodies[b].inv_i * rn_b * rn_b;
            if k <= 0.0 {
                continue;
            }
            let impulse = n * (-c / k);
            let (ma, ia) = (bodies[a].inv_m, bodies[a].inv_i);
            bodies[a].pos -= impulse * ma;
            bodies[a].theta -= ia * r_a.cross(impulse);
            let (mb, ib) = (bodies[b].inv_m, bodies[b].inv_i);
            bodies[b].pos += impulse * mb;
            bodies[b].theta += ib * r_b.cross(impulse);
        }
    }
}

pub(super) fn measure_penetration(world: &WorldState) -> f64 {
    let bodies = gather(world);
    let pairs = pairs(&bodies);
    detect(&bodies, &pairs, 0.0)
        .iter()
        .map(|(_, _, m)| (-m.min_separation()).max(0.0))
        .fold(0.0, f64::max)
}

pub(super) fn step(world: &mut WorldState, action: Action, p: &PhysicsParams) -> ContactReport {
    let dt = p.dt;
    let mut bodies = gather(world);
    let pairs = pairs(&bodies);

    let (v_cmd, w_cmd) = commanded_rates(&world.robot, action, &p.limits, dt);
    let mut drive = Drive {
        forward: world.robot.heading(),
        v_cmd,
        w_cmd,
        max_forward: p.push_force_max * dt,
        max_lateral: p.lateral_force_max * dt,
        max_torque: p.drive_torque_max * dt,
        acc_forward: 0.0,
        acc_lateral: 0.0,
        acc_torque: 0.0,
    };
    let mut floor: Vec<FloorFriction> = bodies
        .iter()
        .enumerate()
        .filter(|(_, b)| matches!(b.kind, Kind::Box(_)) && !b.is_static())
        .map(|(i, b)| {
            let normal_force = p.floor_friction * b.mass * p.gravity;
            // mean lever arm of a uniformly loaded square ≈ 0.383·side
            let lever = 0.383 * 2.0 * b.half.x.max(b.half.y);
            FloorFriction {
                body: i,
                max_linear: normal_force * dt,
                max_angular: normal_force * lever * dt,
                acc_linear: Vec2::ZERO,
                acc_angular: 0.0,
            }
        })
        .collect();

    let manifolds = detect(&bodies, &pairs, p.speculative_margin);
    let mut contacts: Vec<ContactConstraint> =
        manifolds.iter().map(|(a, b, m)| build_constraint(&bodies, *a, *b, m, p)).collect();

    for _ in 0..p.velocity_iterations {
        if world.robot.movable {
            drive.solve(&mut bodies[0]);
        }
        for f in floor.iter_mut() {
            let i = f.body;
            f.solve(&mut bodies[i]);
        }
        for c in contacts.iter_mut() {
            solve_contact(&mut bodies, c);
        }
    }

    for b in bodies.iter_mut().filter(|b| !b.is_static()) {
        b.pos += b.vel * dt;
        b.theta += b.omega * dt;
    }

    for _ in 0..p.position_iterations {
        project_positions(&mut bodies, &pairs, p);
    }

    // contact flags: pushed this step, or still touching afterwards
    let mut pushed = vec![false; pairs.len()];
    for c in &contacts {
        if c.points[..c.count].iter().any(|pc| pc.normal_impulse > 0.0) {
            if let Some(k) = pairs.iter().position(|&pr| pr == (c.a, c.b)) {
                pushed[k] = true;
            }
        }
    }
    let mut report = ContactReport::default();
    let after = detect(&bodies, &pairs, 0.0);
    for (a, b, m) in &after {
        report.max_penetration = report.max_penetration.max((-m.min_separation()).max(0.0));
        if let Some(k) = pairs.iter().position(|&pr| pr == (*a, *b)) {
            pushed[k] = true;
        }
    }
    for (k, &(a, b)) in pairs.iter().enumerate() {
        if !pushed[k] {
            continue;
        }
        match (bodies[a].kind, bodies[b].kind) {
            (Kind::Robot, Kind::Wall) => report.robot_wall_contact = true,
            (Kind::Robot, Kind::Box(i)) => report.robot_box_contacts.push(i),
            (Kind::Box(i), Kind::Wall) => report.box_wall_contacts.push(i),
            _ => {}
        }
    }
    report.robot_box_contacts.sort_unstable();
    report.robot_box_contacts.dedup();
    report.box_wall_contacts.sort_unstable();
    report.box_wall_contacts.dedup();

    // write back dynamic state
    for b in &bodies {
        let target = match b.kind {
            Kind::Robot => &mut world.robot,
            Kind::Box(i) => world.boxes[i].as_mut().expect("present box"),
            Kind::Wall => continue,
        };
        if !target.movable {
            continue;
        }
        target.pose.x = b.pos.x;
        target.pose.y = b.pos.y;
        target.pose.theta = wrap_angle(b.theta);
        target.linear_velocity = b.vel;
        target.angular_velocity = b.omega;
    }
    world.time += dt;
    report
}
