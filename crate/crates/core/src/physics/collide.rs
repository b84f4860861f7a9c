//! Narrow-phase contact generation between oriented rectangles.
//!
//! Reference-face / incident-edge clipping for convex quads, producing at
//! most two contact points per pair. Normals point from shape A to shape B.

use crate::math::Vec2;

/// An oriented rectangle in world space.
#[derive(Clone, Copy, Debug)]
pub struct Obb {
    pub center: Vec2,
    /// (cos θ, sin θ)
    pub rot: Vec2,
    pub half: Vec2,
}

const LOCAL_NORMALS: [Vec2; 4] = [
    Vec2::new(0.0, 1.0),
    Vec2::new(-1.0, 0.0),
    Vec2::new(0.0, -1.0),
    Vec2::new(1.0, 0.0),
];

impl Obb {
    pub fn new(center: Vec2, theta: f64, half: Vec2) -> Self {
        Self { center, rot: Vec2::from_angle(theta), half }
    }

    /// World-frame corners, counter-clockwise from body-frame (+x, +y).
    pub fn vertices(&self) -> [Vec2; 4] {
        let h = self.half;
        [
            Vec2::new(h.x, h.y),
            Vec2::new(-h.x, h.y),
            Vec2::new(-h.x, -h.y),
            Vec2::new(h.x, -h.y),
        ]
        .map(|v| self.center + v.rotate(self.rot))
    }

    /// Outward world normal of edge `i` (from vertex i to vertex i+1).
    #[inline]
    pub fn normal(&self, i: usize) -> Vec2 {
        LOCAL_NORMALS[i].rotate(self.rot)
    }

    /// Half-size of the axis-aligned box enclosing this rectangle.
    pub fn aabb_half(&self) -> Vec2 {
        let c = self.rot.x.abs();
        let s = self.rot.y.abs();
        Vec2::new(c * self.half.x + s * self.half.y, s * self.half.x + c * self.half.y)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let l = (p - self.center).unrotate(self.rot);
        l.x.abs() <= self.half.x && l.y.abs() <= self.half.y
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ContactPoint {
    /// Midpoint between the two surfaces, world frame.
    pub point: Vec2,
    /// Signed distance along the normal; negative means overlap.
    pub separation: f64,
}

#[derive(Clone, Debug)]
pub struct Manifold {
    pub normal: Vec2,
    pub points: [ContactPoint; 2],
    pub count: usize,
}

impl Manifold {
    pub fn points(&self) -> &[ContactPoint] {
        &self.points[..self.count]
    }

    pub fn min_separation(&self) -> f64 {
        self.points().iter().map(|p| p.separation).fold(f64::INFINITY, f64::min)
    }
}

fn aabb_overlap(a: &Obb, b: &Obb, margin: f64) -> bool {
    let ha = a.aabb_half();
    let hb = b.aabb_half();
    let d = b.center - a.center;
    d.x.abs() <= ha.x + hb.x + margin && d.y.abs() <= ha.y + hb.y + margin
}

/// Largest separation of `b` from the edge planes of `a`.
fn max_separation(a: &Obb, va: &[Vec2; 4], vb: &[Vec2; 4]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..4 {
        let n = a.normal(i);
        let s = vb
            .iter()
            .map(|&v| n.dot(v - va[i]))
            .fold(f64::INFINITY, f64::min);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

fn clip_segment(seg: [Vec2; 2], n: Vec2, offset: f64) -> Option<[Vec2; 2]> {
    let d0 = n.dot(seg[0]) - offset;
    let d1 = n.dot(seg[1]) - offset;
    match (d0 <= 0.0, d1 <= 0.0) {
        (true, true) => Some(seg),
        (false, false) => None,
        (in0, _) => {
            let t = d0 / (d0 - d1);
            let p = seg[0] + (seg[1] - seg[0]) * t;
            if in0 {
                Some([seg[0], p])
            } else {
                Some([p, seg[1]])
            }
        }
    }
}

/// Contact manifold between two rectangles, or `None` when they are
/// farther apart than `margin`.
pub fn collide(a: &Obb, b: &Obb, margin: f64) -> Option<Manifold> {
    if !aabb_overlap(a, b, margin) {
        return None;
    }
    let va = a.vertices();
    let vb = b.vertices();
    let (edge_a, sep_a) = max_separation(a, &va, &vb);
    if sep_a > margin {
        return None;
    }
    let (edge_b, sep_b) = max_separation(b, &vb, &va);
    if sep_b > margin {
        return None;
    }

    // prefer A as reference unless B is clearly better
    let flip = sep_b > sep_a + 0.1 * 0.005;
    let (rf, rv, redge, iv, inc) = if flip {
        (b, &vb, edge_b, &va, a)
    } else {
        (a, &va, edge_a, &vb, b)
    };
    let ref_n = rf.normal(redge);

    // incident edge: most anti-parallel normal on the other body
    let mut inc_edge = 0;
    let mut min_dot = f64::INFINITY;
    for i in 0..4 {
        let d = ref_n.dot(inc.normal(i));
        if d < min_dot {
            min_dot = d;
            inc_edge = i;
        }
    }
    let seg = [iv[inc_edge], iv[(inc_edge + 1) % 4]];

    let v1 = rv[redge];
    let v2 = rv[(redge + 1) % 4];
    let tangent = (v2 - v1).normalized();
    let seg = clip_segment(seg, -tangent, -tangent.dot(v1))?;
    let seg = clip_segment(seg, tangent, tangent.dot(v2))?;

    let mut m = Manifold {
        normal: if flip { -ref_n } else { ref_n },
        points: [ContactPoint { point: Vec2::ZERO, separation: 0.0 }; 2],
        count: 0,
    };
    for p in seg {
        let s = ref_n.dot(p - v1);
        if s <= margin {
            m.points[m.count] = ContactPoint { point: p - ref_n * (0.5 * s), separation: s };
            m.count += 1;
        }
    }
    if m.count == 0 {
        None
    } else {
        Some(m)
    }
}
