//! Top-down rendering of maps and trajectory logs.

use image::{Rgb, RgbImage};
use namo_core::io::{StepRecord, TrajectoryLog};
use namo_core::math::Vec2;
use namo_core::physics::{body_vertices, box_body, robot_body, Pose2D, Wall};
use namo_core::scene::{layout_from_document, MapLayout, Rect};
use std::path::{Path, PathBuf};

pub const SIZE: u32 = 512;

pub const BACKGROUND: Rgb<u8> = Rgb([246, 246, 242]);
pub const WALL: Rgb<u8> = Rgb([40, 40, 46]);
pub const BOX: Rgb<u8> = Rgb([255, 184, 28]);
pub const BOX_EDGE: Rgb<u8> = Rgb([150, 96, 0]);
pub const ROBOT: Rgb<u8> = Rgb([128, 128, 128]);
pub const HEADING: Rgb<u8> = Rgb([30, 30, 30]);
pub const GOAL: Rgb<u8> = Rgb([40, 170, 60]);
pub const TRAIL: Rgb<u8> = Rgb([90, 90, 160]);

/// An image whose pixels cover the room bounds, y up.
pub struct Canvas {
    pub img: RgbImage,
    bounds: Rect,
    scale: f64,
}

impl Canvas {
    pub fn new(bounds: Rect) -> Self {
        let span = (bounds.max.x - bounds.min.x).max(bounds.max.y - bounds.min.y);
        Self { img: RgbImage::from_pixel(SIZE, SIZE, BACKGROUND), bounds, scale: SIZE as f64 / span }
    }

    /// Pixel-space coordinates (continuous) of a world point.
    pub fn to_pixel(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.bounds.min.x) * self.scale, (self.bounds.max.y - p.y) * self.scale)
    }

    fn blend(&mut self, x: i64, y: i64, c: Rgb<u8>, alpha: f64) {
        if x < 0 || y < 0 || x >= SIZE as i64 || y >= SIZE as i64 {
            return;
        }
        let px = self.img.get_pixel_mut(x as u32, y as u32);
        for k in 0..3 {
            px.0[k] = (px.0[k] as f64 * (1.0 - alpha) + c.0[k] as f64 * alpha).round() as u8;
        }
    }

    /// Fills a convex polygon given in world coordinates.
    pub fn fill_convex(&mut self, pts: &[Vec2], c: Rgb<u8>, alpha: f64) {
        let px: Vec<(f64, f64)> = pts.iter().map(|&p| self.to_pixel(p)).collect();
        let (x0, x1) = px.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (y0, y1) = px.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
        let area: f64 = (0..px.len())
            .map(|i| {
                let (a, b) = (px[i], px[(i + 1) % px.len()]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum();
        let sign = area.signum();
        for y in y0.floor() as i64..=y1.ceil() as i64 {
            for x in x0.floor() as i64..=x1.ceil() as i64 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let inside = (0..px.len()).all(|i| {
                    let (a, b) = (px[i], px[(i + 1) % px.len()]);
                    sign * ((b.0 - a.0) * (cy - a.1) - (b.1 - a.1) * (cx - a.0)) >= 0.0
                });
                if inside {
                    self.blend(x, y, c, alpha);
                }
            }
        }
    }

    pub fn line(&mut self, a: Vec2, b: Vec2, width_px: f64, c: Rgb<u8>, alpha: f64) {
        let (pa, pb) = (self.to_pixel(a), self.to_pixel(b));
        let r = 0.5 * width_px;
        let (x0, x1) = (pa.0.min(pb.0) - r, pa.0.max(pb.0) + r);
        let (y0, y1) = (pa.1.min(pb.1) - r, pa.1.max(pb.1) + r);
        let d = (pb.0 - pa.0, pb.1 - pa.1);
        let len2 = d.0 * d.0 + d.1 * d.1;
        for y in y0.floor() as i64..=y1.ceil() as i64 {
            for x in x0.floor() as i64..=x1.ceil() as i64 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 { (((cx - pa.0) * d.0 + (cy - pa.1) * d.1) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (qx, qy) = (pa.0 + t * d.0 - cx, pa.1 + t * d.1 - cy);
                if qx * qx + qy * qy <= r * r {
                    self.blend(x, y, c, alpha);
                }
            }
        }
    }

    pub fn polyline_closed(&mut self, pts: &[Vec2], width_px: f64, c: Rgb<u8>, alpha: f64) {
        for i in 0..pts.len() {
            self.line(pts[i], pts[(i + 1) % pts.len()], width_px, c, alpha);
        }
    }

    pub fn disk(&mut self, center: Vec2, radius: f64, c: Rgb<u8>, alpha: f64) {
        let (px, py) = self.to_pixel(center);
        let r = radius * self.scale;
        for y in (py - r).floor() as i64..=(py + r).ceil() as i64 {
            for x in (px - r).floor() as i64..=(px + r).ceil() as i64 {
                let (dx, dy) = (x as f64 + 0.5 - px, y as f64 + 0.5 - py);
                if dx * dx + dy * dy <= r * r {
                    self.blend(x, y, c, alpha);
                }
            }
        }
    }
}

pub fn draw_walls(c: &mut Canvas, walls: &[Wall]) {
    for w in walls {
        c.fill_convex(&w.obb().vertices(), WALL, 1.0);
    }
}

fn draw_box(c: &mut Canvas, pose: Pose2D, alpha: f64) {
    let v = body_vertices(&box_body(pose));
    c.fill_convex(&v, BOX, alpha);
    c.polyline_closed(&v, 2.0, BOX_EDGE, alpha);
    for p in v {
        c.disk(p, 0.025, BOX_EDGE, alpha);
    }
}

fn draw_robot(c: &mut Canvas, pose: Pose2D) {
    let body = robot_body(pose);
    c.fill_convex(&body_vertices(&body), ROBOT, 1.0);
    let p = pose.position();
    c.line(p, p + body.heading() * (body.half_extents.x + 0.1), 3.0, HEADING, 1.0);
}

fn draw_trail(c: &mut Canvas, points: &[Vec2]) {
    let n = points.len();
    for (i, w) in points.windows(2).enumerate() {
        let age = (n - 1 - i) as f64 / n.max(1) as f64;
        c.line(w[0], w[1], 3.0, TRAIL, 0.15 + 0.65 * (1.0 - age));
    }
}

/// The static map with spawn regions outlined.
pub fn render_map(map: &MapLayout) -> RgbImage {
    let mut c = Canvas::new(map.room_bounds);
    for (r, col) in [(map.robot_spawn_region, ROBOT), (map.goal_spawn_region, GOAL)] {
        let pts = [r.min, Vec2::new(r.max.x, r.min.y), r.max, Vec2::new(r.min.x, r.max.y)];
        c.fill_convex(&pts, col, 0.15);
    }
    for cp in &map.challenging_poses {
        draw_box(&mut c, cp.pose, 0.35);
    }
    draw_walls(&mut c, &map.walls);
    c.img
}

pub struct Scene<'a> {
    pub map: &'a MapLayout,
    pub log: &'a TrajectoryLog,
}

impl Scene<'_> {
    fn goal(&self) -> Vec2 {
        Vec2::new(self.log.header.goal[0], self.log.header.goal[1])
    }

    fn trail_until(&self, k: usize) -> Vec<Vec2> {
        std::iter::once(self.log.header.robot.position())
            .chain(self.log.records[..k].iter().map(|r| r.robot.position()))
            .collect()
    }

    fn base(&self) -> Canvas {
        let mut c = Canvas::new(self.map.room_bounds);
        c.disk(self.goal(), self.log.header.goal_radius, GOAL, 0.9);
        c
    }

    /// Frame `k`: the state after `k` steps (0 is the initial state).
    pub fn frame(&self, k: usize) -> RgbImage {
        let mut c = self.base();
        let (robot, boxes) = match k {
            0 => (self.log.header.robot, &self.log.header.boxes),
            _ => {
                let r: &StepRecord = &self.log.records[k - 1];
                (r.robot, &r.boxes)
            }
        };
        draw_trail(&mut c, &self.trail_until(k));
        for b in boxes.iter().flatten() {
            draw_box(&mut c, *b, 1.0);
        }
        draw_walls(&mut c, &self.map.walls);
        draw_robot(&mut c, robot);
        c.img
    }

    /// Initial boxes faded, final boxes solid, and the full robot path.
    pub fn summary(&self) -> RgbImage {
        let mut c = self.base();
        for b in self.log.header.boxes.iter().flatten() {
            draw_box(&mut c, *b, 0.3);
        }
        let last = self.log.records.last();
        let boxes = last.map(|r| &r.boxes).unwrap_or(&self.log.header.boxes);
        for b in boxes.iter().flatten() {
            draw_box(&mut c, *b, 1.0);
        }
        draw_walls(&mut c, &self.map.walls);
        let trail = self.trail_until(self.log.records.len());
        for w in trail.windows(2) {
            c.line(w[0], w[1], 3.0, TRAIL, 0.9);
        }
        draw_robot(&mut c, last.map(|r| r.robot).unwrap_or(self.log.header.robot));
        c.img
    }
}

/// Writes `frame_NNNN.png` for every state plus `summary.png`.
pub fn render_log(log: &TrajectoryLog, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let map = layout_from_document(&log.header.map)?;
    let scene = Scene { map: &map, log };
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for k in 0..=log.records.len() {
        let path = out.join(format!("frame_{k:04}.png"));
        scene.frame(k).save(&path)?;
        written.push(path);
    }
    let path = out.join("summary.png");
    scene.summary().save(&path)?;
    written.push(path);
    Ok(written)
}
