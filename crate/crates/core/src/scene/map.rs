//! Room layouts and their validation.

use super::reach::ReachGrid;
use super::Rect;
use crate::math::Vec2;
use crate::physics::{Obb, Pose2D, Wall, ROBOT_WIDTH, WALL_THICKNESS};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Resolution of the validation / reachability grid, meters.
pub const REACH_RESOLUTION: f64 = 0.05;
/// Obstacle inflation for a point robot: the narrow half of the footprint.
pub const ROBOT_CLEARANCE: f64 = 0.5 * ROBOT_WIDTH;

const BUILTIN: [(&str, &str); 9] = [
    ("a", include_str!("../../assets/maps/a.json")),
    ("b", include_str!("../../assets/maps/b.json")),
    ("c", include_str!("../../assets/maps/c.json")),
    ("d", include_str!("../../assets/maps/d.json")),
    ("e", include_str!("../../assets/maps/e.json")),
    ("f", include_str!("../../assets/maps/f.json")),
    ("g", include_str!("../../assets/maps/g.json")),
    ("h", include_str!("../../assets/maps/h.json")),
    ("i", include_str!("../../assets/maps/i.json")),
];

/// Maps used for training; `i` is held out.
pub const TRAINING_MAPS: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("unknown map `{0}`")]
    Unknown(String),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> MapError {
    MapError::Invalid { path: path.into(), message: message.into() }
}

/// On-disk map description. Lengths in meters, angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub id: String,
    /// `[xmin, ymin, xmax, ymax]`; boundary walls are added along it.
    pub bounds: [f64; 4],
    /// Interior wall centerlines `[x1, y1, x2, y2]`.
    pub walls: Vec<[f64; 4]>,
    pub robot_spawn: [f64; 4],
    pub goal_spawn: [f64; 4],
    /// `[x, y, theta, radius]`
    pub challenging_poses: Vec<[f64; 4]>,
    /// `[cx, cy, width]`
    pub passages: Vec<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChallengingPose {
    pub pose: Pose2D,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub center: Vec2,
    pub width: f64,
}

#[derive(Clone, Debug)]
pub struct MapLayout {
    pub id: String,
    pub room_bounds: Rect,
    /// Boundary walls first, then interior walls in document order.
    pub walls: Vec<Wall>,
    pub robot_spawn_region: Rect,
    pub goal_spawn_region: Rect,
    pub challenging_poses: Vec<ChallengingPose>,
    pub passage_descriptors: Vec<Passage>,
    /// Cells reachable by the robot from its spawn region with no boxes.
    pub reachable: Arc<ReachGrid>,
    pub reachable_mask: Arc<Vec<bool>>,
}

impl MapLayout {
    pub fn is_reachable(&self, p: Vec2) -> bool {
        self.reachable.cell(p).is_some_and(|i| self.reachable_mask[i])
    }

    pub fn document(&self) -> MapDocument {
        let b = self.room_bounds;
        MapDocument {
            id: self.id.clone(),
            bounds: [b.min.x, b.min.y, b.max.x, b.max.y],
            walls: self.walls[4..].iter().map(|w| [w.a.x, w.a.y, w.b.x, w.b.y]).collect(),
            robot_spawn: self.robot_spawn_region.to_array(),
            goal_spawn: self.goal_spawn_region.to_array(),
            challenging_poses: self
                .challenging_poses
                .iter()
                .map(|c| [c.pose.x, c.pose.y, c.pose.theta, c.radius])
                .collect(),
            passages: self.passage_descriptors.iter().map(|p| [p.center.x, p.center.y, p.width]).collect(),
        }
    }
}

pub fn builtin_map_ids() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(id, _)| *id)
}

pub fn builtin_source(id: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(k, _)| *k == id).map(|(_, s)| *s)
}

/// Parses and validates one of the shipped maps.
pub fn builtin_map(id: &str) -> Result<MapLayout, MapError> {
    load_map(builtin_source(id).ok_or_else(|| MapError::Unknown(id.to_string()))?)
}

/// Parses a JSON map document and validates it.
pub fn load_map(source: &str) -> Result<MapLayout, MapError> {
    let de = &mut serde_json::Deserializer::from_str(source);
    let doc: MapDocument = serde_path_to_error::deserialize(de).map_err(|e| MapError::Schema {
        path: match e.path().to_string() {
            p if p == "." => "<root>".to_string(),
            p => p,
        },
        message: e.inner().to_string(),
    })?;
    layout_from_document(&doc)
}

fn rect_field(path: &str, r: [f64; 4]) -> Result<Rect, MapError> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(invalid(path, "non-finite coordinate"));
    }
    if r[0] >= r[2] || r[1] >= r[3] {
        return Err(invalid(path, "expected [xmin, ymin, xmax, ymax] with min < max"));
    }
    Ok(Rect::new(r[0], r[1], r[2], r[3]))
}

fn boundary_walls(b: &Rect) -> Vec<Wall> {
    let c = [
        Vec2::new(b.min.x, b.min.y),
        Vec2::new(b.max.x, b.min.y),
        Vec2::new(b.max.x, b.max.y),
        Vec2::new(b.min.x, b.max.y),
    ];
    (0..4).map(|i| Wall::new(c[i], c[(i + 1) % 4], WALL_THICKNESS)).collect()
}

fn wall_obstacles(walls: &[Wall], inflation: f64) -> Vec<(Obb, f64)> {
    walls.iter().map(|w| (w.obb(), inflation)).collect()
}

pub fn layout_from_document(doc: &MapDocument) -> Result<MapLayout, MapError> {
    if doc.id.is_empty() {
        return Err(invalid("id", "must not be empty"));
    }
    let bounds = rect_field("bounds", doc.bounds)?;
    let robot_spawn = rect_field("robot_spawn", doc.robot_spawn)?;
    let goal_spawn = rect_field("goal_spawn", doc.goal_spawn)?;
    for (name, r) in [("robot_spawn", &robot_spawn), ("goal_spawn", &goal_spawn)] {
        if !bounds.contains_rect(r) {
            return Err(invalid(name, "region extends outside bounds"));
        }
    }

    let mut walls = boundary_walls(&bounds);
    for (i, w) in doc.walls.iter().enumerate() {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("walls[{i}]"), "non-finite coordinate"));
        }
        let (a, b) = (Vec2::new(w[0], w[1]), Vec2::new(w[2], w[3]));
        if (b - a).length() < 1e-6 {
            return Err(invalid(format!("walls[{i}]"), "zero-length wall"));
        }
        walls.push(Wall::new(a, b, WALL_THICKNESS));
    }

    let mut challenging = Vec::with_capacity(doc.challenging_poses.len());
    for (i, c) in doc.challenging_poses.iter().enumerate() {
        let path = format!("challenging_poses[{i}]");
        if c.iter().any(|v| !v.is_finite()) {
            return Err(invalid(path, "non-finite value"));
        }
        if !bounds.contains(Vec2::new(c[0], c[1])) {
            return Err(invalid(path, "pose lies outside bounds"));
        }
        if c[3] < 0.0 {
            return Err(invalid(format!("{path}.radius"), "must be non-negative"));
        }
        challenging.push(ChallengingPose { pose: Pose2D::new(c[0], c[1], c[2]), radius: c[3] });
    }

    if doc.passages.is_empty() {
        return Err(invalid("passages", "at least one passage is required"));
    }
    let mut passages = Vec::with_capacity(doc.passages.len());
    for (i, p) in doc.passages.iter().enumerate() {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("passages[{i}]"), "non-finite value"));
        }
        if !(1.0..=2.0).contains(&p[2]) {
            return Err(invalid(format!("passages[{i}].width"), format!("width {} outside [1, 2] m", p[2])));
        }
        passages.push(Passage { center: Vec2::new(p[0], p[1]), width: p[2] });
    }

    // Connectivity with no boxes.
    let grid = ReachGrid::new(bounds, REACH_RESOLUTION, &wall_obstacles(&walls, ROBOT_CLEARANCE));
    let spawn_cells = grid.free_cells_in(&robot_spawn);
    let goal_cells = grid.free_cells_in(&goal_spawn);
    if spawn_cells.is_empty() {
        return Err(invalid("robot_spawn", "no free space inside region"));
    }
    if goal_cells.is_empty() {
        return Err(invalid("goal_spawn", "no free space inside region"));
    }
    let mask = grid.flood(&spawn_cells[..1]);
    if let Some(&c) = spawn_cells.iter().find(|&&c| !mask[c]) {
        let p = grid.cell_center(c);
        return Err(invalid("robot_spawn", format!("region is not connected (cell at ({:.2}, {:.2}))", p.x, p.y)));
    }
    if goal_cells.iter().any(|&c| !mask[c]) {
        return Err(invalid("goal_spawn", "not reachable from robot_spawn with all boxes absent"));
    }

    // Blocking every passage must separate the two regions.
    let mut blocked = wall_obstacles(&walls, ROBOT_CLEARANCE);
    for p in &passages {
        let plug = Obb::new(p.center, 0.0, Vec2::ZERO);
        blocked.push((plug, 0.5 * p.width + WALL_THICKNESS + ROBOT_CLEARANCE));
    }
    let plugged = ReachGrid::new(bounds, REACH_RESOLUTION, &blocked);
    let seen = plugged.flood(&plugged.free_cells_in(&robot_spawn));
    if plugged.free_cells_in(&goal_spawn).iter().any(|&c| seen[c]) {
        return Err(invalid("passages", "goal region reachable without crossing a listed passage"));
    }

    Ok(MapLayout {
        id: doc.id.clone(),
        room_bounds: bounds,
        walls,
        robot_spawn_region: robot_spawn,
        goal_spawn_region: goal_spawn,
        challenging_poses: challenging,
        passage_descriptors: passages,
        reachable: Arc::new(grid),
        reachable_mask: Arc::new(mask),
    })
}
