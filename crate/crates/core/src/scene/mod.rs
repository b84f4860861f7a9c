//! Room families, probabilistic scene generation and the λ curriculum.

mod curriculum;
mod map;
pub mod reach;
mod spawn;

pub use curriculum::{CurriculumState, MapProgress, LAMBDA_STEP, MAX_LEVEL};
pub use map::{
    builtin_map, builtin_map_ids, builtin_source, layout_from_document, load_map, ChallengingPose, MapDocument,
    MapError, MapLayout, Passage, REACH_RESOLUTION, ROBOT_CLEARANCE, TRAINING_MAPS,
};
pub use spawn::{generate_scene, Scene, SceneError, SlotKind, SpawnConfig, BOX_ATTEMPTS, ROBOT_ATTEMPTS};

use crate::math::Vec2;
use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self { min: Vec2::new(xmin, ymin), max: Vec2::new(xmax, ymax) }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    pub fn size(&self) -> Vec2 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.min.x, self.min.y, self.max.x, self.max.y]
    }
}
