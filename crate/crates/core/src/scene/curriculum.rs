//! Per-map difficulty schedule over λ.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

pub const LAMBDA_STEP: f64 = 0.2;
pub const MAX_LEVEL: u32 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapProgress {
    /// λ = level · 0.2
    pub level: u32,
    pub window: VecDeque<bool>,
}

impl MapProgress {
    pub fn lambda(&self) -> f64 {
        self.level as f64 * LAMBDA_STEP
    }

    pub fn completion_rate(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().filter(|&&s| s).count() as f64 / self.window.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub capacity: usize,
    pub threshold: f64,
    pub maps: BTreeMap<String, MapProgress>,
}

impl CurriculumState {
    /// All maps start at `start_level` (1 → λ = 0.2).
    pub fn new<'a>(maps: impl IntoIterator<Item = &'a str>, start_level: u32, capacity: usize, threshold: f64) -> Self {
        let level = start_level.clamp(1, MAX_LEVEL);
        Self {
            capacity,
            threshold,
            maps: maps
                .into_iter()
                .map(|m| (m.to_string(), MapProgress { level, window: VecDeque::with_capacity(capacity) }))
                .collect(),
        }
    }

    pub fn with_defaults<'a>(maps: impl IntoIterator<Item = &'a str>) -> Self {
        Self::new(maps, 1, 200, 0.9)
    }

    pub fn lambda(&self, map: &str) -> Option<f64> {
        self.maps.get(map).map(MapProgress::lambda)
    }

    /// Records an outcome; returns the new λ when it was raised.
    ///
    /// # Panics
    /// If `map` was not registered.
    pub fn update(&mut self, map: &str, success: bool) -> Option<f64> {
        let cap = self.capacity;
        let m = self.maps.get_mut(map).unwrap_or_else(|| panic!("unknown map `{map}` in curriculum"));
        if m.window.len() == cap {
            m.window.pop_front();
        }
        m.window.push_back(success);
        if m.window.len() == cap && m.completion_rate() >= self.threshold && m.level < MAX_LEVEL {
            m.level += 1;
            m.window.clear();
            return Some(m.lambda());
        }
        None
    }
}
