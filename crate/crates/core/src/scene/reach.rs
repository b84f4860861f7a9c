//! Coarse configuration-space occupancy for connectivity queries.
//!
//! The robot is reduced to a point and obstacles are inflated by a fixed
//! radius. Used for map validation, spawn-region masks, and failure
//! classification.

use crate::math::Vec2;
use crate::physics::Obb;
use std::collections::VecDeque;

use super::Rect;

/// Signed-free distance from `p` to the rectangle (0 inside).
pub fn distance_to_obb(o: &Obb, p: Vec2) -> f64 {
    let l = (p - o.center).unrotate(o.rot);
    let dx = (l.x.abs() - o.half.x).max(0.0);
    let dy = (l.y.abs() - o.half.y).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

#[derive(Clone, Debug)]
pub struct ReachGrid {
    pub bounds: Rect,
    pub resolution: f64,
    pub cols: usize,
    pub rows: usize,
    free: Vec<bool>,
}

impl ReachGrid {
    /// Cells whose centers are farther than `inflation` from every obstacle.
    pub fn new(bounds: Rect, resolution: f64, obstacles: &[(Obb, f64)]) -> Self {
        let cols = ((bounds.max.x - bounds.min.x) / resolution).round() as usize;
        let rows = ((bounds.max.y - bounds.min.y) / resolution).round() as usize;
        let mut free = vec![true; cols * rows];
        for (o, inflation) in obstacles {
            let h = o.aabb_half();
            let reach = Vec2::new(h.x + inflation, h.y + inflation);
            let (c0, r0) = Self::index_of(bounds, resolution, o.center - reach);
            let (c1, r1) = Self::index_of(bounds, resolution, o.center + reach);
            for r in r0.max(0)..=r1.min(rows as i64 - 1) {
                for c in c0.max(0)..=c1.min(cols as i64 - 1) {
                    let idx = r as usize * cols + c as usize;
                    if free[idx] {
                        let p = Self::center_of(bounds, resolution, c as usize, r as usize);
                        if distance_to_obb(o, p) <= *inflation {
                            free[idx] = false;
                        }
                    }
                }
            }
        }
        Self { bounds, resolution, cols, rows, free }
    }

    fn index_of(bounds: Rect, res: f64, p: Vec2) -> (i64, i64) {
        (((p.x - bounds.min.x) / res).floor() as i64, ((p.y - bounds.min.y) / res).floor() as i64)
    }

    fn center_of(bounds: Rect, res: f64, c: usize, r: usize) -> Vec2 {
        Vec2::new(bounds.min.x + (c as f64 + 0.5) * res, bounds.min.y + (r as f64 + 0.5) * res)
    }

    pub fn cell_center(&self, idx: usize) -> Vec2 {
        Self::center_of(self.bounds, self.resolution, idx % self.cols, idx / self.cols)
    }

    pub fn cell(&self, p: Vec2) -> Option<usize> {
        let (c, r) = Self::index_of(self.bounds, self.resolution, p);
        (c >= 0 && r >= 0 && (c as usize) < self.cols && (r as usize) < self.rows)
            .then(|| r as usize * self.cols + c as usize)
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.free[idx]
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    /// Free cells whose centers fall inside `rect`.
    pub fn free_cells_in(&self, rect: &Rect) -> Vec<usize> {
        (0..self.free.len()).filter(|&i| self.free[i] && rect.contains(self.cell_center(i))).collect()
    }

    /// The free cell nearest to `p`, searching outward up to `max_radius`.
    pub fn nearest_free(&self, p: Vec2, max_radius: f64) -> Option<usize> {
        let steps = (max_radius / self.resolution).ceil() as i64;
        let (c0, r0) = Self::index_of(self.bounds, self.resolution, p);
        let mut best: Option<(f64, usize)> = None;
        for r in (r0 - steps).max(0)..=(r0 + steps).min(self.rows as i64 - 1) {
            for c in (c0 - steps).max(0)..=(c0 + steps).min(self.cols as i64 - 1) {
                let idx = r as usize * self.cols + c as usize;
                if self.free[idx] {
                    let d = (self.cell_center(idx) - p).length();
                    if d <= max_radius && best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, idx));
                    }
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// 4-connected flood fill over free cells from `seeds`.
    pub fn flood(&self, seeds: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.free.len()];
        let mut queue = VecDeque::new();
        for &s in seeds {
            if self.free[s] && !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(i) = queue.pop_front() {
            let (c, r) = (i % self.cols, i / self.cols);
            let mut visit = |j: usize| {
                if self.free[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < self.cols {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - self.cols);
            }
            if r + 1 < self.rows {
                visit(i + self.cols);
            }
        }
        seen
    }
}
