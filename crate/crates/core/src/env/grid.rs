//! Top-down semantic occupancy grid.

use crate::math::Vec2;
use crate::physics::{Obb, WorldState};
use crate::scene::reach::distance_to_obb;
use crate::scene::Rect;
use serde::{Deserialize, Serialize};

pub const GRID_SIZE: usize = 48;
pub const GRID_CELLS: usize = GRID_SIZE * GRID_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellLabel {
    Free = 0,
    Goal = 1,
    Wall = 2,
    Box = 3,
    Robot = 4,
}

impl CellLabel {
    /// Scalar fed to the network.
    pub fn encode(self) -> f32 {
        match self {
            CellLabel::Free => 0.0,
            CellLabel::Wall => -1.0,
            CellLabel::Box => 0.5,
            CellLabel::Robot => -0.5,
            CellLabel::Goal => 1.0,
        }
    }
}

/// Row 0 is the top (maximum y) of the room; column 0 is minimum x.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticGrid {
    pub bounds: Rect,
    pub cells: Vec<CellLabel>,
}

impl SemanticGrid {
    pub fn cell_size(&self) -> f64 {
        self.bounds.size().x / GRID_SIZE as f64
    }

    pub fn get(&self, row: usize, col: usize) -> CellLabel {
        self.cells[row * GRID_SIZE + col]
    }

    pub fn count(&self, label: CellLabel) -> usize {
        self.cells.iter().filter(|&&c| c == label).count()
    }

    pub fn encode_into(&self, out: &mut [f32]) {
        for (o, c) in out.iter_mut().zip(&self.cells) {
            *o = c.encode();
        }
    }

    pub fn encode(&self) -> Vec<f32> {
        let mut v = vec![0.0; GRID_CELLS];
        self.encode_into(&mut v);
        v
    }
}

/// Center of cell (row, col) in world coordinates.
pub fn cell_center(bounds: &Rect, row: usize, col: usize) -> Vec2 {
    let s = bounds.size().x / GRID_SIZE as f64;
    Vec2::new(bounds.min.x + (col as f64 + 0.5) * s, bounds.max.y - (row as f64 + 0.5) * s)
}

/// Inclusive row/col ranges whose centers may fall within `half` of `center`.
fn cell_range(bounds: &Rect, center: Vec2, half: Vec2) -> Option<(usize, usize, usize, usize)> {
    let s = bounds.size().x / GRID_SIZE as f64;
    let c0 = ((center.x - half.x - bounds.min.x) / s - 0.5).ceil().max(0.0);
    let c1 = ((center.x + half.x - bounds.min.x) / s - 0.5).floor().min(GRID_SIZE as f64 - 1.0);
    let r0 = ((bounds.max.y - (center.y + half.y)) / s - 0.5).ceil().max(0.0);
    let r1 = ((bounds.max.y - (center.y - half.y)) / s - 0.5).floor().min(GRID_SIZE as f64 - 1.0);
    (c0 <= c1 && r0 <= r1).then_some((r0 as usize, r1 as usize, c0 as usize, c1 as usize))
}

fn paint(cells: &mut [CellLabel], bounds: &Rect, obb: &Obb, label: CellLabel, inflate: f64) {
    let h = obb.aabb_half();
    let Some((r0, r1, c0, c1)) = cell_range(bounds, obb.center, Vec2::new(h.x + inflate, h.y + inflate)) else {
        return;
    };
    for r in r0..=r1 {
        for c in c0..=c1 {
            let p = cell_center(bounds, r, c);
            let hit = if inflate > 0.0 { distance_to_obb(obb, p) <= inflate } else { obb.contains(p) };
            if hit && (label as u8) >= (cells[r * GRID_SIZE + c] as u8) {
                cells[r * GRID_SIZE + c] = label;
            }
        }
    }
}

/// Static wall layer; walls are thinner than a cell, so they are inflated
/// by half a cell to always occupy at least one cell.
pub fn wall_layer(bounds: &Rect, walls: &[crate::physics::Wall]) -> Vec<CellLabel> {
    let mut cells = vec![CellLabel::Free; GRID_CELLS];
    let half_cell = 0.5 * bounds.size().x / GRID_SIZE as f64;
    for w in walls {
        paint(&mut cells, bounds, &w.obb(), CellLabel::Wall, half_cell);
    }
    cells
}

/// Labels cells by priority robot > box > wall > goal > free. A body
/// labels a cell when its rectangle contains the cell center; the goal
/// marks cells within `goal_radius` plus the cell holding the goal.
pub fn rasterize_onto(
    base: &[CellLabel],
    bounds: &Rect,
    world: &WorldState,
    goal: Vec2,
    goal_radius: f64,
) -> SemanticGrid {
    let mut cells = base.to_vec();
    let goal_obb = Obb::new(goal, 0.0, Vec2::ZERO);
    paint(&mut cells, bounds, &goal_obb, CellLabel::Goal, goal_radius);
    let s = bounds.size().x / GRID_SIZE as f64;
    let gc = ((goal.x - bounds.min.x) / s).floor();
    let gr = ((bounds.max.y - goal.y) / s).floor();
    if (0.0..GRID_SIZE as f64).contains(&gc) && (0.0..GRID_SIZE as f64).contains(&gr) {
        let i = gr as usize * GRID_SIZE + gc as usize;
        if cells[i] == CellLabel::Free {
            cells[i] = CellLabel::Goal;
        }
    }
    for (_, b) in world.present_boxes() {
        paint(&mut cells, bounds, &b.obb(), CellLabel::Box, 0.0);
    }
    paint(&mut cells, bounds, &world.robot.obb(), CellLabel::Robot, 0.0);
    SemanticGrid { bounds: *bounds, cells }
}

pub fn rasterize_grid(world: &WorldState, goal: Vec2, bounds: &Rect, goal_radius: f64) -> SemanticGrid {
    let base = wall_layer(bounds, &world.walls);
    rasterize_onto(&base, bounds, world, goal, goal_radius)
}
