//! 8-connected A* on an inflated occupancy grid.
//!
//! Path costs are kept as exact `(axial, diagonal)` step counts so that cost
//! comparisons never depend on floating-point summation order.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Point2, Pose};
use crate::worldgen::{CellState, OccupancyGrid};

/// `(row, col)`; row indexes y, col indexes x.
pub type Cell = (usize, usize);

/// Cost `axial + diagonal * sqrt(2)` in cell units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCost {
    pub axial: u32,
    pub diagonal: u32,
}

impl GridCost {
    pub const ZERO: GridCost = GridCost { axial: 0, diagonal: 0 };
    pub const AXIAL: GridCost = GridCost { axial: 1, diagonal: 0 };
    pub const DIAGONAL: GridCost = GridCost { axial: 0, diagonal: 1 };

    pub fn value(&self) -> f64 {
        self.axial as f64 + self.diagonal as f64 * SQRT_2
    }

    pub fn add(self, o: GridCost) -> GridCost {
        GridCost {
            axial: self.axial + o.axial,
            diagonal: self.diagonal + o.diagonal,
        }
    }

    /// Octile distance between two cells.
    pub fn octile(a: Cell, b: Cell) -> GridCost {
        let dr = a.0.abs_diff(b.0) as u32;
        let dc = a.1.abs_diff(b.1) as u32;
        GridCost {
            axial: dr.max(dc) - dr.min(dc),
            diagonal: dr.min(dc),
        }
    }
}

impl Ord for GridCost {
    /// Exact order of `x + y sqrt(2)` via the sign of integer expressions.
    fn cmp(&self, o: &Self) -> Ordering {
        let x = self.axial as i128 - o.axial as i128;
        let y = self.diagonal as i128 - o.diagonal as i128;
        match (x.signum(), y.signum()) {
            (0, 0) => Ordering::Equal,
            (sx, sy) if sx >= 0 && sy >= 0 => Ordering::Greater,
            (sx, sy) if sx <= 0 && sy <= 0 => Ordering::Less,
            // opposite signs: compare x^2 with 2 y^2 (never equal)
            (1, _) => (x * x).cmp(&(2 * y * y)),
            _ => (2 * y * y).cmp(&(x * x)),
        }
    }
}

impl PartialOrd for GridCost {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Blocked mask: every non-free cell, plus free cells whose center lies
/// closer than `radius` to a non-free cell square.
pub fn inflate(grid: &OccupancyGrid, radius: f64) -> Vec<bool> {
    let (w, h) = (grid.width, grid.height);
    let mut blocked: Vec<bool> = grid.cells.iter().map(|c| *c != CellState::Free).collect();
    if radius <= 0.0 {
        return blocked;
    }
    let k = (radius / grid.resolution + 0.5).ceil() as isize;
    let rr = radius / grid.resolution;
    let free = |r: isize, c: isize| {
        r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && grid.get(r as usize, c as usize) == CellState::Free
    };
    // The nearest non-free square to a free cell always has a free 4-neighbor,
    // so only those boundary cells need to be expanded.
    for r in 0..h as isize {
        for c in 0..w as isize {
            if free(r, c) {
                continue;
            }
            if !(free(r - 1, c) || free(r + 1, c) || free(r, c - 1) || free(r, c + 1)) {
                continue;
            }
            for dr in -k..=k {
                let ey = (dr.abs() as f64 - 0.5).max(0.0);
                for dc in -k..=k {
                    let ex = (dc.abs() as f64 - 0.5).max(0.0);
                    if ex * ex + ey * ey < rr * rr {
                        let (nr, nc) = (r + dr, c + dc);
                        if nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w {
                            blocked[nr as usize * w + nc as usize] = true;
                        }
                    }
                }
            }
        }
    }
    blocked
}

/// A grid together with its inflated blocked mask.
#[derive(Debug, Clone)]
pub struct NavGrid {
    pub grid: OccupancyGrid,
    pub inflation_radius: f64,
    blocked: Vec<bool>,
}

impl NavGrid {
    pub fn new(grid: &OccupancyGrid, inflation_radius: f64) -> Self {
        NavGrid {
            blocked: inflate(grid, inflation_radius),
            grid: grid.clone(),
            inflation_radius,
        }
    }

    #[inline]
    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.blocked[cell.0 * self.grid.width + cell.1]
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }

    /// Whether a world point lies in an unblocked cell of the map.
    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.grid.cell_of(x, y).is_some_and(|c| !self.is_blocked(c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub start: Point2,
    pub goal: Point2,
    /// Grid cells from the start cell to the goal cell.
    pub cells: Vec<Cell>,
    pub cost: GridCost,
    /// `cost` in meters.
    pub length: f64,
    pub centers: Vec<Point2>,
}

impl Path {
    /// The driven polyline: actual start, cell centers, actual goal.
    pub fn polyline(&self) -> Vec<Point2> {
        let mut v = Vec::with_capacity(self.centers.len() + 2);
        v.push(self.start);
        v.extend_from_slice(&self.centers);
        v.push(self.goal);
        v
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PathError {
    #[error("{which} ({x:.3}, {y:.3}) lies outside the map")]
    OutsideMap { which: &'static str, x: f64, y: f64 },
    #[error("start ({x:.3}, {y:.3}) is occupied after inflation")]
    StartBlocked { x: f64, y: f64 },
    #[error("goal ({x:.3}, {y:.3}) is occupied after inflation")]
    GoalBlocked { x: f64, y: f64 },
    #[error("no path from ({0:.3}, {1:.3}) to ({2:.3}, {3:.3})")]
    NoPath(f64, f64, f64, f64),
}

#[derive(PartialEq, Eq)]
struct Key {
    f: GridCost,
    h: GridCost,
    cell: Cell,
}

impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        self.f
            .cmp(&o.f)
            .then(self.h.cmp(&o.h))
            .then(self.cell.cmp(&o.cell))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

const STEPS: [(isize, isize, bool); 8] = [
    (-1, -1, true),
    (-1, 0, false),
    (-1, 1, true),
    (0, -1, false),
    (0, 1, false),
    (1, -1, true),
    (1, 0, false),
    (1, 1, true),
];

/// Minimal-cost cell sequence between two unblocked cells, or `None`.
/// Open-set ties break on `(f, h, row, col)`.
pub fn plan_cells(nav: &NavGrid, start: Cell, goal: Cell) -> Option<(Vec<Cell>, GridCost)> {
    let (w, h) = (nav.grid.width, nav.grid.height);
    if nav.is_blocked(start) || nav.is_blocked(goal) {
        return None;
    }
    let n = w * h;
    let idx = |c: Cell| c.0 * w + c.1;
    let mut g: Vec<Option<GridCost>> = vec![None; n];
    let mut parent: Vec<usize> = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[idx(start)] = Some(GridCost::ZERO);
    let h0 = GridCost::octile(start, goal);
    open.push(Reverse(Key {
        f: h0,
        h: h0,
        cell: start,
    }));
    while let Some(Reverse(Key { cell, .. })) = open.pop() {
        let ci = idx(cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if cell == goal {
            let mut cells = vec![goal];
            let mut k = ci;
            while parent[k] != usize::MAX {
                k = parent[k];
                cells.push((k / w, k % w));
            }
            cells.reverse();
            return Some((cells, g[ci].expect("goal was reached")));
        }
        let gc = g[ci].expect("closed cells have a cost");
        for (dr, dc, diag) in STEPS {
            let (nr, nc) = (cell.0 as isize + dr, cell.1 as isize + dc);
            if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                continue;
            }
            let nb = (nr as usize, nc as usize);
            let ni = idx(nb);
            if closed[ni] || nav.is_blocked(nb) {
                continue;
            }
            let cand = gc.add(if diag { GridCost::DIAGONAL } else { GridCost::AXIAL });
            if g[ni].is_none_or(|old| cand < old) {
                g[ni] = Some(cand);
                parent[ni] = ci;
                let hn = GridCost::octile(nb, goal);
                open.push(Reverse(Key {
                    f: cand.add(hn),
                    h: hn,
                    cell: nb,
                }));
            }
        }
    }
    None
}

/// Plans on a prepared [`NavGrid`].
pub fn plan_on(nav: &NavGrid, start: &Pose, goal: &Pose) -> Result<Path, PathError> {
    let sc = nav.grid.cell_of(start.x, start.y).ok_or(PathError::OutsideMap {
        which: "start",
        x: start.x,
        y: start.y,
    })?;
    let gc = nav.grid.cell_of(goal.x, goal.y).ok_or(PathError::OutsideMap {
        which: "goal",
        x: goal.x,
        y: goal.y,
    })?;
    if nav.is_blocked(sc) {
        return Err(PathError::StartBlocked { x: start.x, y: start.y });
    }
    if nav.is_blocked(gc) {
        return Err(PathError::GoalBlocked { x: goal.x, y: goal.y });
    }
    let (cells, cost) =
        plan_cells(nav, sc, gc).ok_or(PathError::NoPath(start.x, start.y, goal.x, goal.y))?;
    let centers = cells.iter().map(|&(r, c)| nav.grid.cell_center(r, c)).collect();
    Ok(Path {
        start: [start.x, start.y],
        goal: [goal.x, goal.y],
        cells,
        cost,
        length: cost.value() * nav.grid.resolution,
        centers,
    })
}

/// Minimal-cost path between the cells containing `start` and `goal`, with
/// obstacles inflated by `inflation_radius`.
pub fn plan_path(grid: &OccupancyGrid, start: &Pose, goal: &Pose, inflation_radius: f64) -> Result<Path, PathError> {
    plan_on(&NavGrid::new(grid, inflation_radius), start, goal)
}
