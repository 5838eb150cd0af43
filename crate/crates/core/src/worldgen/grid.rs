use serde::{Deserialize, Serialize};

use crate::model::{bounds, clip_to_rect, polygon_area, Point2, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

/// 2D metric map. Cells are stored row-major with row 0 at the origin's y
/// (the bottom of the map) and column 0 at the origin's x. The origin yaw is
/// carried for the map-server sidecar; grids built here are axis-aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub origin: Pose,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<CellState>,
}

/// Fraction of a cell's area an overlap must exceed to count; absorbs
/// rounding on cell edges that coincide with geometry edges.
const OVERLAP_EPS: f64 = 1e-6;

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: Pose, width: usize, height: usize, fill: CellState) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        OccupancyGrid {
            resolution,
            origin,
            width,
            height,
            cells: vec![fill; width * height],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.resolution > 0.0 && self.resolution.is_finite() && self.cells.len() == self.width * self.height
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> CellState {
        self.cells[self.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, state: CellState) {
        let i = self.index(row, col);
        self.cells[i] = state;
    }

    #[inline]
    pub fn is_occupied(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == CellState::Occupied
    }

    /// Lower-left corner of a cell in world coordinates.
    pub fn cell_min(&self, row: usize, col: usize) -> Point2 {
        [
            self.origin.x + col as f64 * self.resolution,
            self.origin.y + row as f64 * self.resolution,
        ]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        [
            self.origin.x + (col as f64 + 0.5) * self.resolution,
            self.origin.y + (row as f64 + 0.5) * self.resolution,
        ]
    }

    /// Cell containing a world point, if inside the map.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin.x) / self.resolution).floor();
        let r = ((y - self.origin.y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|c| **c == state).count()
    }

    /// Cells overlapping a convex polygon by a positive area (boundary contact
    /// alone does not count).
    pub fn polygon_cells(&self, poly: &[Point2]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if polygon_area(poly) <= 0.0 {
            return out;
        }
        let Some((lo, hi)) = bounds(poly) else {
            return out;
        };
        let res = self.resolution;
        let c0 = (((lo[0] - self.origin.x) / res).floor() - 1.0).max(0.0) as usize;
        let r0 = (((lo[1] - self.origin.y) / res).floor() - 1.0).max(0.0) as usize;
        let c1 = ((((hi[0] - self.origin.x) / res).ceil() + 1.0).max(0.0) as usize).min(self.width);
        let r1 = ((((hi[1] - self.origin.y) / res).ceil() + 1.0).max(0.0) as usize).min(self.height);
        let min_area = OVERLAP_EPS * res * res;
        for r in r0..r1 {
            for c in c0..c1 {
                let cmin = self.cell_min(r, c);
                let cmax = [cmin[0] + res, cmin[1] + res];
                if polygon_area(&clip_to_rect(poly, cmin, cmax)) > min_area {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Marks every cell overlapping the polygon as occupied; returns the cells.
    pub fn rasterize_polygon(&mut self, poly: &[Point2]) -> Vec<(usize, usize)> {
        let cells = self.polygon_cells(poly);
        for &(r, c) in &cells {
            self.set(r, c, CellState::Occupied);
        }
        cells
    }
}

/// Grid covering `polys` plus `margin`, with cell edges on multiples of the
/// resolution. Falls back to a single free cell when there is nothing to cover.
pub fn grid_for_polygons(polys: &[Vec<Point2>], resolution: f64, margin: f64) -> (OccupancyGrid, Option<String>) {
    let pts: Vec<Point2> = polys.iter().flatten().copied().collect();
    let Some((lo, hi)) = bounds(&pts) else {
        let grid = OccupancyGrid::new(resolution, Pose::default(), 1, 1, CellState::Free);
        return (grid, Some("world has no static geometry in the height band; map is a single free cell".into()));
    };
    let ox = ((lo[0] - margin) / resolution).floor() * resolution;
    let oy = ((lo[1] - margin) / resolution).floor() * resolution;
    let width = (((hi[0] + margin - ox) / resolution).ceil() as usize).max(1);
    let height = (((hi[1] + margin - oy) / resolution).ceil() as usize).max(1);
    let mut grid = OccupancyGrid::new(resolution, Pose::planar(ox, oy, 0.0), width, height, CellState::Free);
    for p in polys {
        grid.rasterize_polygon(p);
    }
    (grid, None)
}
