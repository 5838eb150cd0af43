//! Free-corridor clearance along a path and the carry-orientation choice for
//! long objects.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::path::{Cell, Path};
use crate::model::Point2;
use crate::worldgen::{CellState, OccupancyGrid};

/// How a long object is held relative to the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarryOrientation {
    /// Long axis across the direction of travel.
    Horizontal,
    /// Long axis along the direction of travel ("on its side").
    Sideways,
}

impl CarryOrientation {
    /// Yaw of the object's long (local x) axis relative to the robot heading.
    pub fn yaw_offset(self) -> f64 {
        match self {
            CarryOrientation::Horizontal => FRAC_PI_2,
            CarryOrientation::Sideways => 0.0,
        }
    }
}

/// Per-cell distance (meters) from the cell center to the nearest non-free
/// cell, less half a cell; zero on non-free cells.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

const INF: f64 = 1e20;

/// 1D squared Euclidean distance transform of a sampled function.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let parabola = |p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
        let mut s = parabola(v[k]);
        // z[0] is -inf, so k never underflows
        while s <= z[k] {
            k -= 1;
            s = parabola(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

pub fn distance_field(grid: &OccupancyGrid) -> DistanceField {
    let (w, h) = (grid.width, grid.height);
    let mut sq: Vec<f64> = grid
        .cells
        .iter()
        .map(|c| if *c == CellState::Free { INF } else { 0.0 })
        .collect();
    let m = w.max(h);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; m], vec![0.0; m], vec![0usize; m], vec![0.0; m + 1]);
    for r in 0..h {
        f[..w].copy_from_slice(&sq[r * w..(r + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        sq[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    for c in 0..w {
        for r in 0..h {
            f[r] = sq[r * w + c];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            sq[r * w + c] = out[r];
        }
    }
    let res = grid.resolution;
    let values = sq
        .into_iter()
        .map(|d2| {
            if d2 >= INF / 2.0 {
                f64::INFINITY
            } else {
                ((d2.sqrt() - 0.5) * res).max(0.0)
            }
        })
        .collect();
    DistanceField {
        width: w,
        height: h,
        values,
    }
}

impl DistanceField {
    #[inline]
    pub fn at(&self, cell: Cell) -> f64 {
        self.values[cell.0 * self.width + cell.1]
    }
}

/// Largest clearance found on the line through `cell` perpendicular to the
/// grid step `dir = (drow, dcol)`, walking each way until a non-free cell,
/// the map edge or `cap` meters. Never exceeds `cap`.
pub fn cross_section_clearance(
    grid: &OccupancyGrid,
    field: &DistanceField,
    cell: Cell,
    dir: (isize, isize),
    cap: f64,
) -> f64 {
    if grid.get(cell.0, cell.1) != CellState::Free {
        return 0.0;
    }
    // motion (dx, dy) = (dcol, drow); normal = (-dy, dx)
    let (mx, my) = (dir.1 as f64, dir.0 as f64);
    let norm = (mx * mx + my * my).sqrt().max(1e-12);
    let (nx, ny) = (-my / norm, mx / norm);
    let center = grid.cell_center(cell.0, cell.1);
    let mut best = field.at(cell).min(cap);
    let steps = (cap / grid.resolution).ceil() as i64 + 1;
    for sign in [-1.0, 1.0] {
        for j in 1..=steps {
            let d = sign * j as f64 * grid.resolution;
            let Some(c) = grid.cell_of(center[0] + d * nx, center[1] + d * ny) else {
                break;
            };
            if grid.get(c.0, c.1) != CellState::Free {
                break;
            }
            best = best.max(field.at(c).min(cap));
            if best >= cap {
                return cap;
            }
        }
    }
    best
}

/// Grid step used for each path cell: toward the next cell, or from the
/// previous one at the end of the path.
pub fn cell_directions(cells: &[Cell]) -> Vec<(isize, isize)> {
    let step = |a: Cell, b: Cell| (b.0 as isize - a.0 as isize, b.1 as isize - a.1 as isize);
    (0..cells.len())
        .map(|k| {
            if k + 1 < cells.len() {
                step(cells[k], cells[k + 1])
            } else if k > 0 {
                step(cells[k - 1], cells[k])
            } else {
                (1, 0)
            }
        })
        .collect()
}

/// Cross-section clearance at every path cell.
pub fn path_clearances(grid: &OccupancyGrid, field: &DistanceField, path: &Path, cap: f64) -> Vec<f64> {
    path.cells
        .iter()
        .zip(cell_directions(&path.cells))
        .map(|(&c, d)| cross_section_clearance(grid, field, c, d, cap))
        .collect()
}

/// Half-widths swept across the direction of travel by robot plus object in
/// each carry orientation, `(horizontal, sideways)`.
pub fn swept_half_widths(lateral_extent: f64, carried_extent: (f64, f64)) -> (f64, f64) {
    let (length, width) = carried_extent;
    (lateral_extent.max(length / 2.0), lateral_extent.max(width / 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFit {
    pub clearance: f64,
    pub orientation: CarryOrientation,
}

/// Orientation for every segment of [`Path::polyline`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationPlan {
    pub segments: Vec<SegmentFit>,
}

impl OrientationPlan {
    /// Segment indices preceded by an orientation change, given the
    /// orientation held before the first segment.
    pub fn changes(&self, initial: CarryOrientation) -> Vec<usize> {
        let mut prev = initial;
        let mut out = Vec::new();
        for (i, s) in self.segments.iter().enumerate() {
            if s.orientation != prev {
                out.push(i);
                prev = s.orientation;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("carried object does not fit at ({x:.2}, {y:.2}): clearance {clearance:.3} m, needs {needed:.3} m")]
pub struct FitError {
    pub segment: usize,
    pub x: f64,
    pub y: f64,
    pub clearance: f64,
    pub needed: f64,
}

/// Picks horizontal carry wherever the corridor allows it, sideways where only
/// that fits. A segment's clearance is the smaller of its endpoint cells'.
pub fn orientation_fit(
    grid: &OccupancyGrid,
    path: &Path,
    lateral_extent: f64,
    carried_extent: (f64, f64),
) -> Result<OrientationPlan, FitError> {
    orientation_fit_with(grid, &distance_field(grid), path, lateral_extent, carried_extent)
}

pub fn orientation_fit_with(
    grid: &OccupancyGrid,
    field: &DistanceField,
    path: &Path,
    lateral_extent: f64,
    carried_extent: (f64, f64),
) -> Result<OrientationPlan, FitError> {
    let (need_h, need_s) = swept_half_widths(lateral_extent, carried_extent);
    let cap = need_h.max(need_s) + grid.resolution;
    let cl = path_clearances(grid, field, path, cap);
    let n = path.cells.len();
    let poly = path.polyline();
    let mut segments = Vec::with_capacity(n + 1);
    // polyline segment i joins poly[i] and poly[i+1]; poly[k+1] is cell k
    for i in 0..=n {
        let a = i.saturating_sub(1).min(n - 1);
        let b = i.min(n - 1);
        let clearance = cl[a].min(cl[b]);
        let orientation = if clearance >= need_h {
            CarryOrientation::Horizontal
        } else if clearance >= need_s {
            CarryOrientation::Sideways
        } else {
            let p = poly[i];
            return Err(FitError {
                segment: i,
                x: p[0],
                y: p[1],
                clearance,
                needed: need_s,
            });
        };
        segments.push(SegmentFit { clearance, orientation });
    }
    merge_short_horizontal(&mut segments, &poly, carried_extent.0);
    Ok(OrientationPlan { segments })
}

/// Turns horizontal runs shorter than `min_run` meters into sideways when
/// sideways runs bound them on both sides. Sideways fits wherever
/// horizontal does, so the result stays feasible.
fn merge_short_horizontal(segments: &mut [SegmentFit], poly: &[Point2], min_run: f64) {
    let len = |i: usize| (poly[i + 1][0] - poly[i][0]).hypot(poly[i + 1][1] - poly[i][1]);
    let mut i = 0;
    while i < segments.len() {
        if segments[i].orientation != CarryOrientation::Horizontal {
            i += 1;
            continue;
        }
        let start = i;
        let mut run = 0.0;
        while i < segments.len() && segments[i].orientation == CarryOrientation::Horizontal {
            run += len(i);
            i += 1;
        }
        if start > 0 && i < segments.len() && run < min_run {
            for s in &mut segments[start..i] {
                s.orientation = CarryOrientation::Sideways;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pose;
    use crate::sim::path::plan_path;

    fn brute(grid: &OccupancyGrid, cell: Cell) -> f64 {
        let p = grid.cell_center(cell.0, cell.1);
        let mut best = f64::INFINITY;
        for r in 0..grid.height {
            for c in 0..grid.width {
                if grid.get(r, c) == CellState::Free {
                    continue;
                }
                let lo = grid.cell_min(r, c);
                let dx = (lo[0] - p[0]).max(p[0] - lo[0] - grid.resolution).max(0.0);
                let dy = (lo[1] - p[1]).max(p[1] - lo[1] - grid.resolution).max(0.0);
                best = best.min(dx.hypot(dy));
            }
        }
        best
    }

    #[test]
    fn field_close_to_exact_square_distance() {
        let mut g = OccupancyGrid::new(0.1, Pose::default(), 30, 20, CellState::Free);
        for (r, c) in [(3, 4), (10, 17), (15, 2), (0, 29)] {
            g.set(r, c, CellState::Occupied);
        }
        let f = distance_field(&g);
        for r in 0..20 {
            for c in 0..30 {
                let d = brute(&g, (r, c));
                assert!((f.at((r, c)) - d).abs() <= 0.1 * (2f64.sqrt() - 1.0) / 2.0 + 1e-9, "{r},{c}");
            }
        }
    }

    /// A 0.9 m door in a 0.2 m wall across a 4 m wide room.
    fn door_grid(door: f64) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(0.05, Pose::default(), 120, 80, CellState::Free);
        for r in 0..80 {
            for c in 58..62 {
                let y = g.cell_center(r, c)[1];
                if (y - 2.0).abs() > door / 2.0 {
                    g.set(r, c, CellState::Occupied);
                }
            }
        }
        g
    }

    #[test]
    fn narrow_door_forces_sideways() {
        let g = door_grid(0.9);
        let p = plan_path(&g, &Pose::planar(1.0, 2.0, 0.0), &Pose::planar(5.0, 2.0, 0.0), 0.375).unwrap();
        let plan = orientation_fit(&g, &p, 0.34, (1.2, 0.1)).unwrap();
        let changes = plan.changes(CarryOrientation::Horizontal);
        assert_eq!(changes.len(), 2);
        assert!(plan.segments.iter().any(|s| s.orientation == CarryOrientation::Sideways));
        assert_eq!(plan.segments[0].orientation, CarryOrientation::Horizontal);
        assert_eq!(plan.segments.last().unwrap().orientation, CarryOrientation::Horizontal);
    }

    #[test]
    fn wide_door_needs_no_reorientation() {
        let g = door_grid(2.0);
        let p = plan_path(&g, &Pose::planar(1.0, 2.0, 0.0), &Pose::planar(5.0, 2.0, 0.0), 0.375).unwrap();
        let plan = orientation_fit(&g, &p, 0.34, (1.2, 0.1)).unwrap();
        assert!(plan.changes(CarryOrientation::Horizontal).is_empty());
    }

    #[test]
    fn nothing_fits_through_a_slit() {
        let g = door_grid(0.9);
        let p = plan_path(&g, &Pose::planar(1.0, 2.0, 0.0), &Pose::planar(5.0, 2.0, 0.0), 0.375).unwrap();
        assert!(orientation_fit(&g, &p, 0.5, (1.2, 0.1)).is_err());
    }
}
