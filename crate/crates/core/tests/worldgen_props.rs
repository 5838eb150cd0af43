//! Map rasterization and PGM encoding against independent computations.

use bimbot::model::Pose;
use bimbot::worldgen::{
    decode_pgm, encode_pgm, grid_for_polygons, read_map_pgm, write_map_pgm, CellState, MapMetadata, OccupancyGrid,
    FREE_PIXEL, OCCUPIED_PIXEL, UNKNOWN_PIXEL,
};
use proptest::prelude::*;

fn state() -> impl Strategy<Value = CellState> {
    prop_oneof![Just(CellState::Free), Just(CellState::Occupied), Just(CellState::Unknown)]
}

fn grid() -> impl Strategy<Value = OccupancyGrid> {
    (1usize..60, 1usize..60, prop_oneof![Just(0.01), Just(0.05), Just(0.1), 0.01f64..1.0], -100.0f64..100.0, -100.0f64..100.0)
        .prop_flat_map(|(w, h, res, ox, oy)| {
            proptest::collection::vec(state(), w * h).prop_map(move |cells| OccupancyGrid {
                resolution: res,
                origin: Pose::planar(ox, oy, 0.0),
                width: w,
                height: h,
                cells,
            })
        })
}

fn meta(g: &OccupancyGrid) -> MapMetadata {
    MapMetadata {
        image: "map.pgm".into(),
        resolution: g.resolution,
        origin: [g.origin.x, g.origin.y, 0.0],
        negate: 0,
        occupied_thresh: 0.65,
        free_thresh: 0.196,
    }
}

/// Exact area of the overlap between two axis-aligned rectangles.
fn overlap(a: ([f64; 2], [f64; 2]), b: ([f64; 2], [f64; 2])) -> f64 {
    let dx = (a.1[0].min(b.1[0]) - a.0[0].max(b.0[0])).max(0.0);
    let dy = (a.1[1].min(b.1[1]) - a.0[1].max(b.0[1])).max(0.0);
    dx * dy
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pgm_bytes_decode_to_the_same_grid(g in grid()) {
        let bytes = encode_pgm(&g);
        let header = format!("P5\n{} {}\n255\n", g.width, g.height);
        prop_assert!(bytes.starts_with(header.as_bytes()));
        prop_assert_eq!(bytes.len(), header.len() + g.width * g.height);
        // first raster row is the top (highest y) grid row
        let px = |s: CellState| match s {
            CellState::Free => FREE_PIXEL,
            CellState::Occupied => OCCUPIED_PIXEL,
            CellState::Unknown => UNKNOWN_PIXEL,
        };
        prop_assert_eq!(bytes[header.len()], px(g.get(g.height - 1, 0)));
        prop_assert_eq!(decode_pgm(&bytes, &meta(&g)).unwrap(), g);
    }

    #[test]
    fn map_files_round_trip(g in grid()) {
        let dir = tempfile::tempdir().unwrap();
        let (pgm, yaml) = write_map_pgm(&g, &dir.path().join("map")).unwrap();
        prop_assert!(pgm.is_file());
        let text = std::fs::read_to_string(&yaml).unwrap();
        let value: serde_yaml::Value = serde_yaml::from_str(&text).unwrap();
        prop_assert_eq!(value["image"].as_str(), Some("map.pgm"));
        prop_assert_eq!(value["resolution"].as_f64(), Some(g.resolution));
        prop_assert_eq!(read_map_pgm(&yaml).unwrap(), g);
    }

    /// Axis-aligned boxes: a cell is occupied exactly when its overlap with
    /// some box has positive area.
    #[test]
    fn axis_aligned_boxes_rasterize_exactly(
        boxes in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.01f64..3.0, 0.01f64..3.0), 1..5),
        res in prop_oneof![Just(0.05), Just(0.1), 0.03f64..0.3],
    ) {
        let rects: Vec<([f64; 2], [f64; 2])> = boxes.iter().map(|&(x, y, w, h)| ([x, y], [x + w, y + h])).collect();
        let polys: Vec<Vec<[f64; 2]>> = rects
            .iter()
            .map(|(lo, hi)| vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
            .collect();
        let (g, _) = grid_for_polygons(&polys, res, 0.5);
        for r in 0..g.height {
            for c in 0..g.width {
                let lo = g.cell_min(r, c);
                let cell = (lo, [lo[0] + res, lo[1] + res]);
                let best = rects.iter().map(|&b| overlap(cell, b)).fold(0.0, f64::max) / (res * res);
                // skip slivers within rounding of the area threshold
                if (1e-7..1e-5).contains(&best) {
                    continue;
                }
                prop_assert_eq!(g.is_occupied(r, c), best > 0.0, "cell ({}, {}) overlap fraction {}", r, c, best);
            }
        }
    }

    #[test]
    fn grid_covers_geometry_plus_margin(x in -20.0f64..20.0, y in -20.0f64..20.0, margin in 0.0f64..2.0) {
        let poly = vec![[x, y], [x + 1.0, y], [x + 1.0, y + 1.0], [x, y + 1.0]];
        let (g, _) = grid_for_polygons(&[poly], 0.05, margin);
        let hi = [g.origin.x + g.width as f64 * 0.05, g.origin.y + g.height as f64 * 0.05];
        prop_assert!(g.origin.x <= x - margin + 1e-9 && g.origin.y <= y - margin + 1e-9);
        prop_assert!(hi[0] >= x + 1.0 + margin - 1e-9 && hi[1] >= y + 1.0 + margin - 1e-9);
        prop_assert!(((g.origin.x / 0.05) - (g.origin.x / 0.05).round()).abs() < 1e-6);
    }
}

/// Rotated rectangles against 16 x 16 point sampling: cells disagree only
/// where the rectangle covers a sliver smaller than one sample spacing.
#[test]
fn rotated_rectangle_matches_supersampling() {
    for k in 0..12 {
        let yaw = k as f64 * 0.27;
        let (c, s) = (yaw.cos(), yaw.sin());
        let (hx, hy) = (1.3, 0.4);
        let poly: Vec<[f64; 2]> = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
            .iter()
            .map(|&(x, y)| [2.0 + c * x - s * y, 1.0 + s * x + c * y])
            .collect();
        let (g, _) = grid_for_polygons(&[poly.clone()], 0.05, 0.5);
        let inside = |p: [f64; 2]| {
            let (dx, dy) = (p[0] - 2.0, p[1] - 1.0);
            let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
            u.abs() < hx && v.abs() < hy
        };
        let n = 16;
        let (mut diff, mut occ) = (0, 0);
        for r in 0..g.height {
            for cc in 0..g.width {
                let lo = g.cell_min(r, cc);
                let hit = (0..n * n).any(|i| {
                    inside([lo[0] + ((i % n) as f64 + 0.5) * 0.05 / n as f64, lo[1] + ((i / n) as f64 + 0.5) * 0.05 / n as f64])
                });
                occ += usize::from(hit);
                diff += usize::from(hit != g.is_occupied(r, cc));
            }
        }
        assert!(diff as f64 <= 0.02 * occ as f64, "yaw {yaw}: {diff} of {occ} cells differ");
    }
}
