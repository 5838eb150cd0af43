//! Planar helpers: convex hulls, polygon areas, z-band clipping.

pub type Point2 = [f64; 2];
pub type Point3 = [f64; 3];

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull in counter-clockwise order (monotone chain). Collinear points
/// on hull edges are dropped. Degenerate inputs return the distinct extreme
/// points (one or two).
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Unsigned shoelace area.
pub fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc.abs() / 2.0
}

/// Axis-aligned bounds `(min, max)` of a point set.
pub fn bounds(points: &[Point2]) -> Option<(Point2, Point2)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    }))
}

/// Whether `p` lies inside or on a counter-clockwise convex polygon.
pub fn convex_contains(poly: &[Point2], p: Point2) -> bool {
    if poly.len() < 3 {
        return false;
    }
    (0..poly.len()).all(|i| cross(poly[i], poly[(i + 1) % poly.len()], p) >= 0.0)
}

fn clip_half_plane<T: Copy>(
    poly: &[T],
    inside: impl Fn(&T) -> f64,
    lerp: impl Fn(&T, &T, f64) -> T,
) -> Vec<T> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = &poly[i];
        let next = &poly[(i + 1) % poly.len()];
        let dc = inside(cur);
        let dn = inside(next);
        if dc >= 0.0 {
            out.push(*cur);
        }
        if (dc >= 0.0) != (dn >= 0.0) {
            let t = dc / (dc - dn);
            out.push(lerp(cur, next, t));
        }
    }
    out
}

/// Clips a convex polygon to an axis-aligned rectangle.
pub fn clip_to_rect(poly: &[Point2], lo: Point2, hi: Point2) -> Vec<Point2> {
    let lerp = |a: &Point2, b: &Point2, t: f64| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t];
    let mut p = poly.to_vec();
    p = clip_half_plane(&p, |q| q[0] - lo[0], lerp);
    p = clip_half_plane(&p, |q| hi[0] - q[0], lerp);
    p = clip_half_plane(&p, |q| q[1] - lo[1], lerp);
    clip_half_plane(&p, |q| hi[1] - q[1], lerp)
}

/// Portion of a triangle lying in the slab `z_min <= z <= z_max`.
pub fn clip_triangle_to_band(tri: [Point3; 3], z_min: f64, z_max: f64) -> Vec<Point3> {
    let lerp = |a: &Point3, b: &Point3, t: f64| {
        [
            a[0] + (b[0] - a[0]) * t,
            a[1] + (b[1] - a[1]) * t,
            a[2] + (b[2] - a[2]) * t,
        ]
    };
    let p = clip_half_plane(&tri, |q| q[2] - z_min, lerp);
    clip_half_plane(&p, |q| z_max - q[2], lerp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!((polygon_area(&h) - 1.0).abs() < 1e-12);
        assert!(convex_contains(&h, [0.5, 0.5]));
        assert!(!convex_contains(&h, [1.5, 0.5]));
    }

    #[test]
    fn rect_clip_area() {
        let sq = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        let c = clip_to_rect(&sq, [1.0, 1.0], [3.0, 3.0]);
        assert!((polygon_area(&c) - 1.0).abs() < 1e-12);
        let none = clip_to_rect(&sq, [5.0, 5.0], [6.0, 6.0]);
        assert!(polygon_area(&none) == 0.0);
    }

    #[test]
    fn band_clip_keeps_slice() {
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 2.0]];
        let c = clip_triangle_to_band(tri, 0.5, 1.0);
        assert!(!c.is_empty());
        assert!(c.iter().all(|p| p[2] >= 0.5 - 1e-12 && p[2] <= 1.0 + 1e-12));
        assert!(clip_triangle_to_band(tri, 3.0, 4.0).is_empty());
    }
}
