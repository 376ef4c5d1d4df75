use super::image::MaskGrid;
use crate::error::{Error, Result};

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain) without collinear points.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in [pts.clone(), pts.iter().rev().copied().collect()] {
        let start = hull.len();
        for p in pass {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

/// Rasterizes the filled convex hull of `points` (`[x, y]`, x = column),
/// including lattice points on its boundary, then adds every pixel within
/// Euclidean distance `margin` of the hull. Border pixels are always false.
pub fn mask_from_landmarks(points: &[[f64; 2]], height: usize, width: usize, margin: f64) -> Result<MaskGrid> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!("mask margin must be finite and non-negative, got {margin}")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("landmark coordinates".into()));
    }
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let area2: f64 = (0..hull.len()).map(|i| cross([0.0, 0.0], hull[i], hull[(i + 1) % hull.len()])).sum();
    if area2.abs() < 1e-12 {
        return Err(Error::DegenerateHull);
    }
    // Tolerance keeps lattice points lying exactly on an edge inside.
    let eps = 1e-9;
    let mut cells = vec![false; height * width];
    for y in 1..height.saturating_sub(1) {
        for x in 1..width.saturating_sub(1) {
            let p = [x as f64, y as f64];
            let edges = (0..hull.len()).map(|i| (hull[i], hull[(i + 1) % hull.len()]));
            let inside = edges.clone().all(|(a, b)| cross(a, b, p) >= -eps * (1.0 + segment_len(a, b)));
            cells[y * width + x] = inside || (margin > 0.0 && edges.map(|(a, b)| segment_distance(p, a, b)).fold(f64::INFINITY, f64::min) <= margin);
        }
    }
    MaskGrid::new(height, width, cells)
}

fn segment_len(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}
