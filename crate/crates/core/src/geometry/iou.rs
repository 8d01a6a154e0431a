use std::cmp::Ordering;
use std::sync::OnceLock;

use super::sphere::{within_extent, DetectedObject, SphericalBox, Vec3};

/// Quadrature resolution over the integration box: longitude x latitude cells.
pub const IOU_GRID_LON: usize = 512;
pub const IOU_GRID_LAT: usize = 256;

/// Default suppression threshold for merging per-SRoI detections.
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.6;

struct UnitGrid {
    // cell-center offsets in units of the extent, in (-0.5, 0.5)
    lon: Vec<f64>,
    lat: Vec<f64>,
}

fn unit_grid() -> &'static UnitGrid {
    static GRID: OnceLock<UnitGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let cells = |n: usize| (0..n).map(|k| (k as f64 + 0.5) / n as f64 - 0.5).collect();
        UnitGrid {
            lon: cells(IOU_GRID_LON),
            lat: cells(IOU_GRID_LAT),
        }
    })
}

fn box_key_cmp(a: &SphericalBox, b: &SphericalBox) -> Ordering {
    a.area()
        .total_cmp(&b.area())
        .then(a.lon().total_cmp(&b.lon()))
        .then(a.lat().total_cmp(&b.lat()))
        .then(a.fov_h().total_cmp(&b.fov_h()))
        .then(a.fov_v().total_cmp(&b.fov_v()))
}

/// Fraction of `inner`'s area that also lies in `outer`, by midpoint quadrature in `inner`'s frame.
fn covered_fraction(inner: &SphericalBox, outer: &SphericalBox) -> f64 {
    let grid = unit_grid();
    let m = inner.frame().relative_to(&outer.frame());
    let half_h = outer.fov_h() * 0.5;
    let sin_half_v = (outer.fov_v() * 0.5).sin();

    let lons: Vec<(f64, f64)> = grid
        .lon
        .iter()
        .map(|u| (u * inner.fov_h()).sin_cos())
        .collect();

    let mut total = 0.0;
    let mut inside = 0.0;
    for v in &grid.lat {
        let (sl, cl) = (v * inner.fov_v()).sin_cos();
        let mut hits = 0usize;
        for &(so, co) in &lons {
            let p = Vec3::new(cl * co, cl * so, sl);
            let q = Vec3::new(m[0].dot(p), m[1].dot(p), m[2].dot(p));
            if within_extent(q, half_h, sin_half_v) {
                hits += 1;
            }
        }
        total += cl * lons.len() as f64;
        inside += cl * hits as f64;
    }
    inside / total
}

/// Spherical IoU by deterministic quadrature.
///
/// The intersection is integrated on a 512x256 lon-lat grid spanning the smaller box (in
/// its own frame, cells weighted by `cos(lat)`), so the result is exactly symmetric and
/// exactly 1 for identical boxes.
pub fn sph_iou(a: &SphericalBox, b: &SphericalBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let separation = a.center().angular_distance(&b.center());
    if separation > a.bounding_radius() + b.bounding_radius() + 1e-9 {
        return 0.0;
    }
    let (small, large) = match box_key_cmp(a, b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let inter = covered_fraction(small, large) * small.area();
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy per-category spherical NMS.
///
/// Detections are visited in descending confidence (stable for ties); one is kept iff its
/// SphIoU with every kept detection of the same category is at most `iou_threshold`.
pub fn spherical_nms(dets: &[DetectedObject], iou_threshold: f64) -> Vec<DetectedObject> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].confidence.total_cmp(&dets[i].confidence));

    let mut kept: Vec<DetectedObject> = Vec::new();
    for i in order {
        let d = &dets[i];
        let suppressed = kept
            .iter()
            .filter(|k| k.category == d.category)
            .any(|k| sph_iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(*d);
        }
    }
    kept
}
