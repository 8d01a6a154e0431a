use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::sphere::{normalize_lon, Frame, SphericalBox, SphericalCoord, Vec3};

const MAX_RECENTER_STEPS: usize = 64;

/// Smallest box (in the frame of its own center) enclosing a set of boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedFov {
    pub fov_h: f64,
    pub fov_v: f64,
    pub center: SphericalCoord,
}

impl MergedFov {
    pub fn to_box(&self) -> crate::Result<SphericalBox> {
        SphericalBox::with_center(self.center, self.fov_h, self.fov_v)
    }
}

/// Minimal-width arc covering every `(start, width)` interval on the circle.
///
/// Returns `(start, width)` with `start` in `[-π, π)`; ties go to the smaller start.
pub fn covering_arc(intervals: &[(f64, f64)]) -> (f64, f64) {
    if intervals.iter().any(|&(_, w)| w >= TAU) {
        return (-PI, TAU);
    }
    let mut best: Option<(f64, f64)> = None;
    for &(s, _) in intervals {
        let s = normalize_lon(s);
        let cover = intervals
            .iter()
            .map(|&(t, w)| (t - s).rem_euclid(TAU) + w)
            .fold(0.0, f64::max);
        let better = match best {
            None => true,
            Some((bs, bw)) => cover < bw || (cover == bw && s < bs),
        };
        if better {
            best = Some((s, cover));
        }
    }
    let (s, w) = best.unwrap_or((0.0, 0.0));
    (s, w.min(TAU))
}

struct Extent {
    lon_start: f64,
    lon_width: f64,
    lat_min: f64,
    lat_max: f64,
}

/// Circle arc `P(t) = cos t·u + sin t·v + w` for `t ∈ [t0, t1]`, in some frame's local axes.
struct Arc {
    u: Vec3,
    v: Vec3,
    w: Vec3,
    t0: f64,
    t1: f64,
}

impl Arc {
    fn at(&self, t: f64) -> Vec3 {
        let (s, c) = t.sin_cos();
        Vec3::new(
            c * self.u.x + s * self.v.x + self.w.x,
            c * self.u.y + s * self.v.y + self.w.y,
            c * self.u.z + s * self.v.z + self.w.z,
        )
    }

    fn in_range(&self, t: f64) -> Option<f64> {
        let t = self.t0 + (t - self.t0).rem_euclid(TAU);
        (t <= self.t1).then_some(t)
    }

    /// Endpoints plus every interior stationary point of latitude and longitude.
    fn critical_points(&self) -> Vec<Vec3> {
        let mut ts = vec![self.t0, self.t1];
        // z(t) = u.z cos t + v.z sin t + w.z
        let phase = self.v.z.atan2(self.u.z);
        ts.extend(
            [phase, phase + PI]
                .into_iter()
                .filter_map(|t| self.in_range(t)),
        );
        // d/dt atan2(y, x) = 0  <=>  k + a cos t + b sin t = 0
        let (u, v, w) = (self.u, self.v, self.w);
        let k = u.x * v.y - u.y * v.x;
        let a = w.x * v.y - w.y * v.x;
        let b = w.y * u.x - w.x * u.y;
        let r = a.hypot(b);
        if r > 0.0 && k.abs() <= r {
            let base = b.atan2(a);
            let delta = (-k / r).acos();
            ts.extend(
                [base + delta, base - delta]
                    .into_iter()
                    .filter_map(|t| self.in_range(t)),
            );
        }
        ts.into_iter().map(|t| self.at(t)).collect()
    }
}

/// The four edges of `b` as arcs in `frame`'s local axes.
fn box_edges(b: &SphericalBox, frame: &Frame) -> [Arc; 4] {
    let (c, e, n) = b.frame().axes();
    let (c, e, n) = (frame.to_local(c), frame.to_local(e), frame.to_local(n));
    let (hh, hv) = (b.fov_h() * 0.5, b.fov_v() * 0.5);
    let zero = Vec3::new(0.0, 0.0, 0.0);
    let parallel = |lat: f64| {
        let (sb, cb) = lat.sin_cos();
        Arc {
            u: c.scaled(cb),
            v: e.scaled(cb),
            w: n.scaled(sb),
            t0: -hh,
            t1: hh,
        }
    };
    let meridian = |lon: f64| {
        let (sl, cl) = lon.sin_cos();
        Arc {
            u: c.scaled(cl).plus(e.scaled(sl)),
            v: n,
            w: zero,
            t0: -hv,
            t1: hv,
        }
    };
    [parallel(hv), parallel(-hv), meridian(hh), meridian(-hh)]
}

fn extent_in(frame: &Frame, boxes: &[&SphericalBox]) -> Extent {
    let north = SphericalCoord::from_unit(frame.to_world(Vec3::new(0.0, 0.0, 1.0)));
    let south = SphericalCoord::from_unit(frame.to_world(Vec3::new(0.0, 0.0, -1.0)));
    let mut intervals = Vec::with_capacity(boxes.len());
    let mut lat_min = f64::INFINITY;
    let mut lat_max = f64::NEG_INFINITY;
    for b in boxes {
        let c = frame.local_coord(b.center());
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for edge in box_edges(b, frame) {
            for p in edge.critical_points() {
                let l = SphericalCoord::from_unit(p);
                let d = normalize_lon(l.lon() - c.lon());
                lo = lo.min(d);
                hi = hi.max(d);
                lat_min = lat_min.min(l.lat());
                lat_max = lat_max.max(l.lat());
            }
        }
        let mut width = hi - lo;
        if b.contains(north) {
            lat_max = FRAC_PI_2;
            width = TAU;
        }
        if b.contains(south) {
            lat_min = -FRAC_PI_2;
            width = TAU;
        }
        intervals.push((c.lon() + lo, width));
    }
    let (lon_start, lon_width) = covering_arc(&intervals);
    Extent {
        lon_start,
        lon_width,
        lat_min,
        lat_max,
    }
}

fn initial_center(boxes: &[&SphericalBox]) -> SphericalCoord {
    let intervals: Vec<(f64, f64)> = boxes
        .iter()
        .map(|b| (b.lon() - b.fov_h() * 0.5, b.fov_h()))
        .collect();
    let (start, width) = covering_arc(&intervals);
    let lat_lo = boxes
        .iter()
        .map(|b| (b.lat() - b.fov_v() * 0.5).max(-FRAC_PI_2))
        .fold(f64::INFINITY, f64::min);
    let lat_hi = boxes
        .iter()
        .map(|b| (b.lat() + b.fov_v() * 0.5).min(FRAC_PI_2))
        .fold(f64::NEG_INFINITY, f64::max);
    SphericalCoord::new(start + width * 0.5, (lat_lo + lat_hi) * 0.5)
        .expect("midpoint of valid latitudes")
}

/// Merged horizontal and vertical FoVs of a set of boxes.
///
/// The center is re-estimated in its own frame until the enclosing rectangle is symmetric
/// about it; the reported extents are twice the largest half-extent in that final frame, so
/// every member is enclosed by the box `(center, fov_h, fov_v)`. Returns `None` when empty.
pub fn merged_fov<'a, I>(boxes: I) -> Option<MergedFov>
where
    I: IntoIterator<Item = &'a SphericalBox>,
{
    let boxes: Vec<&SphericalBox> = boxes.into_iter().collect();
    match boxes.as_slice() {
        [] => return None,
        [only] => {
            return Some(MergedFov {
                fov_h: only.fov_h(),
                fov_v: only.fov_v(),
                center: only.center(),
            })
        }
        _ => {}
    }

    let mut center = initial_center(&boxes);
    let mut ext = extent_in(&Frame::at(center), &boxes);
    for _ in 0..MAX_RECENTER_STEPS {
        if ext.lon_width >= TAU {
            break;
        }
        let mid_lon = normalize_lon(ext.lon_start + ext.lon_width * 0.5);
        let mid_lat = (ext.lat_min + ext.lat_max) * 0.5;
        if mid_lon.abs() < 1e-12 && mid_lat.abs() < 1e-12 {
            break;
        }
        center = Frame::at(center).world_coord(mid_lon, mid_lat);
        ext = extent_in(&Frame::at(center), &boxes);
    }

    let fov_h = if ext.lon_width >= TAU {
        TAU
    } else {
        let lo = ext.lon_start;
        let hi = ext.lon_start + ext.lon_width;
        (2.0 * lo.abs().max(hi.abs())).min(TAU)
    };
    let fov_v = (2.0 * ext.lat_min.abs().max(ext.lat_max.abs())).min(PI);
    Some(MergedFov {
        fov_h,
        fov_v,
        center,
    })
}
