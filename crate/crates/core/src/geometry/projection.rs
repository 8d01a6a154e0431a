//! Sphere-to-plane mappings: equirectangular (ERP), gnomonic tangent planes,
//! perspective-image grids and the six cube faces.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::sphere::{Frame, PlanarPoint, SphericalBox, SphericalCoord, Vec3};
use crate::{Error, Result};

/// ERP pixel `(u, v)` to sphere. Pixel centers sit at half-integers; `v = 0` is the north edge.
pub fn erp_to_sph(u: f64, v: f64, width: u32, height: u32) -> Result<SphericalCoord> {
    let (w, h) = (width as f64, height as f64);
    if width == 0 || height == 0 {
        return Err(Error::Range("ERP image has zero size".into()));
    }
    if !(0.0..w).contains(&u) || !(0.0..h).contains(&v) {
        return Err(Error::Range(format!(
            "pixel ({u}, {v}) outside {width}x{height} image"
        )));
    }
    SphericalCoord::new((u + 0.5) / w * TAU - PI, FRAC_PI_2 - (v + 0.5) / h * PI)
}

/// Inverse of [`erp_to_sph`].
pub fn sph_to_erp(c: SphericalCoord, width: u32, height: u32) -> PlanarPoint {
    let (w, h) = (width as f64, height as f64);
    PlanarPoint::new(
        (c.lon() + PI) / TAU * w - 0.5,
        (FRAC_PI_2 - c.lat()) / PI * h - 0.5,
    )
}

/// Gnomonic projection of `p` onto the plane tangent at `center` (x east, y north).
pub fn gnomonic_project(center: SphericalCoord, p: SphericalCoord) -> Result<PlanarPoint> {
    let l = Frame::at(center).to_local(p.to_unit());
    if l.x <= 1e-12 {
        return Err(Error::Domain(
            "point is 90° or more from the tangent point".into(),
        ));
    }
    Ok(PlanarPoint::new(l.y / l.x, l.z / l.x))
}

/// Inverse gnomonic projection.
pub fn gnomonic_unproject(center: SphericalCoord, q: PlanarPoint) -> Result<SphericalCoord> {
    if !q.x.is_finite() || !q.y.is_finite() {
        return Err(Error::Domain("non-finite tangent-plane point".into()));
    }
    let w = Frame::at(center).to_world(Vec3::new(1.0, q.x, q.y));
    Ok(SphericalCoord::from_unit(w))
}

/// Continuous image coordinates to sphere; implemented by every projected image.
///
/// Image coordinates run over `[0, width] x [0, height]` with `y` pointing down, so pixel
/// `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
pub trait ImageProjection {
    fn image_size(&self) -> (f64, f64);
    fn image_to_sph(&self, x: f64, y: f64) -> Result<SphericalCoord>;
}

/// Whole-frame equirectangular image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErpImage {
    pub width: u32,
    pub height: u32,
}

impl ImageProjection for ErpImage {
    fn image_size(&self) -> (f64, f64) {
        (self.width as f64, self.height as f64)
    }

    fn image_to_sph(&self, x: f64, y: f64) -> Result<SphericalCoord> {
        let (w, h) = self.image_size();
        if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
            return Err(Error::Range(format!("point ({x}, {y}) outside ERP image")));
        }
        SphericalCoord::new(x / w * TAU - PI, FRAC_PI_2 - y / h * PI)
    }
}

/// Square perspective image (PI) of a `fov x fov` region tangent at `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGrid {
    center: SphericalCoord,
    fov: f64,
    side: u32,
}

impl PiGrid {
    pub fn new(center: SphericalCoord, fov: f64, side: u32) -> Result<Self> {
        if !(fov > 0.0 && fov < PI) {
            return Err(Error::Domain(format!("PI fov {fov} must lie in (0, π)")));
        }
        if side == 0 {
            return Err(Error::Range("PI side must be positive".into()));
        }
        Ok(Self { center, fov, side })
    }

    pub fn center(&self) -> SphericalCoord {
        self.center
    }

    pub fn fov(&self) -> f64 {
        self.fov
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    /// Half-width of the image on the tangent plane.
    pub fn half_extent(&self) -> f64 {
        (self.fov * 0.5).tan()
    }

    /// Solid angle of the pyramid subtended by the image.
    pub fn solid_angle(&self) -> f64 {
        4.0 * ((self.fov * 0.5).sin().powi(2)).asin()
    }

    pub fn pixel_to_sph(&self, i: f64, j: f64) -> Result<SphericalCoord> {
        self.image_to_sph(i + 0.5, j + 0.5)
    }

    /// Continuous image coordinates of a sphere point; may fall outside the image.
    pub fn sph_to_image(&self, p: SphericalCoord) -> Result<PlanarPoint> {
        let t = gnomonic_project(self.center, p)?;
        let (s, h) = (self.side as f64, self.half_extent());
        Ok(PlanarPoint::new(
            (t.x / h + 1.0) * 0.5 * s,
            (1.0 - t.y / h) * 0.5 * s,
        ))
    }

    pub fn contains(&self, p: SphericalCoord) -> bool {
        match gnomonic_project(self.center, p) {
            Ok(t) => {
                let h = self.half_extent();
                t.x.abs() <= h && t.y.abs() <= h
            }
            Err(_) => false,
        }
    }
}

impl ImageProjection for PiGrid {
    fn image_size(&self) -> (f64, f64) {
        (self.side as f64, self.side as f64)
    }

    fn image_to_sph(&self, x: f64, y: f64) -> Result<SphericalCoord> {
        let s = self.side as f64;
        if !(0.0..=s).contains(&x) || !(0.0..=s).contains(&y) {
            return Err(Error::Range(format!("point ({x}, {y}) outside {s}px PI")));
        }
        let h = self.half_extent();
        let t = PlanarPoint::new((2.0 * x / s - 1.0) * h, (1.0 - 2.0 * y / s) * h);
        gnomonic_unproject(self.center, t)
    }
}

pub const CUBE_FACE_FOV: f64 = FRAC_PI_2;

/// The six 90° cube faces: four around the equator plus the two poles.
pub fn cubemap_faces(side: u32) -> Result<Vec<PiGrid>> {
    let centers = [
        (0.0, 0.0),
        (FRAC_PI_2, 0.0),
        (-PI, 0.0),
        (-FRAC_PI_2, 0.0),
        (0.0, FRAC_PI_2),
        (0.0, -FRAC_PI_2),
    ];
    centers
        .iter()
        .map(|&(lon, lat)| PiGrid::new(SphericalCoord::new(lon, lat)?, CUBE_FACE_FOV, side))
        .collect()
}

/// Axis-aligned rectangle in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// Back-projects a rectangular box on a projected image to a spherical box.
///
/// The center of the rectangle becomes the box center; the extents are the angular
/// spans between opposite edge midpoints, measured in the center's frame.
pub fn rect_bb_to_sphbb<P: ImageProjection + ?Sized>(
    rect: &PixelRect,
    image: &P,
) -> Result<SphericalBox> {
    let r = rect;
    if ![r.x_min, r.y_min, r.x_max, r.y_max]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::Range("non-finite rectangle".into()));
    }
    if r.x_max <= r.x_min || r.y_max <= r.y_min {
        return Err(Error::Invalid("degenerate rectangle".into()));
    }
    let (w, h) = image.image_size();
    if r.x_min < 0.0 || r.y_min < 0.0 || r.x_max > w || r.y_max > h {
        return Err(Error::Range("rectangle exceeds image bounds".into()));
    }
    let (cx, cy) = ((r.x_min + r.x_max) * 0.5, (r.y_min + r.y_max) * 0.5);
    let center = image.image_to_sph(cx, cy)?;
    let frame = Frame::at(center);
    let local = |x: f64, y: f64| -> Result<SphericalCoord> {
        Ok(frame.local_coord(image.image_to_sph(x, y)?))
    };
    let left = local(r.x_min, cy)?;
    let right = local(r.x_max, cy)?;
    let top = local(cx, r.y_min)?;
    let bottom = local(cx, r.y_max)?;

    let mut fov_h = right.lon() - left.lon();
    if fov_h <= 0.0 {
        fov_h += TAU;
    }
    let fov_v = top.lat() - bottom.lat();
    SphericalBox::with_center(center, fov_h.min(TAU), fov_v.min(PI))
}
