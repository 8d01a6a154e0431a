use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::{Error, Result};

/// Wraps a longitude into `[-π, π)`.
pub fn normalize_lon(lon: f64) -> f64 {
    if (-PI..PI).contains(&lon) {
        return lon;
    }
    let l = (lon + PI).rem_euclid(TAU) - PI;
    if l >= PI {
        l - TAU
    } else {
        l
    }
}

/// Signed angular difference `a - b` wrapped into `[-π, π)`.
pub fn lon_diff(a: f64, b: f64) -> f64 {
    normalize_lon(a - b)
}

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    lon: f64,
    lat: f64,
}

impl SphericalCoord {
    /// Builds a coordinate from radians. Longitude is wrapped into `[-π, π)`.
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::Range(format!(
                "non-finite coordinate ({lon}, {lat})"
            )));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&lat) {
            return Err(Error::Range(format!("latitude {lat} outside [-π/2, π/2]")));
        }
        Ok(Self {
            lon: normalize_lon(lon),
            lat,
        })
    }

    pub fn from_degrees(lon: f64, lat: f64) -> Result<Self> {
        Self::new(lon.to_radians(), lat.to_radians())
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn to_unit(self) -> Vec3 {
        let (sl, cl) = self.lat.sin_cos();
        let (so, co) = self.lon.sin_cos();
        Vec3::new(cl * co, cl * so, sl)
    }

    /// Converts a (not necessarily normalized) direction back to lon/lat.
    pub fn from_unit(v: Vec3) -> Self {
        let v = v.normalize();
        let lat = v.z.clamp(-1.0, 1.0).asin();
        let lon = if v.x == 0.0 && v.y == 0.0 {
            0.0
        } else {
            v.y.atan2(v.x)
        };
        Self {
            lon: normalize_lon(lon),
            lat,
        }
    }

    /// Great-circle distance in radians.
    pub fn angular_distance(&self, other: &SphericalCoord) -> f64 {
        let a = self.to_unit();
        let b = other.to_unit();
        // atan2 form is accurate at both small and large separations
        a.cross(b).norm().atan2(a.dot(b))
    }
}

/// Pixel or tangent-plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalize(self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn scaled(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn plus(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

/// Orthonormal frame whose origin direction is a given center.
///
/// Local axes are (center, east, north): a world direction is rotated by `-lon` about
/// the polar axis and then by `-lat` about the resulting east axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    center: Vec3,
    east: Vec3,
    north: Vec3,
}

impl Frame {
    pub fn at(center: SphericalCoord) -> Self {
        let (sp, cp) = center.lat.sin_cos();
        let (st, ct) = center.lon.sin_cos();
        Self {
            center: Vec3::new(cp * ct, cp * st, sp),
            east: Vec3::new(-st, ct, 0.0),
            north: Vec3::new(-sp * ct, -sp * st, cp),
        }
    }

    pub fn to_local(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.center.dot(v), self.east.dot(v), self.north.dot(v))
    }

    pub fn to_world(&self, l: Vec3) -> Vec3 {
        self.center
            .scaled(l.x)
            .plus(self.east.scaled(l.y))
            .plus(self.north.scaled(l.z))
    }

    /// World directions of the local (center, east, north) axes.
    pub fn axes(&self) -> (Vec3, Vec3, Vec3) {
        (self.center, self.east, self.north)
    }

    /// Lon/lat of a world direction measured in this frame.
    pub fn local_coord(&self, p: SphericalCoord) -> SphericalCoord {
        SphericalCoord::from_unit(self.to_local(p.to_unit()))
    }

    /// World coordinate of a point given by lon/lat in this frame.
    pub fn world_coord(&self, lon: f64, lat: f64) -> SphericalCoord {
        let (sl, cl) = lat.sin_cos();
        let (so, co) = lon.sin_cos();
        SphericalCoord::from_unit(self.to_world(Vec3::new(cl * co, cl * so, sl)))
    }

    /// Matrix rows mapping local coordinates of `self` into local coordinates of `other`.
    pub(crate) fn relative_to(&self, other: &Frame) -> [Vec3; 3] {
        let col = |l: Vec3| other.to_local(self.to_world(l));
        let cx = col(Vec3::new(1.0, 0.0, 0.0));
        let cy = col(Vec3::new(0.0, 1.0, 0.0));
        let cz = col(Vec3::new(0.0, 0.0, 1.0));
        [
            Vec3::new(cx.x, cy.x, cz.x),
            Vec3::new(cx.y, cy.y, cz.y),
            Vec3::new(cx.z, cy.z, cz.z),
        ]
    }
}

/// Spherical bounding box `(θ, φ, Δθ, Δφ)`.
///
/// The box is the lat-lon rectangle `|lon'| ≤ Δθ/2, |lat'| ≤ Δφ/2` expressed in the
/// [`Frame`] centered on `(θ, φ)`, so its area depends only on the extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalBox {
    lon: f64,
    lat: f64,
    fov_h: f64,
    fov_v: f64,
}

impl SphericalBox {
    pub fn new(lon: f64, lat: f64, fov_h: f64, fov_v: f64) -> Result<Self> {
        let center = SphericalCoord::new(lon, lat)?;
        if !fov_h.is_finite() || fov_h <= 0.0 || fov_h > TAU {
            return Err(Error::Range(format!(
                "horizontal fov {fov_h} outside (0, 2π]"
            )));
        }
        if !fov_v.is_finite() || fov_v <= 0.0 || fov_v > PI {
            return Err(Error::Range(format!("vertical fov {fov_v} outside (0, π]")));
        }
        Ok(Self {
            lon: center.lon,
            lat: center.lat,
            fov_h,
            fov_v,
        })
    }

    pub fn from_degrees(lon: f64, lat: f64, fov_h: f64, fov_v: f64) -> Result<Self> {
        Self::new(
            lon.to_radians(),
            lat.to_radians(),
            fov_h.to_radians(),
            fov_v.to_radians(),
        )
    }

    pub fn with_center(center: SphericalCoord, fov_h: f64, fov_v: f64) -> Result<Self> {
        Self::new(center.lon, center.lat, fov_h, fov_v)
    }

    /// The whole sphere.
    pub fn full_sphere() -> Self {
        Self {
            lon: 0.0,
            lat: 0.0,
            fov_h: TAU,
            fov_v: PI,
        }
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn fov_h(&self) -> f64 {
        self.fov_h
    }

    pub fn fov_v(&self) -> f64 {
        self.fov_v
    }

    pub fn center(&self) -> SphericalCoord {
        SphericalCoord {
            lon: self.lon,
            lat: self.lat,
        }
    }

    pub fn frame(&self) -> Frame {
        Frame::at(self.center())
    }

    /// Solid angle in steradians: `2·Δθ·sin(Δφ/2)`.
    pub fn area(&self) -> f64 {
        sph_area(self)
    }

    pub fn normalized_area(&self) -> f64 {
        normalized_area(self)
    }

    pub fn contains(&self, p: SphericalCoord) -> bool {
        contains(self, p)
    }

    /// Membership test for a direction already expressed in this box's frame.
    pub(crate) fn contains_local(&self, l: Vec3) -> bool {
        within_extent(l, self.fov_h * 0.5, (self.fov_v * 0.5).sin())
    }

    /// Largest angular distance from the center to any point of the box.
    pub fn bounding_radius(&self) -> f64 {
        let ch = (self.fov_h * 0.5).cos();
        let cos_max = if ch >= 0.0 {
            ch * (self.fov_v * 0.5).cos()
        } else {
            ch
        };
        cos_max.clamp(-1.0, 1.0).acos()
    }

    /// Points along the box outline, `per_edge` segments per side.
    pub fn outline(&self, per_edge: usize) -> Vec<SphericalCoord> {
        let frame = self.frame();
        let (hh, hv) = (self.fov_h * 0.5, self.fov_v * 0.5);
        let mut pts = Vec::with_capacity(4 * (per_edge + 1));
        for k in 0..=per_edge {
            let t = k as f64 / per_edge as f64;
            let lon = -hh + t * self.fov_h;
            let lat = -hv + t * self.fov_v;
            pts.push(frame.world_coord(lon, hv));
            pts.push(frame.world_coord(lon, -hv));
            pts.push(frame.world_coord(hh, lat));
            pts.push(frame.world_coord(-hh, lat));
        }
        pts
    }
}

/// `|lon'| ≤ half_h` and `|lat'| ≤ asin(sin_half_v)` for a local direction, without trig.
#[inline]
pub(crate) fn within_extent(l: Vec3, half_h: f64, sin_half_v: f64) -> bool {
    let r = l.norm();
    if l.z.abs() > sin_half_v * r {
        return false;
    }
    lon_within(l.x, l.y, half_h)
}

#[inline]
fn lon_within(x: f64, y: f64, half: f64) -> bool {
    if half >= PI {
        true
    } else if half <= FRAC_PI_2 {
        x >= 0.0 && y.abs() <= x * half.tan()
    } else {
        x >= 0.0 || y.abs() >= -x * (PI - half).tan()
    }
}

/// Solid angle of a spherical box in steradians.
pub fn sph_area(b: &SphericalBox) -> f64 {
    2.0 * b.fov_h * (b.fov_v * 0.5).sin()
}

/// Box area as a fraction of the sphere (NOA).
pub fn normalized_area(b: &SphericalBox) -> f64 {
    sph_area(b) / (4.0 * PI)
}

/// True iff `p`, expressed in the box frame, lies within both half-extents.
pub fn contains(b: &SphericalBox, p: SphericalCoord) -> bool {
    b.contains_local(b.frame().to_local(p.to_unit()))
}

/// A detection (or ground-truth object) on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedObject {
    pub bbox: SphericalBox,
    pub category: u32,
    pub confidence: f64,
    pub frame_index: u64,
}

impl DetectedObject {
    pub fn new(
        bbox: SphericalBox,
        category: u32,
        confidence: f64,
        frame_index: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Range(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            bbox,
            category,
            confidence,
            frame_index,
        })
    }

    /// Ground truth carries confidence 1.
    pub fn truth(bbox: SphericalBox, category: u32, frame_index: u64) -> Self {
        Self {
            bbox,
            category,
            confidence: 1.0,
            frame_index,
        }
    }

    pub fn check_category(&self, categories: usize) -> Result<()> {
        if (self.category as usize) < categories {
            Ok(())
        } else {
            Err(Error::Range(format!(
                "category {} outside [0, {categories})",
                self.category
            )))
        }
    }
}
