//! Stochastic stand-in for a DNN detector, driven by a model's gav.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    gnomonic_unproject, DetectedObject, PiGrid, PlanarPoint, SphericalBox, SphericalCoord,
};
use crate::profiles::{cell_index, ModelProfile, SizeClassifier};
use crate::Result;

/// Default detectability floor in input pixels (a 4x4 footprint).
pub const DEFAULT_MIN_PIXELS: f64 = 16.0;

/// The image a model is run on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViewShape {
    /// The whole ERP frame resized to the model input.
    Sphere,
    Perspective(PiGrid),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionView {
    pub shape: ViewShape,
    /// Model input side in pixels.
    pub side: u32,
}

impl DetectionView {
    pub fn erp(side: u32) -> Self {
        Self {
            shape: ViewShape::Sphere,
            side,
        }
    }

    pub fn perspective(center: SphericalCoord, fov: f64, side: u32) -> Result<Self> {
        Ok(Self {
            shape: ViewShape::Perspective(PiGrid::new(center, fov, side)?),
            side,
        })
    }

    pub fn solid_angle(&self) -> f64 {
        match &self.shape {
            ViewShape::Sphere => 4.0 * PI,
            ViewShape::Perspective(g) => g.solid_angle(),
        }
    }

    pub fn covers(&self, p: SphericalCoord) -> bool {
        match &self.shape {
            ViewShape::Sphere => true,
            ViewShape::Perspective(g) => g.contains(p),
        }
    }

    /// Approximate pixel footprint of a region of solid angle `area`.
    pub fn footprint(&self, area: f64) -> f64 {
        area / self.solid_angle() * (self.side as f64).powi(2)
    }
}

/// Optional detector imperfections; both off by default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorNoise {
    /// Probability that a view yields one spurious detection.
    pub false_positive_rate: f64,
    /// Uniform center jitter bound, degrees.
    pub jitter_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSettings {
    pub classifier: SizeClassifier,
    pub min_pixels: f64,
    pub noise: DetectorNoise,
    pub seed: u64,
    pub categories: u32,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            classifier: SizeClassifier::default(),
            min_pixels: DEFAULT_MIN_PIXELS,
            noise: DetectorNoise::default(),
            seed: 0,
            categories: crate::profiles::DEFAULT_CATEGORIES as u32,
        }
    }
}

const WORDS_PER_OBJECT: u128 = 16;
const SPURIOUS_BASE: u128 = 1 << 64;

/// Random stream of one ground-truth object in one frame. Every model draws the same
/// numbers for the same object, so a more accurate model detects a superset.
fn object_stream(seed: u64, frame: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    rng.set_word_pos(index as u128 * WORDS_PER_OBJECT);
    rng
}

/// Probability that `model` detects an object of solid angle `area` in `view`, or `None`
/// when the object's footprint is below the detectability floor.
pub fn detection_probability(
    model: &ModelProfile,
    view: &DetectionView,
    area: f64,
    category: u32,
    settings: &DetectorSettings,
) -> Option<f64> {
    let footprint = view.footprint(area);
    if footprint < settings.min_pixels {
        return None;
    }
    let noa = (area / view.solid_angle()).min(1.0);
    let level = settings.classifier.level(noa).ok()?;
    let n = model.gav.len() / 3;
    Some(model.gav[cell_index(level, category, n)])
}

/// Simulated detections of `model` on `view` for one frame of ground truth.
///
/// An object whose center lies in the view and whose footprint reaches `min_pixels` is
/// detected with probability equal to the model's gav entry for its view-relative size
/// level and category. Detected boxes equal the true boxes unless jitter is enabled;
/// confidences are uniform in (0.5, 1].
pub fn simulate_detection(
    model: &ModelProfile,
    view: &DetectionView,
    truth: &[DetectedObject],
    frame: u64,
    view_id: u64,
    settings: &DetectorSettings,
) -> Vec<DetectedObject> {
    if model.is_skip() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (k, t) in truth.iter().enumerate() {
        if !view.covers(t.bbox.center()) {
            continue;
        }
        let Some(p) = detection_probability(model, view, t.bbox.area(), t.category, settings)
        else {
            continue;
        };
        let mut rng = object_stream(settings.seed, frame, k);
        if rng.gen::<f64>() >= p {
            continue;
        }
        let confidence = 1.0 - 0.5 * rng.gen::<f64>();
        let bbox = jitter(&t.bbox, settings.noise.jitter_deg, &mut rng);
        out.push(DetectedObject {
            bbox,
            category: t.category,
            confidence,
            frame_index: frame,
        });
    }
    if settings.noise.false_positive_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(frame);
        rng.set_word_pos(SPURIOUS_BASE + view_id as u128 * 64);
        if rng.gen::<f64>() < settings.noise.false_positive_rate {
            if let Some(d) = spurious(view, frame, settings.categories, &mut rng) {
                out.push(d);
            }
        }
    }
    out
}

fn jitter(b: &SphericalBox, bound_deg: f64, rng: &mut ChaCha8Rng) -> SphericalBox {
    if bound_deg <= 0.0 {
        return *b;
    }
    let bound = bound_deg.to_radians();
    let dlon = rng.gen_range(-bound..=bound);
    let dlat = rng.gen_range(-bound..=bound);
    let lat = (b.lat() + dlat).clamp(-PI / 2.0, PI / 2.0);
    SphericalBox::new(b.lon() + dlon, lat, b.fov_h(), b.fov_v()).unwrap_or(*b)
}

fn spurious(
    view: &DetectionView,
    frame: u64,
    categories: u32,
    rng: &mut ChaCha8Rng,
) -> Option<DetectedObject> {
    let center = match &view.shape {
        ViewShape::Sphere => {
            let lon = rng.gen_range(-PI..PI);
            let lat = rng.gen_range(-1.0f64..=1.0).asin();
            SphericalCoord::new(lon, lat).ok()?
        }
        ViewShape::Perspective(g) => {
            let h = g.half_extent();
            let q = PlanarPoint::new(rng.gen_range(-h..=h), rng.gen_range(-h..=h));
            gnomonic_unproject(g.center(), q).ok()?
        }
    };
    let side = rng.gen_range(1.0f64..8.0).to_radians();
    let bbox = SphericalBox::with_center(center, side, side).ok()?;
    Some(DetectedObject {
        bbox,
        category: rng.gen_range(0..categories.max(1)),
        confidence: 1.0 - 0.5 * rng.gen::<f64>(),
        frame_index: frame,
    })
}
