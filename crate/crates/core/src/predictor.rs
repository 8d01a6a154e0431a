//! SRoI prediction from recent detections, content vectors and the discovery trigger.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::geometry::{merged_fov, DetectedObject, SphericalBox};
use crate::profiles::{cell_index, SizeClassifier};
use crate::{Error, Result};

/// Widest perspective image extracted for an SRoI; oversized specials are clamped to it.
pub const MAX_PI_FOV: f64 = 160.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    /// SRoI field of view, radians.
    pub fov: f64,
    /// Enlargement applied to objects too large for one SRoI.
    pub gamma: f64,
    /// Frames of detections kept as history.
    pub history_frames: usize,
    pub discovery_min_srois: usize,
    pub discovery_window: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            fov: 60f64.to_radians(),
            gamma: 1.1,
            history_frames: 2,
            discovery_min_srois: 1,
            discovery_window: 3,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov > 0.0 && self.fov < PI) {
            return Err(Error::config("predictor.fov", "must lie in (0, π)"));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::config("predictor.gamma", "must be at least 1"));
        }
        if self.history_frames == 0 {
            return Err(Error::config(
                "predictor.history_frames",
                "must be at least 1",
            ));
        }
        if self.discovery_window == 0 {
            return Err(Error::config(
                "predictor.discovery_window",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

/// A predicted spherical region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct Sroi {
    pub bbox: SphericalBox,
    /// Occurrence probability per (size level, category) cell.
    pub ccv: Vec<f64>,
    /// Share of historical objects absorbed by this SRoI.
    pub weight: f64,
    pub members: Vec<DetectedObject>,
    /// Spawned by a single object too large for an `f x f` region.
    pub special: bool,
}

impl Sroi {
    /// FoV of the square perspective image extracted for this SRoI.
    pub fn pi_fov(&self) -> f64 {
        pi_fov_for(&self.bbox)
    }

    /// Solid angle of that perspective image.
    pub fn view_area(&self) -> f64 {
        pi_solid_angle(self.pi_fov())
    }
}

pub(crate) fn pi_fov_for(b: &SphericalBox) -> f64 {
    b.fov_h().max(b.fov_v()).min(MAX_PI_FOV)
}

/// Solid angle of a square gnomonic image with the given FoV.
pub fn pi_solid_angle(fov: f64) -> f64 {
    4.0 * (fov * 0.5).sin().powi(2).asin()
}

/// Frequency of each (size level, category) cell among `members`, with NOA taken
/// relative to the whole sphere.
pub fn compute_ccv(
    members: &[DetectedObject],
    cls: &SizeClassifier,
    categories: usize,
) -> Result<Vec<f64>> {
    compute_ccv_in_view(members, cls, categories, 4.0 * PI)
}

/// As [`compute_ccv`], with NOA measured relative to a view of solid angle `view_area`
/// (object area over view area, capped at 1).
pub fn compute_ccv_in_view(
    members: &[DetectedObject],
    cls: &SizeClassifier,
    categories: usize,
    view_area: f64,
) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Err(Error::Invalid("ccv of an empty member set".into()));
    }
    let mut ccv = vec![0.0; 3 * categories];
    let share = 1.0 / members.len() as f64;
    for m in members {
        m.check_category(categories)?;
        let noa = (m.bbox.area() / view_area).min(1.0);
        ccv[cell_index(cls.level(noa)?, m.category, categories)] += share;
    }
    Ok(ccv)
}

/// Whether the last `discovery_window` SRoI counts were all below `discovery_min_srois`.
pub fn discovery_due(recent_sroi_counts: &[usize], cfg: &PredictorConfig) -> bool {
    let w = cfg.discovery_window;
    recent_sroi_counts.len() >= w
        && recent_sroi_counts[recent_sroi_counts.len() - w..]
            .iter()
            .all(|&c| c < cfg.discovery_min_srois)
}

fn object_order(a: &DetectedObject, b: &DetectedObject) -> std::cmp::Ordering {
    a.frame_index
        .cmp(&b.frame_index)
        .then(b.confidence.total_cmp(&a.confidence))
        .then(a.category.cmp(&b.category))
        .then(a.bbox.lon().total_cmp(&b.bbox.lon()))
}

fn coverable(o: &DetectedObject, fov: f64) -> bool {
    o.bbox.fov_h() <= fov && o.bbox.fov_v() <= fov
}

/// Predicts the SRoIs of the next frame from historical detections.
///
/// Objects are visited by frame, descending confidence, category, then longitude. Each
/// coverable object joins the first SRoI whose merged FoV stays strictly below `f` in both
/// directions, or starts a new one; an object wider or taller than `f` spawns a special
/// SRoI of `γ` times its own FoV. Special SRoIs come first in the output, then regular
/// ones in creation order.
pub fn predict_srois(
    history: &[DetectedObject],
    cfg: &PredictorConfig,
    cls: &SizeClassifier,
    categories: usize,
) -> Result<Vec<Sroi>> {
    if history.is_empty() {
        return Ok(Vec::new());
    }
    let mut objects: Vec<&DetectedObject> = history.iter().collect();
    objects.sort_by(|a, b| object_order(a, b));

    let f = cfg.fov;
    let mut regular: Vec<Vec<DetectedObject>> = Vec::new();
    let mut special: Vec<DetectedObject> = Vec::new();
    for &o in &objects {
        if !coverable(o, f) {
            special.push(*o);
            continue;
        }
        let slot = regular.iter().position(|members| {
            merged_fov(members.iter().map(|m| &m.bbox).chain([&o.bbox]))
                .is_some_and(|m| m.fov_h < f && m.fov_v < f)
        });
        match slot {
            Some(k) => regular[k].push(*o),
            None => regular.push(vec![*o]),
        }
    }

    let total = objects.len() as f64;
    let mut out = Vec::with_capacity(special.len() + regular.len());
    for o in special {
        let bbox = SphericalBox::with_center(
            o.bbox.center(),
            (o.bbox.fov_h() * cfg.gamma).min(TAU),
            (o.bbox.fov_v() * cfg.gamma).min(PI),
        )?;
        let ccv = compute_ccv_in_view(&[o], cls, categories, pi_solid_angle(pi_fov_for(&bbox)))?;
        out.push(Sroi {
            bbox,
            ccv,
            weight: 1.0 / total,
            members: vec![o],
            special: true,
        });
    }
    let view = pi_solid_angle(f);
    for members in regular {
        let merged = merged_fov(members.iter().map(|m| &m.bbox)).expect("non-empty members");
        let bbox = SphericalBox::with_center(merged.center, f, f)?;
        let ccv = compute_ccv_in_view(&members, cls, categories, view)?;
        out.push(Sroi {
            bbox,
            ccv,
            weight: members.len() as f64 / total,
            members,
            special: false,
        });
    }
    Ok(out)
}

/// Detections of the most recent frames, newest last.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionHistory {
    capacity: usize,
    frames: VecDeque<(u64, Vec<DetectedObject>)>,
}

impl DetectionHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            frames: VecDeque::new(),
        }
    }

    pub fn push_frame(&mut self, frame_index: u64, detections: Vec<DetectedObject>) {
        self.frames.push_back((frame_index, detections));
        while self.frames.len() > self.capacity {
            self.frames.pop_front();
        }
    }

    /// Appends discovery detections to the newest frame's record.
    pub fn absorb_discovery(&mut self, frame_index: u64, detections: &[DetectedObject]) {
        if detections.is_empty() {
            return;
        }
        match self.frames.back_mut() {
            Some((_, dets)) => dets.extend_from_slice(detections),
            None => self.push_frame(frame_index, detections.to_vec()),
        }
    }

    pub fn objects(&self) -> Vec<DetectedObject> {
        self.frames
            .iter()
            .flat_map(|(_, d)| d.iter().copied())
            .collect()
    }

    pub fn newest_len(&self) -> usize {
        self.frames.back().map_or(0, |(_, d)| d.len())
    }

    pub fn is_empty(&self) -> bool {
        self.frames.iter().all(|(_, d)| d.is_empty())
    }
}
