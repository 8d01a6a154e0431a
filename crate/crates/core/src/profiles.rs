//! Model variants, content-specific accuracy estimation and delay estimation.
//!
//! Accuracy vectors (gav) and content vectors (ccv) share one layout: `3·n` cells,
//! indexed `level · n + category` with levels ordered small, medium, large.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{sph_iou, DetectedObject};
use crate::predictor::Sroi;
use crate::{Error, Result};

/// COCO category count.
pub const DEFAULT_CATEGORIES: usize = 80;
/// Upper NOA bound of the small level (33.33th percentile of COCO object areas).
pub const SMALL_NOA_MAX: f64 = 0.0044;
/// Upper NOA bound of the medium level (66.66th percentile).
pub const MEDIUM_NOA_MAX: f64 = 0.0354;
/// Number of recent requests averaged for a model's delivery delay.
pub const DEFAULT_NETWORK_WINDOW: usize = 7;
/// Default uplink bandwidth in bits per second.
pub const DEFAULT_BANDWIDTH_BPS: f64 = 17.9e6;
/// Match threshold used when profiling accuracy vectors.
pub const PROFILE_IOU_THRESHOLD: f64 = 0.5;

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SizeLevel {
    Small,
    Medium,
    Large,
}

impl SizeLevel {
    pub const ALL: [SizeLevel; 3] = [SizeLevel::Small, SizeLevel::Medium, SizeLevel::Large];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Position of `(level, category)` in a gav/ccv of `categories` categories.
pub fn cell_index(level: SizeLevel, category: u32, categories: usize) -> usize {
    level.index() * categories + category as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeClassifier {
    pub small_max: f64,
    pub medium_max: f64,
}

impl Default for SizeClassifier {
    fn default() -> Self {
        Self {
            small_max: SMALL_NOA_MAX,
            medium_max: MEDIUM_NOA_MAX,
        }
    }
}

impl SizeClassifier {
    pub fn new(small_max: f64, medium_max: f64) -> Result<Self> {
        let c = Self {
            small_max,
            medium_max,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.small_max > 0.0 && self.small_max < self.medium_max && self.medium_max < 1.0) {
            return Err(Error::config(
                "size_classifier",
                "thresholds must satisfy 0 < small_max < medium_max < 1",
            ));
        }
        Ok(())
    }

    /// Small iff `noa ≤ small_max`, medium iff `noa ≤ medium_max`, large otherwise.
    pub fn level(&self, noa: f64) -> Result<SizeLevel> {
        if !(noa > 0.0 && noa <= 1.0) {
            return Err(Error::Range(format!("NOA {noa} outside (0, 1]")));
        }
        Ok(if noa <= self.small_max {
            SizeLevel::Small
        } else if noa <= self.medium_max {
            SizeLevel::Medium
        } else {
            SizeLevel::Large
        })
    }
}

pub fn size_level(noa: f64, cls: &SizeClassifier) -> Result<SizeLevel> {
    cls.level(noa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Local,
    Remote,
}

/// Image compression applied to a PI before delivery.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    #[default]
    Lossless,
    Q100,
    Q75,
    Q50,
    Q25,
}

impl Compression {
    pub const ALL: [Compression; 5] = [
        Compression::Lossless,
        Compression::Q100,
        Compression::Q75,
        Compression::Q50,
        Compression::Q25,
    ];

    pub fn default_bytes_per_pixel(self) -> f64 {
        match self {
            Compression::Lossless => 1.5,
            Compression::Q100 => 0.8,
            Compression::Q75 => 0.35,
            Compression::Q50 => 0.25,
            Compression::Q25 => 0.18,
        }
    }
}

/// One detector variant. Index 0 is the "skip" pseudo-model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelProfile {
    pub index: usize,
    pub name: String,
    pub input_side: u32,
    pub placement: Placement,
    /// General accuracy vector, `3·n` entries.
    pub gav: Vec<f64>,
    /// Mean per-image inference time in seconds.
    pub infer_latency: f64,
}

impl ModelProfile {
    pub fn skip(categories: usize) -> Self {
        Self {
            index: 0,
            name: "skip".into(),
            input_side: 0,
            placement: Placement::Local,
            gav: vec![0.0; 3 * categories],
            infer_latency: 0.0,
        }
    }

    pub fn is_skip(&self) -> bool {
        self.index == 0
    }

    pub fn gav_entry(&self, level: SizeLevel, category: u32) -> f64 {
        let n = self.gav.len() / 3;
        self.gav[cell_index(level, category, n)]
    }
}

/// Device-side preprocessing costs, keyed by PI resolution (side length in pixels).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviceProfile {
    pub projection_latency: BTreeMap<u32, f64>,
    pub encode_latency: BTreeMap<u32, BTreeMap<Compression, f64>>,
}

impl DeviceProfile {
    pub fn projection(&self, side: u32) -> Result<f64> {
        self.projection_latency
            .get(&side)
            .copied()
            .ok_or_else(|| Error::config("projection_latency_s", format!("no entry for {side}px")))
    }

    pub fn encode(&self, side: u32, compression: Compression) -> Result<f64> {
        self.encode_latency
            .get(&side)
            .and_then(|m| m.get(&compression))
            .copied()
            .ok_or_else(|| {
                Error::config(
                    "encode_latency_s",
                    format!("no entry for {side}px / {compression:?}"),
                )
            })
    }
}

/// A loaded profile set: skip plus `m` real models, device costs and codec sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub categories: usize,
    /// `models[0]` is skip; `models[i].index == i`.
    pub models: Vec<ModelProfile>,
    pub device: DeviceProfile,
    pub bytes_per_pixel: BTreeMap<Compression, f64>,
}

impl ProfileSet {
    pub fn model(&self, index: usize) -> Option<&ModelProfile> {
        self.models.get(index)
    }

    pub fn real_models(&self) -> &[ModelProfile] {
        &self.models[1..]
    }

    pub fn bytes_per_pixel(&self, compression: Compression) -> Result<f64> {
        self.bytes_per_pixel
            .get(&compression)
            .copied()
            .ok_or_else(|| {
                Error::config("bytes_per_pixel", format!("no entry for {compression:?}"))
            })
    }

    /// Remote model with the highest mean accuracy; the default discovery model.
    pub fn most_accurate_remote(&self) -> Option<&ModelProfile> {
        self.real_models()
            .iter()
            .filter(|m| m.placement == Placement::Remote)
            .max_by(|a, b| mean(&a.gav).total_cmp(&mean(&b.gav)))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProfileFile = Error::parse_json(text)?;
        file.into_profiles()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> ProfileFile {
        let n = self.categories;
        ProfileFile {
            version: PROFILE_SCHEMA_VERSION,
            categories: n,
            bytes_per_pixel: Some(self.bytes_per_pixel.clone()),
            projection_latency_s: self.device.projection_latency.clone(),
            encode_latency_s: self.device.encode_latency.clone(),
            models: self
                .real_models()
                .iter()
                .map(|m| ModelRecord {
                    name: m.name.clone(),
                    input_side: m.input_side,
                    placement: m.placement,
                    infer_latency_s: m.infer_latency,
                    gav: m.gav.chunks(n).map(|c| c.to_vec()).collect(),
                })
                .collect(),
        }
    }

    /// Five-variant family with accuracy and cost increasing together: one local tiny
    /// model and four remote models of growing input size.
    pub fn builtin(categories: usize) -> Self {
        // (name, side, placement, inference s, small/medium/large base accuracy)
        let variants: [(&str, u32, Placement, f64, [f64; 3]); 5] = [
            (
                "yolov4-tiny-416",
                416,
                Placement::Local,
                0.12,
                [0.05, 0.32, 0.58],
            ),
            (
                "yolov4-csp-512",
                512,
                Placement::Remote,
                0.025,
                [0.16, 0.56, 0.80],
            ),
            (
                "yolov4-csp-640",
                640,
                Placement::Remote,
                0.035,
                [0.22, 0.63, 0.85],
            ),
            (
                "yolov4-p5-896",
                896,
                Placement::Remote,
                0.06,
                [0.29, 0.70, 0.89],
            ),
            (
                "yolov4-p6-1280",
                1280,
                Placement::Remote,
                0.11,
                [0.36, 0.76, 0.92],
            ),
        ];
        let category_factor = |c: usize| [1.0, 0.92, 0.85][c % 3];

        let mut models = vec![ModelProfile::skip(categories)];
        for (k, (name, side, placement, infer, base)) in variants.into_iter().enumerate() {
            let mut gav = Vec::with_capacity(3 * categories);
            for level_acc in base {
                gav.extend((0..categories).map(|c| level_acc * category_factor(c)));
            }
            models.push(ModelProfile {
                index: k + 1,
                name: name.into(),
                input_side: side,
                placement,
                gav,
                infer_latency: infer,
            });
        }

        let mut device = DeviceProfile::default();
        let encode_scale = |c: Compression| match c {
            Compression::Lossless => 1.0,
            Compression::Q100 => 0.6,
            Compression::Q75 => 0.5,
            Compression::Q50 => 0.45,
            Compression::Q25 => 0.4,
        };
        for side in [416u32, 512, 640, 896, 1280] {
            let pixels = (side as f64 / 512.0).powi(2);
            device.projection_latency.insert(side, 0.03 * pixels);
            device.encode_latency.insert(
                side,
                Compression::ALL
                    .iter()
                    .map(|&c| (c, 0.04 * pixels * encode_scale(c)))
                    .collect(),
            );
        }
        Self {
            categories,
            models,
            device,
            bytes_per_pixel: Compression::ALL
                .iter()
                .map(|&c| (c, c.default_bytes_per_pixel()))
                .collect(),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// On-disk model-profile document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub version: u32,
    pub categories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes_per_pixel: Option<BTreeMap<Compression, f64>>,
    pub projection_latency_s: BTreeMap<u32, f64>,
    pub encode_latency_s: BTreeMap<u32, BTreeMap<Compression, f64>>,
    pub models: Vec<ModelRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub name: String,
    pub input_side: u32,
    pub placement: Placement,
    pub infer_latency_s: f64,
    /// 3 x n matrix: rows small, medium, large.
    pub gav: Vec<Vec<f64>>,
}

fn check_nonneg(field: impl Fn() -> String, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::config(
            field(),
            format!("{v} is not a finite non-negative number"),
        ));
    }
    Ok(())
}

impl ProfileFile {
    pub fn into_profiles(self) -> Result<ProfileSet> {
        if self.version != PROFILE_SCHEMA_VERSION {
            return Err(Error::config(
                "version",
                format!(
                    "unsupported version {}, expected {PROFILE_SCHEMA_VERSION}",
                    self.version
                ),
            ));
        }
        let n = self.categories;
        if n == 0 {
            return Err(Error::config("categories", "must be positive"));
        }
        if self.models.is_empty() {
            return Err(Error::config("models", "at least one model is required"));
        }
        let bytes_per_pixel = self.bytes_per_pixel.unwrap_or_else(|| {
            Compression::ALL
                .iter()
                .map(|&c| (c, c.default_bytes_per_pixel()))
                .collect()
        });
        for (c, v) in &bytes_per_pixel {
            check_nonneg(|| format!("bytes_per_pixel.{c:?}"), *v)?;
        }
        for (side, v) in &self.projection_latency_s {
            check_nonneg(|| format!("projection_latency_s.{side}"), *v)?;
        }
        for (side, m) in &self.encode_latency_s {
            for (c, v) in m {
                check_nonneg(|| format!("encode_latency_s.{side}.{c:?}"), *v)?;
            }
        }

        let mut models = vec![ModelProfile::skip(n)];
        for (k, rec) in self.models.into_iter().enumerate() {
            let field = |f: &str| format!("models[{k}].{f}");
            if rec.input_side == 0 {
                return Err(Error::config(field("input_side"), "must be positive"));
            }
            check_nonneg(|| field("infer_latency_s"), rec.infer_latency_s)?;
            if rec.gav.len() != 3 || rec.gav.iter().any(|row| row.len() != n) {
                return Err(Error::config(
                    field("gav"),
                    format!("expected a 3 x {n} matrix"),
                ));
            }
            let gav: Vec<f64> = rec.gav.into_iter().flatten().collect();
            if let Some((i, v)) = gav
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
            {
                return Err(Error::config(
                    format!("models[{k}].gav[{}][{}]", i / n, i % n),
                    format!("{v} outside [0, 1]"),
                ));
            }
            models.push(ModelProfile {
                index: k + 1,
                name: rec.name,
                input_side: rec.input_side,
                placement: rec.placement,
                gav,
                infer_latency: rec.infer_latency_s,
            });
        }
        Ok(ProfileSet {
            categories: n,
            models,
            device: DeviceProfile {
                projection_latency: self.projection_latency_s,
                encode_latency: self.encode_latency_s,
            },
            bytes_per_pixel,
        })
    }
}

/// Passive per-model delivery-delay profiler over the most recent `window` requests.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    window: usize,
    samples: BTreeMap<usize, VecDeque<f64>>,
    pub bandwidth_bps: f64,
    pub rtt_s: f64,
}

impl Default for NetworkState {
    fn default() -> Self {
        Self::new(DEFAULT_NETWORK_WINDOW, DEFAULT_BANDWIDTH_BPS, 0.0)
    }
}

impl NetworkState {
    pub fn new(window: usize, bandwidth_bps: f64, rtt_s: f64) -> Self {
        Self {
            window: window.max(1),
            samples: BTreeMap::new(),
            bandwidth_bps,
            rtt_s,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Adds a delivery-delay sample, evicting the oldest beyond the window.
    pub fn record(&mut self, model: usize, delay_s: f64) {
        let buf = self.samples.entry(model).or_default();
        buf.push_back(delay_s.max(0.0));
        while buf.len() > self.window {
            buf.pop_front();
        }
    }

    pub fn samples(&self, model: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples.get(&model).into_iter().flatten().copied()
    }

    /// Analytic transfer time for a `side x side` image.
    pub fn transfer_time(&self, side: u32, bytes_per_pixel: f64) -> f64 {
        let bits = (side as f64).powi(2) * bytes_per_pixel * 8.0;
        bits / self.bandwidth_bps + self.rtt_s
    }
}

/// Expected delivery delay: 0 for local models, the windowed mean for remote models with
/// history, and the analytic size/bandwidth estimate otherwise.
pub fn estimate_network_delay(
    model: &ModelProfile,
    net: &NetworkState,
    bytes_per_pixel: f64,
) -> f64 {
    if model.is_skip() || model.placement == Placement::Local {
        return 0.0;
    }
    let (count, sum) = net
        .samples(model.index)
        .fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if count > 0 {
        sum / count as f64
    } else {
        net.transfer_time(model.input_side, bytes_per_pixel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DelayEstimate {
    /// Projection plus optional encoding, seconds.
    pub preprocess: f64,
    /// Delivery plus model inference, seconds.
    pub inference: f64,
}

impl DelayEstimate {
    pub fn total(&self) -> f64 {
        self.preprocess + self.inference
    }
}

pub fn estimate_delay(
    model: &ModelProfile,
    profiles: &ProfileSet,
    net: &NetworkState,
    compression: Compression,
) -> Result<DelayEstimate> {
    if model.is_skip() {
        return Ok(DelayEstimate::default());
    }
    let side = model.input_side;
    let mut preprocess = profiles.device.projection(side)?;
    let mut delivery = 0.0;
    if model.placement == Placement::Remote {
        preprocess += profiles.device.encode(side, compression)?;
        delivery = estimate_network_delay(model, net, profiles.bytes_per_pixel(compression)?);
    }
    Ok(DelayEstimate {
        preprocess,
        inference: delivery + model.infer_latency,
    })
}

/// Dot product of a gav and a ccv.
pub fn dot_accuracy(gav: &[f64], ccv: &[f64]) -> Result<f64> {
    if gav.len() != ccv.len() {
        return Err(Error::config(
            "gav",
            format!(
                "length {} does not match ccv length {}",
                gav.len(),
                ccv.len()
            ),
        ));
    }
    Ok(gav.iter().zip(ccv).map(|(a, p)| a * p).sum())
}

/// Estimated detection accuracy of `model` on an SRoI: `A_i · P_j` (0 for skip).
pub fn estimate_accuracy(model: &ModelProfile, sroi: &Sroi) -> Result<f64> {
    if model.is_skip() {
        return Ok(0.0);
    }
    dot_accuracy(&model.gav, &sroi.ccv)
}

/// `α_j · A_i · P_j`.
pub fn weighted_accuracy(model: &ModelProfile, sroi: &Sroi) -> Result<f64> {
    Ok(sroi.weight * estimate_accuracy(model, sroi)?)
}

/// Detections and ground truth for one analyzed view.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRun {
    pub truths: Vec<DetectedObject>,
    pub detections: Vec<DetectedObject>,
    /// Solid angle of the analyzed view; object NOA is measured relative to it.
    pub view_area: f64,
}

/// Per-cell recall at IoU ≥ 0.5; cells without ground truth are 0.
pub fn profile_gav(
    runs: &[LabeledRun],
    cls: &SizeClassifier,
    categories: usize,
) -> Result<Vec<f64>> {
    let mut hits = vec![0usize; 3 * categories];
    let mut totals = vec![0usize; 3 * categories];
    for run in runs {
        let mut matched = vec![false; run.truths.len()];
        let mut order: Vec<&DetectedObject> = run.detections.iter().collect();
        order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        for d in order {
            let best = run
                .truths
                .iter()
                .enumerate()
                .filter(|(k, t)| !matched[*k] && t.category == d.category)
                .map(|(k, t)| (k, sph_iou(&t.bbox, &d.bbox)))
                .filter(|&(_, iou)| iou >= PROFILE_IOU_THRESHOLD)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((k, _)) = best {
                matched[k] = true;
            }
        }
        for (t, m) in run.truths.iter().zip(&matched) {
            t.check_category(categories)?;
            let noa = (t.bbox.area() / run.view_area).min(1.0);
            let cell = cell_index(cls.level(noa)?, t.category, categories);
            totals[cell] += 1;
            if *m {
                hits[cell] += 1;
            }
        }
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| if t == 0 { 0.0 } else { h as f64 / t as f64 })
        .collect())
}
