//! Deterministic simulation of the per-frame analytics loop and its baselines.

mod consistency;
mod detector;
mod io;
mod pipeline;
mod sweep;
mod trace;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::allocator::{solve, AllocInstance, ExecutionPlan, FEASIBILITY_SLACK};
use crate::eval::{mean_e2e_latency, sph_map, EvalConfig};
use crate::geometry::{cubemap_faces, spherical_nms, DetectedObject, DEFAULT_NMS_THRESHOLD};
use crate::predictor::{discovery_due, predict_srois, DetectionHistory, PredictorConfig, Sroi};
use crate::profiles::{
    estimate_delay, Compression, ModelProfile, NetworkState, Placement, ProfileSet, SizeClassifier,
    DEFAULT_BANDWIDTH_BPS, DEFAULT_CATEGORIES, DEFAULT_NETWORK_WINDOW,
};
use crate::{Error, Result};

pub use consistency::{estimator_consistency, ConsistencyCell};
pub use detector::{
    detection_probability, simulate_detection, DetectionView, DetectorNoise, DetectorSettings,
    ViewShape, DEFAULT_MIN_PIXELS,
};
pub use io::{read_detections, read_results_csv, write_outputs, ResultRow, OUTPUT_FILES};
pub use pipeline::{execute_pipeline, execute_serial, TaskTiming};
pub use sweep::{budget_sweep, SweepPoint};
pub use trace::{
    generate_trace, read_frames, read_trace, write_frame, write_trace, FrameRecord, ObjectRecord,
    SceneTrace, SpawnRegion, TraceHeader, TraceParams,
};

pub const SIM_SCHEMA_VERSION: u32 = 1;

/// Which analysis pipeline to simulate. Model indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    OmniSense,
    Erp(usize),
    CubeMap(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::OmniSense => write!(f, "omnisense"),
            Method::Erp(i) => write!(f, "erp:{i}"),
            Method::CubeMap(i) => write!(f, "cubemap:{i}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::config(
                "method",
                format!("`{s}` is not omnisense, erp:<i> or cubemap:<i>"),
            )
        };
        if s == "omnisense" {
            return Ok(Method::OmniSense);
        }
        let (kind, idx) = s.split_once(':').ok_or_else(bad)?;
        let idx: usize = idx.parse().map_err(|_| bad())?;
        if idx == 0 {
            return Err(bad());
        }
        match kind {
            "erp" => Ok(Method::Erp(idx)),
            "cubemap" => Ok(Method::CubeMap(idx)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where `simulate` gets its scene from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum TraceSource {
    Path(PathBuf),
    Generate {
        #[serde(default)]
        params: TraceParams,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub version: u32,
    pub method: Method,
    pub budget_s: f64,
    pub compression: Compression,
    pub bandwidth_bps: f64,
    pub rtt_s: f64,
    /// Log-normal sigma of the realized network delay; 0 disables jitter.
    pub network_jitter: f64,
    pub network_window: usize,
    pub detector_seed: u64,
    pub plan_seed: u64,
    pub network_seed: u64,
    pub min_pixels: f64,
    pub nms_threshold: f64,
    /// Fixed per-frame scheduling cost added to every frame, seconds.
    pub overhead_s: f64,
    /// Run cube faces strictly one after another instead of pipelining them.
    pub cubemap_serial: bool,
    /// Model used for whole-frame discovery; defaults to the most accurate remote model.
    pub discovery_model: Option<usize>,
    /// Also run discovery every this many frames.
    pub discovery_interval: Option<usize>,
    /// Append a whole-frame pass to a planned frame whenever the remaining budget allows.
    pub opportunistic_discovery: bool,
    pub noise: DetectorNoise,
    pub predictor: PredictorConfig,
    pub size_classifier: SizeClassifier,
    pub categories: usize,
    /// Model-profile file; the built-in set when absent.
    pub profiles: Option<PathBuf>,
    pub trace: Option<TraceSource>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            version: SIM_SCHEMA_VERSION,
            method: Method::OmniSense,
            budget_s: 1.0,
            compression: Compression::Lossless,
            bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
            rtt_s: 0.0,
            network_jitter: 0.0,
            network_window: DEFAULT_NETWORK_WINDOW,
            detector_seed: 1,
            plan_seed: 1,
            network_seed: 1,
            min_pixels: DEFAULT_MIN_PIXELS,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
            overhead_s: 0.0,
            cubemap_serial: false,
            discovery_model: None,
            discovery_interval: None,
            opportunistic_discovery: false,
            noise: DetectorNoise::default(),
            predictor: PredictorConfig::default(),
            size_classifier: SizeClassifier::default(),
            categories: DEFAULT_CATEGORIES,
            profiles: None,
            trace: None,
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = Error::parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SIM_SCHEMA_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported version {}", self.version),
            ));
        }
        if !(self.budget_s > 0.0) {
            return Err(Error::config("budget_s", "must be positive"));
        }
        if !(self.bandwidth_bps > 0.0 && self.bandwidth_bps.is_finite()) {
            return Err(Error::config("bandwidth_bps", "must be positive"));
        }
        for (name, v) in [
            ("rtt_s", self.rtt_s),
            ("network_jitter", self.network_jitter),
            ("min_pixels", self.min_pixels),
            ("overhead_s", self.overhead_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be a finite non-negative number"));
            }
        }
        if !(self.nms_threshold > 0.0 && self.nms_threshold <= 1.0) {
            return Err(Error::config("nms_threshold", "must lie in (0, 1]"));
        }
        if self.network_window == 0 {
            return Err(Error::config("network_window", "must be at least 1"));
        }
        if self.categories == 0 {
            return Err(Error::config("categories", "must be positive"));
        }
        if self.discovery_interval == Some(0) {
            return Err(Error::config("discovery_interval", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.noise.false_positive_rate) {
            return Err(Error::config(
                "noise.false_positive_rate",
                "must lie in [0, 1]",
            ));
        }
        self.predictor.validate()?;
        self.size_classifier.validate()?;
        Ok(())
    }

    pub fn detector_settings(&self) -> DetectorSettings {
        DetectorSettings {
            classifier: self.size_classifier,
            min_pixels: self.min_pixels,
            noise: self.noise,
            seed: self.detector_seed,
            categories: self.categories as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u64,
    pub detections: Vec<DetectedObject>,
    pub e2e_latency: f64,
    /// Latency predicted from delay estimates for everything that ran.
    pub estimated_latency: f64,
    pub plan: Option<ExecutionPlan>,
    /// Short description of what ran: an assignment, `discovery:<i>`, `erp:<i>` or `cubemap:<i>`.
    pub plan_label: String,
    pub discovery: bool,
    pub srois: usize,
}

/// Simulated detections of `model` on the perspective image of SRoI `j`.
fn detect_sroi(
    s: &Sroi,
    j: usize,
    model: &ModelProfile,
    truth: &[DetectedObject],
    frame: u64,
    settings: &DetectorSettings,
) -> Result<Vec<DetectedObject>> {
    let view = DetectionView::perspective(s.bbox.center(), s.pi_fov(), model.input_side)?;
    let mut found = simulate_detection(model, &view, truth, frame, j as u64, settings);
    if s.special {
        // an enlarged region keeps only its largest detection
        found.sort_by(|a, b| b.bbox.area().total_cmp(&a.bbox.area()));
        found.truncate(1);
    }
    Ok(found)
}

/// Mutable state of one simulated run.
pub struct Simulator<'a> {
    cfg: SimConfig,
    profiles: &'a ProfileSet,
    settings: DetectorSettings,
    history: DetectionHistory,
    net: NetworkState,
    net_rng: ChaCha8Rng,
    sroi_counts: Vec<usize>,
    frames_seen: usize,
    last_discovery: Option<usize>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn frame_seed(seed: u64, frame: u64) -> u64 {
    seed ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &SimConfig, profiles: &'a ProfileSet) -> Result<Self> {
        cfg.validate()?;
        if profiles.categories != cfg.categories {
            return Err(Error::config(
                "categories",
                format!(
                    "profiles describe {} categories, config {}",
                    profiles.categories, cfg.categories
                ),
            ));
        }
        let model_count = profiles.real_models().len();
        let check = |field: &str, i: usize| {
            if i == 0 || i > model_count {
                Err(Error::config(
                    field,
                    format!("model {i} not in 1..={model_count}"),
                ))
            } else {
                Ok(())
            }
        };
        match cfg.method {
            Method::Erp(i) | Method::CubeMap(i) => check("method", i)?,
            Method::OmniSense => {}
        }
        if let Some(i) = cfg.discovery_model {
            check("discovery_model", i)?;
        }
        Ok(Self {
            cfg: cfg.clone(),
            profiles,
            settings: cfg.detector_settings(),
            history: DetectionHistory::new(cfg.predictor.history_frames),
            net: NetworkState::new(cfg.network_window, cfg.bandwidth_bps, cfg.rtt_s),
            net_rng: ChaCha8Rng::seed_from_u64(cfg.network_seed),
            sroi_counts: Vec::new(),
            frames_seen: 0,
            last_discovery: None,
        })
    }

    pub fn network(&self) -> &NetworkState {
        &self.net
    }

    pub fn history(&self) -> &DetectionHistory {
        &self.history
    }

    fn model(&self, index: usize) -> &'a ModelProfile {
        &self.profiles.models[index]
    }

    fn discovery_model(&self) -> &'a ModelProfile {
        match self.cfg.discovery_model {
            Some(i) => self.model(i),
            None => self
                .profiles
                .most_accurate_remote()
                .unwrap_or_else(|| self.profiles.models.last().expect("non-empty profile set")),
        }
    }

    /// Realized delivery delay of one request; also fed to the passive profiler.
    fn deliver(&mut self, model: &ModelProfile) -> Result<f64> {
        if model.placement == Placement::Local {
            return Ok(0.0);
        }
        let bpp = self.profiles.bytes_per_pixel(self.cfg.compression)?;
        let mut d = self.net.transfer_time(model.input_side, bpp);
        if self.cfg.network_jitter > 0.0 {
            let ln = LogNormal::new(0.0, self.cfg.network_jitter)
                .map_err(|e| Error::config("network_jitter", e.to_string()))?;
            d *= ln.sample(&mut self.net_rng);
        }
        self.net.record(model.index, d);
        Ok(d)
    }

    /// Realized `(preprocess, inference)` of one request to `model`.
    fn realize(&mut self, model: &ModelProfile) -> Result<(f64, f64)> {
        let side = model.input_side;
        let mut pre = self.profiles.device.projection(side)?;
        if model.placement == Placement::Remote {
            pre += self.profiles.device.encode(side, self.cfg.compression)?;
        }
        let net = self.deliver(model)?;
        Ok((pre, net + model.infer_latency))
    }

    fn nms(&self, dets: Vec<DetectedObject>) -> Vec<DetectedObject> {
        spherical_nms(&dets, self.cfg.nms_threshold)
    }

    /// Runs the configured method on one frame of ground truth.
    pub fn run_frame(&mut self, frame: u64, truth: &[DetectedObject]) -> Result<FrameResult> {
        let r = match self.cfg.method {
            Method::OmniSense => self.run_omnisense_frame(frame, truth),
            Method::Erp(i) => self.run_erp_baseline(frame, truth, i),
            Method::CubeMap(i) => self.run_cubemap_baseline(frame, truth, i),
        };
        self.frames_seen += 1;
        r
    }

    fn discovery_now(&self) -> bool {
        if self.frames_seen == 0 || self.last_discovery.is_none() {
            return true;
        }
        if let (Some(k), Some(last)) = (self.cfg.discovery_interval, self.last_discovery) {
            if self.frames_seen - last >= k {
                return true;
            }
        }
        discovery_due(&self.sroi_counts, &self.cfg.predictor)
    }

    /// SRoIs the predictor derives from the current detection history.
    pub fn predicted_srois(&self) -> Result<Vec<Sroi>> {
        predict_srois(
            &self.history.objects(),
            &self.cfg.predictor,
            &self.cfg.size_classifier,
            self.cfg.categories,
        )
    }

    pub fn run_omnisense_frame(
        &mut self,
        frame: u64,
        truth: &[DetectedObject],
    ) -> Result<FrameResult> {
        if self.discovery_now() {
            return self.run_discovery(frame, truth);
        }
        let srois = self.predicted_srois()?;
        self.sroi_counts.push(srois.len());
        let inst = AllocInstance::build(
            &srois,
            self.profiles,
            &self.net,
            self.cfg.compression,
            self.cfg.budget_s,
        )?;
        let plan = solve(&inst, frame_seed(self.cfg.plan_seed, frame));

        let mut tasks = Vec::new();
        let mut executed = Vec::new();
        for &j in &plan.order {
            let i = plan.assignment[j];
            if i == 0 {
                continue;
            }
            let model = self.model(i);
            tasks.push(self.realize(model)?);
            executed.push((j, model));
        }
        let mut estimated = plan.latency;
        let extra = if self.cfg.opportunistic_discovery {
            self.spare_discovery_model(&inst, &plan)?
        } else {
            None
        };
        if let Some((model, latency)) = extra {
            tasks.push(self.realize(model)?);
            estimated = latency;
        }
        let (_, end) = execute_pipeline(&tasks);

        let mut dets = Vec::new();
        for (j, model) in executed {
            dets.extend(detect_sroi(
                &srois[j],
                j,
                model,
                truth,
                frame,
                &self.settings,
            )?);
        }
        let mut label = plan
            .assignment
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        if let Some((model, _)) = extra {
            let view = DetectionView::erp(model.input_side);
            dets.extend(simulate_detection(
                model,
                &view,
                truth,
                frame,
                srois.len() as u64,
                &self.settings,
            ));
            label.push_str(&format!(" +discovery:{}", model.index));
        }
        let dets = self.nms(dets);
        self.history.push_frame(frame, dets.clone());

        Ok(FrameResult {
            frame,
            detections: dets,
            e2e_latency: self.cfg.overhead_s + end,
            estimated_latency: self.cfg.overhead_s + estimated,
            plan_label: label,
            srois: srois.len(),
            plan: Some(plan),
            discovery: extra.is_some(),
        })
    }

    /// Most accurate remote model whose whole-frame pass still fits after `plan`, with the
    /// resulting estimated completion time.
    fn spare_discovery_model(
        &self,
        inst: &AllocInstance,
        plan: &ExecutionPlan,
    ) -> Result<Option<(&'a ModelProfile, f64)>> {
        let (mut tp, mut t) = (0.0, 0.0);
        for &j in &plan.order {
            let i = plan.assignment[j];
            if i != 0 {
                let (dp, di) = inst.delays(j, i);
                (tp, t) = (tp + dp, f64::max(tp + dp + di, t + di));
            }
        }
        let mut candidates: Vec<&'a ModelProfile> = self
            .profiles
            .real_models()
            .iter()
            .filter(|m| m.placement == Placement::Remote)
            .collect();
        candidates.sort_by(|a, b| mean(&b.gav).total_cmp(&mean(&a.gav)));
        for m in candidates {
            let d = estimate_delay(m, self.profiles, &self.net, self.cfg.compression)?;
            let done = f64::max(tp + d.total(), t + d.inference);
            if done <= self.cfg.budget_s + FEASIBILITY_SLACK {
                return Ok(Some((m, done)));
            }
        }
        Ok(None)
    }

    fn run_discovery(&mut self, frame: u64, truth: &[DetectedObject]) -> Result<FrameResult> {
        let model = self.discovery_model();
        let (pre, inf) = self.realize(model)?;
        let view = DetectionView::erp(model.input_side);
        let found = simulate_detection(model, &view, truth, frame, 0, &self.settings);
        let dets = self.nms(found);
        self.history.push_frame(frame, Vec::new());
        self.history.absorb_discovery(frame, &dets);
        self.sroi_counts.clear();
        self.last_discovery = Some(self.frames_seen);
        Ok(FrameResult {
            frame,
            detections: dets,
            e2e_latency: self.cfg.overhead_s + pre + inf,
            estimated_latency: self.cfg.overhead_s + pre + inf,
            plan: None,
            plan_label: format!("discovery:{}", model.index),
            discovery: true,
            srois: 0,
        })
    }

    pub fn run_erp_baseline(
        &mut self,
        frame: u64,
        truth: &[DetectedObject],
        model: usize,
    ) -> Result<FrameResult> {
        let model = self.model(model);
        let (pre, inf) = self.realize(model)?;
        let view = DetectionView::erp(model.input_side);
        let dets = self.nms(simulate_detection(
            model,
            &view,
            truth,
            frame,
            0,
            &self.settings,
        ));
        Ok(FrameResult {
            frame,
            detections: dets,
            e2e_latency: self.cfg.overhead_s + pre + inf,
            estimated_latency: self.cfg.overhead_s + pre + inf,
            plan: None,
            plan_label: Method::Erp(model.index).to_string(),
            discovery: false,
            srois: 0,
        })
    }

    pub fn run_cubemap_baseline(
        &mut self,
        frame: u64,
        truth: &[DetectedObject],
        model: usize,
    ) -> Result<FrameResult> {
        let model = self.model(model);
        let faces = cubemap_faces(model.input_side)?;
        let mut tasks = Vec::with_capacity(faces.len());
        let mut dets = Vec::new();
        for (k, face) in faces.into_iter().enumerate() {
            tasks.push(self.realize(model)?);
            let view = DetectionView {
                shape: ViewShape::Perspective(face),
                side: model.input_side,
            };
            dets.extend(simulate_detection(
                model,
                &view,
                truth,
                frame,
                k as u64,
                &self.settings,
            ));
        }
        let end = if self.cfg.cubemap_serial {
            execute_serial(&tasks)
        } else {
            execute_pipeline(&tasks).1
        };
        Ok(FrameResult {
            frame,
            detections: self.nms(dets),
            e2e_latency: self.cfg.overhead_s + end,
            estimated_latency: self.cfg.overhead_s + end,
            plan: None,
            plan_label: Method::CubeMap(model.index).to_string(),
            discovery: false,
            srois: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub budget_s: f64,
    pub frames: usize,
    pub mean_latency_s: Option<f64>,
    /// Sph-mAP at IoU 0.5 with 101-point interpolation; absent without ground truth.
    pub sph_map: Option<f64>,
    pub per_category_ap: std::collections::BTreeMap<u32, f64>,
    /// Mean estimated weighted accuracy of executed plans.
    pub mean_estimated_accuracy: Option<f64>,
    pub discovery_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub frames: Vec<FrameResult>,
    pub summary: Summary,
}

/// Runs the configured method over every frame of `trace`.
pub fn run_experiment(
    trace: &SceneTrace,
    cfg: &SimConfig,
    profiles: &ProfileSet,
) -> Result<Experiment> {
    let mut sim = Simulator::new(cfg, profiles)?;
    let mut frames = Vec::with_capacity(trace.frames.len());
    for (f, truth) in trace.frames.iter().enumerate() {
        frames.push(sim.run_frame(f as u64, truth)?);
    }
    let latencies: Vec<f64> = frames.iter().map(|r| r.e2e_latency).collect();
    let dets: Vec<Vec<DetectedObject>> = frames.iter().map(|r| r.detections.clone()).collect();
    let report = match sph_map(&dets, &trace.frames, &EvalConfig::default()) {
        Ok(r) => Some(r),
        Err(Error::Invalid(_)) => None,
        Err(e) => return Err(e),
    };
    let values: Vec<f64> = frames
        .iter()
        .filter_map(|r| r.plan.as_ref().map(|p| p.value))
        .collect();
    let summary = Summary {
        method: cfg.method.to_string(),
        budget_s: cfg.budget_s,
        frames: frames.len(),
        mean_latency_s: mean_e2e_latency(&latencies).ok(),
        sph_map: report.as_ref().map(|r| r.map),
        per_category_ap: report.map(|r| r.per_category).unwrap_or_default(),
        mean_estimated_accuracy: (!values.is_empty())
            .then(|| values.iter().sum::<f64>() / values.len() as f64),
        discovery_frames: frames.iter().filter(|r| r.discovery).count(),
    };
    Ok(Experiment { frames, summary })
}
