//! Synthetic scene traces: a seeded birth-death process of objects on the sphere.

use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_lon, DetectedObject, SphericalBox};
use crate::{Error, Result};

/// A rectangle of the ERP frame (degrees) where objects may spawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnRegion {
    pub lat_min_deg: f64,
    pub lat_max_deg: f64,
    #[serde(default = "lon_min")]
    pub lon_min_deg: f64,
    #[serde(default = "lon_max")]
    pub lon_max_deg: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn lon_min() -> f64 {
    -180.0
}
fn lon_max() -> f64 {
    180.0
}
fn unit_weight() -> f64 {
    1.0
}

impl SpawnRegion {
    pub fn band(lat_min_deg: f64, lat_max_deg: f64) -> Self {
        Self {
            lat_min_deg,
            lat_max_deg,
            lon_min_deg: -180.0,
            lon_max_deg: 180.0,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceParams {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    /// Category ids are drawn uniformly from `0..categories`.
    pub categories: u32,
    pub initial_objects: usize,
    /// Mean number of births per frame (Poisson).
    pub birth_rate: f64,
    /// Mean object lifetime in frames (geometric); `None` keeps objects forever.
    pub mean_lifetime_frames: Option<f64>,
    pub regions: Vec<SpawnRegion>,
    /// NOA is log-uniform in `[noa_min, noa_max]`.
    pub noa_min: f64,
    pub noa_max: f64,
    /// Horizontal over vertical extent, uniform in `[aspect_min, aspect_max]`.
    pub aspect_min: f64,
    pub aspect_max: f64,
    /// Each object drifts in longitude at a constant rate drawn from `±max_drift_deg` per frame.
    pub max_drift_deg: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            frames: 300,
            width: 3840,
            height: 1920,
            categories: 6,
            initial_objects: 16,
            birth_rate: 0.08,
            mean_lifetime_frames: Some(200.0),
            regions: vec![
                SpawnRegion {
                    lat_min_deg: -15.0,
                    lat_max_deg: 5.0,
                    lon_min_deg: -45.0,
                    lon_max_deg: 5.0,
                    weight: 0.55,
                },
                SpawnRegion {
                    lat_min_deg: -10.0,
                    lat_max_deg: 10.0,
                    lon_min_deg: 110.0,
                    lon_max_deg: 150.0,
                    weight: 0.35,
                },
                SpawnRegion {
                    lat_min_deg: -20.0,
                    lat_max_deg: 20.0,
                    lon_min_deg: -180.0,
                    lon_max_deg: 180.0,
                    weight: 0.10,
                },
            ],
            noa_min: 5e-6,
            noa_max: 1e-2,
            aspect_min: 0.6,
            aspect_max: 1.8,
            max_drift_deg: 0.15,
        }
    }
}

impl TraceParams {
    /// No births, deaths or drift.
    pub fn stationary(self) -> Self {
        Self {
            birth_rate: 0.0,
            mean_lifetime_frames: None,
            max_drift_deg: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories == 0 {
            return Err(Error::config("categories", "must be positive"));
        }
        if self.regions.is_empty() {
            return Err(Error::config(
                "regions",
                "at least one spawn region is required",
            ));
        }
        for (k, r) in self.regions.iter().enumerate() {
            let ok = -90.0 <= r.lat_min_deg
                && r.lat_min_deg <= r.lat_max_deg
                && r.lat_max_deg <= 90.0
                && r.lon_min_deg <= r.lon_max_deg
                && r.weight > 0.0;
            if !ok {
                return Err(Error::config(
                    format!("regions[{k}]"),
                    "empty or inverted range",
                ));
            }
        }
        if !(self.noa_min > 0.0 && self.noa_min <= self.noa_max && self.noa_max < 1.0) {
            return Err(Error::config("noa_min", "need 0 < noa_min <= noa_max < 1"));
        }
        if !(self.aspect_min > 0.0 && self.aspect_min <= self.aspect_max) {
            return Err(Error::config(
                "aspect_min",
                "need 0 < aspect_min <= aspect_max",
            ));
        }
        if !(self.birth_rate >= 0.0 && self.birth_rate.is_finite()) {
            return Err(Error::config("birth_rate", "must be non-negative"));
        }
        if let Some(l) = self.mean_lifetime_frames {
            if !(l >= 1.0) {
                return Err(Error::config("mean_lifetime_frames", "must be at least 1"));
            }
        }
        if !(self.max_drift_deg >= 0.0) {
            return Err(Error::config("max_drift_deg", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTrace {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Ground truth per frame; frame `k` holds objects with `frame_index == k`.
    pub frames: Vec<Vec<DetectedObject>>,
}

struct Live {
    lon: f64,
    lat: f64,
    fov_h: f64,
    fov_v: f64,
    category: u32,
    drift: f64,
}

fn spawn(p: &TraceParams, rng: &mut ChaCha8Rng, total_weight: f64) -> Live {
    let mut pick = rng.gen::<f64>() * total_weight;
    let region = p
        .regions
        .iter()
        .find(|r| {
            pick -= r.weight;
            pick < 0.0
        })
        .unwrap_or_else(|| p.regions.last().expect("validated non-empty"));
    let lat = rng
        .gen_range(region.lat_min_deg..=region.lat_max_deg)
        .to_radians();
    let lon = normalize_lon(
        rng.gen_range(region.lon_min_deg..=region.lon_max_deg)
            .to_radians(),
    );
    let noa = (p.noa_min.ln() + rng.gen::<f64>() * (p.noa_max / p.noa_min).ln()).exp();
    let aspect = rng.gen_range(p.aspect_min..=p.aspect_max);
    let area = 4.0 * std::f64::consts::PI * noa;
    // small-angle split of the area, then the exact horizontal extent for that height
    let fov_v = (area / aspect).sqrt().min(std::f64::consts::PI);
    let fov_h = (area / (2.0 * (fov_v * 0.5).sin())).min(std::f64::consts::TAU);
    let category = rng.gen_range(0..p.categories);
    let drift = if p.max_drift_deg > 0.0 {
        rng.gen_range(-p.max_drift_deg..=p.max_drift_deg)
            .to_radians()
    } else {
        0.0
    };
    Live {
        lon,
        lat,
        fov_h,
        fov_v,
        category,
        drift,
    }
}

/// Generates a trace; identical parameters and seed give an identical trace.
pub fn generate_trace(p: &TraceParams, seed: u64) -> Result<SceneTrace> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_weight: f64 = p.regions.iter().map(|r| r.weight).sum();
    let births = (p.birth_rate > 0.0).then(|| Poisson::new(p.birth_rate).expect("positive rate"));
    let death = p.mean_lifetime_frames.map(|l| 1.0 / l);

    let mut live: Vec<Live> = (0..p.initial_objects)
        .map(|_| spawn(p, &mut rng, total_weight))
        .collect();
    let mut frames = Vec::with_capacity(p.frames);
    for f in 0..p.frames {
        if f > 0 {
            if let Some(q) = death {
                live.retain(|_| rng.gen::<f64>() >= q);
            }
            for o in &mut live {
                o.lon = normalize_lon(o.lon + o.drift);
            }
            if let Some(b) = &births {
                let n = b.sample(&mut rng) as usize;
                for _ in 0..n {
                    live.push(spawn(p, &mut rng, total_weight));
                }
            }
        }
        let objs = live
            .iter()
            .map(|o| {
                SphericalBox::new(o.lon, o.lat, o.fov_h, o.fov_v)
                    .map(|b| DetectedObject::truth(b, o.category, f as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(objs);
    }
    Ok(SceneTrace {
        width: p.width,
        height: p.height,
        seed,
        frames,
    })
}

/// One object as written to trace and detection files; angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub lon: f64,
    pub lat: f64,
    pub fov_h: f64,
    pub fov_v: f64,
    pub category: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl ObjectRecord {
    pub fn from_object(o: &DetectedObject, with_confidence: bool) -> Self {
        Self {
            lon: o.bbox.lon().to_degrees(),
            lat: o.bbox.lat().to_degrees(),
            fov_h: o.bbox.fov_h().to_degrees(),
            fov_v: o.bbox.fov_v().to_degrees(),
            category: o.category,
            confidence: with_confidence.then_some(o.confidence),
        }
    }

    pub fn to_object(&self, frame: u64) -> Result<DetectedObject> {
        let b = SphericalBox::from_degrees(self.lon, self.lat, self.fov_h, self.fov_v)?;
        DetectedObject::new(b, self.category, self.confidence.unwrap_or(1.0), frame)
    }
}

/// One line of a trace or detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame: u64,
    pub objects: Vec<ObjectRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_s: Option<f64>,
}

/// Optional first line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Frame(FrameRecord),
    Header { trace: TraceHeader },
}

pub fn write_trace<W: Write>(trace: &SceneTrace, mut out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Head<'a> {
        trace: &'a TraceHeader,
    }
    let header = TraceHeader {
        width: trace.width,
        height: trace.height,
        seed: trace.seed,
    };
    serde_json::to_writer(&mut out, &Head { trace: &header })?;
    out.write_all(b"\n")?;
    for (f, objs) in trace.frames.iter().enumerate() {
        write_frame(&mut out, f as u64, objs, false, None)?;
    }
    Ok(())
}

pub fn write_frame<W: Write>(
    mut out: W,
    frame: u64,
    objects: &[DetectedObject],
    with_confidence: bool,
    latency_s: Option<f64>,
) -> Result<()> {
    let rec = FrameRecord {
        frame,
        objects: objects
            .iter()
            .map(|o| ObjectRecord::from_object(o, with_confidence))
            .collect(),
        latency_s,
    };
    serde_json::to_writer(&mut out, &rec)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads frame lines (and an optional header); frames must be strictly increasing.
pub fn read_frames<R: BufRead>(input: R) -> Result<(Option<TraceHeader>, Vec<FrameRecord>)> {
    let mut header = None;
    let mut frames: Vec<FrameRecord> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line) {
            Ok(Line::Header { trace }) if frames.is_empty() && header.is_none() => {
                header = Some(trace)
            }
            Ok(Line::Header { .. }) => {
                return Err(Error::Invalid(format!(
                    "line {}: unexpected trace header",
                    n + 1
                )))
            }
            Ok(Line::Frame(f)) => {
                if frames.last().is_some_and(|p| p.frame >= f.frame) {
                    return Err(Error::Invalid(format!(
                        "line {}: frame {} not strictly increasing",
                        n + 1,
                        f.frame
                    )));
                }
                frames.push(f);
            }
            Err(e) => {
                // re-parse as a frame for a field-level message
                let detail = serde_json::from_str::<FrameRecord>(&line)
                    .err()
                    .unwrap_or(e);
                return Err(Error::Invalid(format!("line {}: {detail}", n + 1)));
            }
        }
    }
    Ok((header, frames))
}

/// Reads a trace file; frame gaps become empty frames.
pub fn read_trace<R: BufRead>(input: R) -> Result<SceneTrace> {
    let (header, records) = read_frames(input)?;
    let header = header.unwrap_or(TraceHeader {
        width: TraceParams::default().width,
        height: TraceParams::default().height,
        seed: 0,
    });
    let len = records.last().map_or(0, |r| r.frame as usize + 1);
    let mut frames = vec![Vec::new(); len];
    for r in records {
        frames[r.frame as usize] = r
            .objects
            .iter()
            .map(|o| o.to_object(r.frame))
            .collect::<Result<_>>()?;
    }
    Ok(SceneTrace {
        width: header.width,
        height: header.height,
        seed: header.seed,
        frames,
    })
}
