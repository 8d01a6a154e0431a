//! Sph-mAP and latency metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{sph_iou, DetectedObject};
use crate::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApInterpolation {
    AllPoints,
    #[default]
    #[serde(rename = "101-point")]
    Point101,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub interpolation: ApInterpolation,
    /// Restrict the mean to these categories; `None` uses every category with ground truth.
    pub categories: Option<Vec<u32>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            interpolation: ApInterpolation::Point101,
            categories: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::config("iou_threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub frame: usize,
    pub detection: DetectedObject,
    /// Index of the matched ground truth within its frame.
    pub truth: Option<usize>,
    /// Best SphIoU with any same-category ground truth that was still unmatched.
    pub iou: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: f64,
    pub per_category: BTreeMap<u32, f64>,
}

/// Greedy matching of one frame: detections by descending confidence (ties by category,
/// then input order) take the unmatched same-category truth of highest SphIoU at or above
/// `iou_threshold`.
pub fn match_frame(
    frame: usize,
    dets: &[DetectedObject],
    truths: &[DetectedObject],
    iou_threshold: f64,
) -> Vec<MatchRecord> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then(dets[a].category.cmp(&dets[b].category))
    });
    let mut taken = vec![false; truths.len()];
    order
        .into_iter()
        .map(|k| {
            let d = dets[k];
            let best = truths
                .iter()
                .enumerate()
                .filter(|(t, g)| !taken[*t] && g.category == d.category)
                .map(|(t, g)| (t, sph_iou(&g.bbox, &d.bbox)))
                .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                });
            let iou = best.map_or(0.0, |b| b.1);
            let truth = best.filter(|b| b.1 >= iou_threshold).map(|b| b.0);
            if let Some(t) = truth {
                taken[t] = true;
            }
            MatchRecord {
                frame,
                detection: d,
                truth,
                iou,
                true_positive: truth.is_some(),
            }
        })
        .collect()
}

/// Average precision of confidence-ranked hits against `positives` ground truths.
pub fn average_precision(ranked_hits: &[bool], positives: usize, mode: ApInterpolation) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(ranked_hits.len());
    for (k, &hit) in ranked_hits.iter().enumerate() {
        tp += hit as usize;
        points.push((tp as f64 / positives as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope: best precision at any recall at or beyond this point
    let mut envelope = points.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k].1 = envelope[k].1.max(envelope[k + 1].1);
    }
    match mode {
        ApInterpolation::AllPoints => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for &(r, p) in &envelope {
                ap += (r - prev_recall) * p;
                prev_recall = r;
            }
            ap
        }
        ApInterpolation::Point101 => {
            let mut sum = 0.0;
            let mut idx = 0;
            for step in 0..=100 {
                let r = step as f64 / 100.0;
                while idx < envelope.len() && envelope[idx].0 < r - 1e-12 {
                    idx += 1;
                }
                if idx < envelope.len() {
                    sum += envelope[idx].1;
                }
            }
            sum / 101.0
        }
    }
}

/// Spherical mean average precision over aligned per-frame detections and ground truth.
pub fn sph_map(
    dets: &[Vec<DetectedObject>],
    truths: &[Vec<DetectedObject>],
    cfg: &EvalConfig,
) -> Result<MapReport> {
    cfg.validate()?;
    if dets.len() > truths.len() {
        return Err(Error::Invalid(format!(
            "{} detection frames but only {} ground-truth frames",
            dets.len(),
            truths.len()
        )));
    }
    let mut positives: BTreeMap<u32, usize> = BTreeMap::new();
    for g in truths.iter().flatten() {
        *positives.entry(g.category).or_default() += 1;
    }
    let wanted: BTreeSet<u32> = match &cfg.categories {
        Some(cats) => cats
            .iter()
            .copied()
            .filter(|c| positives.contains_key(c))
            .collect(),
        None => positives.keys().copied().collect(),
    };
    if wanted.is_empty() {
        return Err(Error::Invalid("no ground truth to evaluate against".into()));
    }

    let mut ranked: BTreeMap<u32, Vec<(f64, bool)>> = BTreeMap::new();
    let empty = Vec::new();
    for (f, truth) in truths.iter().enumerate() {
        let frame_dets = dets.get(f).unwrap_or(&empty);
        for m in match_frame(f, frame_dets, truth, cfg.iou_threshold) {
            ranked
                .entry(m.detection.category)
                .or_default()
                .push((m.detection.confidence, m.true_positive));
        }
    }

    let mut per_category = BTreeMap::new();
    for &c in &wanted {
        let mut list = ranked.remove(&c).unwrap_or_default();
        // stable: equal confidences keep frame then detection order
        list.sort_by(|a, b| b.0.total_cmp(&a.0));
        let hits: Vec<bool> = list.into_iter().map(|(_, h)| h).collect();
        per_category.insert(
            c,
            average_precision(&hits, positives[&c], cfg.interpolation),
        );
    }
    let map = per_category.values().sum::<f64>() / per_category.len() as f64;
    Ok(MapReport { map, per_category })
}

/// Mean Sph-mAP over IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn sph_map_sweep(
    dets: &[Vec<DetectedObject>],
    truths: &[Vec<DetectedObject>],
    cfg: &EvalConfig,
) -> Result<f64> {
    let mut sum = 0.0;
    for k in 0..10 {
        let c = EvalConfig {
            iou_threshold: 0.5 + 0.05 * k as f64,
            ..cfg.clone()
        };
        sum += sph_map(dets, truths, &c)?.map;
    }
    Ok(sum / 10.0)
}

pub fn mean_e2e_latency(latencies: &[f64]) -> Result<f64> {
    if latencies.is_empty() {
        return Err(Error::Invalid("mean latency of zero frames".into()));
    }
    Ok(latencies.iter().sum::<f64>() / latencies.len() as f64)
}
