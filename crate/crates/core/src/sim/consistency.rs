//! Agreement between the gav·ccv accuracy estimate and simulated recall.

use super::detector::{simulate_detection, DetectionView, DetectorNoise};
use super::trace::SceneTrace;
use super::SimConfig;
use crate::geometry::DetectedObject;
use crate::predictor::{compute_ccv_in_view, predict_srois};
use crate::profiles::{dot_accuracy, ProfileSet};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyCell {
    pub sroi: usize,
    pub model: usize,
    pub trials: u64,
    pub hits: u64,
    /// gav · ccv over the ground truth actually inside the SRoI's image.
    pub expected: f64,
    pub measured: f64,
    pub std_err: f64,
    /// |measured − expected| ≤ 3 standard errors.
    pub within: bool,
}

/// Predicts SRoIs from the first frame's ground truth, then runs every model on every
/// SRoI for every frame and compares measured recall with the estimate.
pub fn estimator_consistency(
    trace: &SceneTrace,
    profiles: &ProfileSet,
    cfg: &SimConfig,
) -> Result<Vec<ConsistencyCell>> {
    let Some(first) = trace.frames.first() else {
        return Ok(Vec::new());
    };
    let srois = predict_srois(first, &cfg.predictor, &cfg.size_classifier, cfg.categories)?;
    let mut settings = cfg.detector_settings();
    settings.noise = DetectorNoise::default();

    let mut cells = Vec::new();
    for (j, s) in srois.iter().enumerate() {
        for model in profiles.real_models() {
            let view = DetectionView::perspective(s.bbox.center(), s.pi_fov(), model.input_side)?;
            let mut seen: Vec<DetectedObject> = Vec::new();
            let mut hits = 0u64;
            for (f, truth) in trace.frames.iter().enumerate() {
                seen.extend(truth.iter().filter(|t| view.covers(t.bbox.center())));
                hits += simulate_detection(model, &view, truth, f as u64, j as u64, &settings).len()
                    as u64;
            }
            if seen.is_empty() {
                continue;
            }
            let ccv = compute_ccv_in_view(
                &seen,
                &cfg.size_classifier,
                cfg.categories,
                view.solid_angle(),
            )?;
            let expected = dot_accuracy(&model.gav, &ccv)?;
            let n = seen.len() as u64;
            let measured = hits as f64 / n as f64;
            let std_err = (expected * (1.0 - expected) / n as f64).sqrt();
            cells.push(ConsistencyCell {
                sroi: j,
                model: model.index,
                trials: n,
                hits,
                expected,
                measured,
                std_err,
                within: (measured - expected).abs() <= 3.0 * std_err + 1e-12,
            });
        }
    }
    Ok(cells)
}
