//! Budget sweeps replayed over recorded frame states.
//!
//! A closed-loop run at one budget fixes, for every planned frame, the predicted SRoIs and
//! the network estimates. Each swept budget is then planned and executed on exactly those
//! states, so budgets are compared on identical inputs. Whole-frame passes appended by
//! opportunistic discovery shape the recorded history but are not replayed.

use serde::{Deserialize, Serialize};

use crate::allocator::{solve, AllocInstance};
use crate::eval::{sph_map, EvalConfig};
use crate::geometry::DetectedObject;
use crate::predictor::Sroi;
use crate::profiles::{NetworkState, ProfileSet};
use crate::{Error, Result};

use super::{detect_sroi, frame_seed, Method, SceneTrace, SimConfig, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub budget_s: f64,
    /// Mean estimated weighted accuracy over planned frames.
    pub estimated_accuracy: f64,
    /// Sph-mAP of the replayed detections over every frame.
    pub sph_map: f64,
    /// Mean estimated latency of planned frames.
    pub estimated_latency_s: f64,
}

enum Recorded {
    Discovery(Vec<DetectedObject>),
    Planned { srois: Vec<Sroi>, net: NetworkState },
}

/// Replays the frame states of a closed-loop OmniSense run under `cfg` at each of `budgets`.
pub fn budget_sweep(
    trace: &SceneTrace,
    cfg: &SimConfig,
    profiles: &ProfileSet,
    budgets: &[f64],
) -> Result<Vec<SweepPoint>> {
    if cfg.method != Method::OmniSense {
        return Err(Error::config(
            "method",
            "budget sweeps need the omnisense method",
        ));
    }
    if let Some(k) = budgets.iter().position(|b| !(*b > 0.0)) {
        return Err(Error::config(format!("budgets[{k}]"), "must be positive"));
    }
    let mut sim = Simulator::new(cfg, profiles)?;
    let mut recorded = Vec::with_capacity(trace.frames.len());
    for (f, truth) in trace.frames.iter().enumerate() {
        let state = if sim.discovery_now() {
            None
        } else {
            Some((sim.predicted_srois()?, sim.network().clone()))
        };
        let r = sim.run_frame(f as u64, truth)?;
        recorded.push(match state {
            Some((srois, net)) => Recorded::Planned { srois, net },
            None => Recorded::Discovery(r.detections),
        });
    }

    let settings = cfg.detector_settings();
    let mut points = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let mut dets = Vec::with_capacity(recorded.len());
        let (mut values, mut latencies) = (Vec::new(), Vec::new());
        for (f, rec) in recorded.iter().enumerate() {
            match rec {
                Recorded::Discovery(d) => dets.push(d.clone()),
                Recorded::Planned { srois, net } => {
                    let inst = AllocInstance::build(srois, profiles, net, cfg.compression, budget)?;
                    let plan = solve(&inst, frame_seed(cfg.plan_seed, f as u64));
                    let mut found = Vec::new();
                    for (j, &i) in plan.assignment.iter().enumerate() {
                        if i != 0 {
                            let model = &profiles.models[i];
                            found.extend(detect_sroi(
                                &srois[j],
                                j,
                                model,
                                &trace.frames[f],
                                f as u64,
                                &settings,
                            )?);
                        }
                    }
                    dets.push(crate::geometry::spherical_nms(&found, cfg.nms_threshold));
                    values.push(plan.value);
                    latencies.push(cfg.overhead_s + plan.latency);
                }
            }
        }
        let map = sph_map(&dets, &trace.frames, &EvalConfig::default())?.map;
        points.push(SweepPoint {
            budget_s: budget,
            estimated_accuracy: super::mean(&values),
            sph_map: map,
            estimated_latency_s: super::mean(&latencies),
        });
    }
    Ok(points)
}
