//! Generators and oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use omnisense::allocator::{AllocInstance, SroiRecord};
use omnisense::geometry::{DetectedObject, SphericalBox, SphericalCoord};
use omnisense::predictor::Sroi;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random allocation instance with `r` SRoIs and `m` real models.
pub fn random_instance(seed: u64, r: usize, m: usize) -> AllocInstance {
    let mut g = rng(seed);
    let raw: Vec<f64> = (0..r).map(|_| g.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let srois = raw
        .iter()
        .map(|a| SroiRecord {
            alpha: a / total,
            ccv: Vec::new(),
            d_pre: (0..m).map(|_| g.gen_range(0.01..0.5)).collect(),
            d_inf: (0..m).map(|_| g.gen_range(0.01..0.8)).collect(),
            accuracy: (0..m).map(|_| g.gen_range(0.0..1.0)).collect(),
        })
        .collect();
    let budget = g.gen_range(0.1..(0.6 * r as f64 + 0.2));
    AllocInstance::new(budget, (1..=m).map(|i| format!("m{i}")).collect(), srois).unwrap()
}

pub fn uniform_point(g: &mut impl Rng) -> SphericalCoord {
    let lon = g.gen_range(-PI..PI);
    let lat = g.gen_range(-1.0f64..1.0).asin();
    SphericalCoord::new(lon, lat).unwrap()
}

/// Random box: center uniform on the sphere, extents log-uniform from 1° up to the full range.
pub fn random_box(g: &mut impl Rng) -> SphericalBox {
    let c = uniform_point(g);
    let h = (g.gen_range(1f64.ln()..360f64.ln()))
        .exp()
        .to_radians()
        .min(TAU);
    let v = (g.gen_range(1f64.ln()..180f64.ln()))
        .exp()
        .to_radians()
        .min(PI);
    SphericalBox::with_center(c, h, v).unwrap()
}

/// Monte-Carlo solid angle of `b`. Points are drawn uniformly from a lon/lat region about
/// 25% larger than the box in its own frame (area from elementary zone geometry), mapped
/// to world coordinates, and counted with the box's membership test.
pub fn monte_carlo_area(b: &SphericalBox, samples: usize, g: &mut impl Rng) -> f64 {
    let margin = 0.01f64;
    let half_lon = (b.fov_h() * 0.625 + margin).min(PI);
    let half_lat = (b.fov_v() * 0.625 + margin).min(PI / 2.0);
    let (z_lo, z_hi) = (-half_lat.sin(), half_lat.sin());
    let region = 2.0 * half_lon * (z_hi - z_lo);
    let frame = b.frame();
    let mut inside = 0usize;
    for _ in 0..samples {
        let lon = g.gen_range(-half_lon..=half_lon);
        let lat = g.gen_range(z_lo..=z_hi).asin();
        if b.contains(frame.world_coord(lon, lat)) {
            inside += 1;
        }
    }
    region * inside as f64 / samples as f64
}

/// Points on and inside `b` (a `k`×`k` grid in its own frame, shrunk by `shrink`).
pub fn box_points(b: &SphericalBox, k: usize, shrink: f64) -> Vec<SphericalCoord> {
    let frame = b.frame();
    let mut out = Vec::with_capacity(k * k);
    for a in 0..k {
        for c in 0..k {
            let u = (a as f64 / (k - 1) as f64 - 0.5) * b.fov_h() * shrink;
            let w = (c as f64 / (k - 1) as f64 - 0.5) * b.fov_v() * shrink;
            out.push(frame.world_coord(u, w));
        }
    }
    out
}

pub fn encloses(outer: &SphericalBox, inner: &SphericalBox) -> bool {
    box_points(inner, 7, 1.0 - 1e-9)
        .into_iter()
        .all(|p| outer.contains(p))
}

/// Random detection history of `frames` frames. Every fourth history straddles the
/// antimeridian; some objects are wider or taller than 60°.
pub fn random_history(seed: u64, frames: u64) -> Vec<DetectedObject> {
    let mut g = rng(seed);
    let wrap = seed.is_multiple_of(4);
    let count = g.gen_range(0..40);
    (0..count)
        .map(|_| {
            let lon = if wrap {
                180.0 + g.gen_range(-25.0..25.0)
            } else {
                g.gen_range(-180.0..180.0)
            };
            let lat = g.gen_range(-70.0..70.0);
            let (h, v) = if g.gen_bool(0.08) {
                (g.gen_range(40.0..200.0), g.gen_range(55.0..120.0))
            } else {
                (g.gen_range(0.5..30.0), g.gen_range(0.5..30.0))
            };
            let b = SphericalBox::from_degrees(lon, lat, h, v).unwrap();
            DetectedObject::new(
                b,
                g.gen_range(0..6),
                g.gen_range(0.3..1.0),
                g.gen_range(0..frames),
            )
            .unwrap()
        })
        .collect()
}

/// Checks the predictor's structural laws for one prediction; returns the first violation.
pub fn check_prediction(
    history: &[DetectedObject],
    srois: &[Sroi],
    fov: f64,
    gamma: f64,
) -> Result<(), String> {
    if history.is_empty() {
        return if srois.is_empty() {
            Ok(())
        } else {
            Err("SRoIs from empty history".into())
        };
    }
    let alpha: f64 = srois.iter().map(|s| s.weight).sum();
    if (alpha - 1.0).abs() > 1e-9 {
        return Err(format!("sum of weights {alpha}"));
    }
    let members: usize = srois.iter().map(|s| s.members.len()).sum();
    if members != history.len() {
        return Err(format!("{members} members for {} objects", history.len()));
    }
    // duplicates in the history must reappear as often among the members
    for o in history {
        let copies = history.iter().filter(|h| *h == o).count();
        let homed: usize = srois
            .iter()
            .map(|s| s.members.iter().filter(|m| *m == o).count())
            .sum();
        if homed != copies {
            return Err(format!(
                "object appears {homed} times among members, {copies} in history"
            ));
        }
    }
    for (k, s) in srois.iter().enumerate() {
        let ccv: f64 = s.ccv.iter().sum();
        if (ccv - 1.0).abs() > 1e-9 || s.ccv.iter().any(|p| *p < 0.0) {
            return Err(format!("srois[{k}] ccv sums to {ccv}"));
        }
        if s.special {
            let m = &s.members[0];
            let want_h = (m.bbox.fov_h() * gamma).min(TAU);
            let want_v = (m.bbox.fov_v() * gamma).min(PI);
            if s.members.len() != 1
                || (s.bbox.fov_h() - want_h).abs() > 1e-12
                || (s.bbox.fov_v() - want_v).abs() > 1e-12
            {
                return Err(format!("srois[{k}] special FoV law"));
            }
        } else {
            if s.bbox.fov_h() != fov || s.bbox.fov_v() != fov {
                return Err(format!(
                    "srois[{k}] FoV {} x {}",
                    s.bbox.fov_h(),
                    s.bbox.fov_v()
                ));
            }
            if let Some(bad) = s.members.iter().position(|m| !encloses(&s.bbox, &m.bbox)) {
                return Err(format!("srois[{k}] member {bad} not enclosed"));
            }
        }
    }
    Ok(())
}
