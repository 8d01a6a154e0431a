//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use omnisense::allocator::{brute_force, pipelined_latency, solve_dp, solve_dp_with, DpOptions};
use omnisense::geometry::{
    gnomonic_project, gnomonic_unproject, sph_iou, SphericalBox, DEFAULT_NMS_THRESHOLD,
};
use omnisense::predictor::{predict_srois, PredictorConfig};
use omnisense::profiles::{
    size_level, ProfileSet, SizeClassifier, SizeLevel, DEFAULT_BANDWIDTH_BPS,
    DEFAULT_NETWORK_WINDOW,
};
use omnisense::sim::{
    budget_sweep, estimator_consistency, execute_pipeline, generate_trace, run_experiment, Method,
    SceneTrace, SimConfig, TraceParams, OUTPUT_FILES,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Seeds of the 1,000 allocation instances: r cycles through 1..=5, m = 5.
fn instances() -> impl Iterator<Item = (u64, omnisense::allocator::AllocInstance, Vec<usize>)> {
    (0..1000u64).map(|seed| {
        let r = 1 + (seed % 5) as usize;
        let inst = common::random_instance(seed, r, 5);
        let mut order: Vec<usize> = (0..r).collect();
        order.shuffle(&mut common::rng(seed ^ 0xA5A5));
        (seed, inst, order)
    })
}

fn dp_exactness() -> Outcome {
    let start = Instant::now();
    for (seed, inst, order) in instances() {
        let dp = solve_dp(&inst, &order);
        let bf = brute_force(&inst, &order).map_err(|e| e.to_string())?;
        ensure(dp.value == bf.value, || {
            format!("seed {seed}: dp {} vs brute force {}", dp.value, bf.value)
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("1000 instances equal, {secs:.2} s"))
}

fn dominance_safety() -> Outcome {
    let off = DpOptions {
        prune: false,
        state_cap: None,
    };
    for (seed, inst, order) in instances() {
        let a = solve_dp(&inst, &order).value;
        let b = solve_dp_with(&inst, &order, off).value;
        ensure(a == b, || {
            format!("seed {seed}: pruned {a} vs unpruned {b}")
        })?;
    }
    Ok("1000 instances equal with and without pruning".into())
}

fn pipelined_equivalence() -> Outcome {
    let (_, end) = execute_pipeline(&[(2.0, 3.0), (1.0, 4.0), (3.0, 2.0), (1.0, 3.0)]);
    ensure(end == 14.0, || format!("worked example gave {end}"))?;
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let mut g = common::rng(seed);
        let tasks: Vec<(f64, f64)> = (0..g.gen_range(1..12))
            .map(|_| (g.gen_range(0.0..0.5), g.gen_range(0.0..0.8)))
            .collect();
        worst = worst
            .max((execute_pipeline(&tasks).1 - pipelined_latency(tasks.iter().copied())).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e} s"))?;

    // whole simulated frames: realized completion vs the planner's estimate
    let trace = generate_trace(
        &TraceParams {
            frames: 200,
            ..Default::default()
        },
        5,
    )
    .map_err(|e| e.to_string())?;
    let profiles = ProfileSet::builtin(80);
    let cfg = SimConfig {
        budget_s: 1.5,
        ..Default::default()
    };
    let exp = run_experiment(&trace, &cfg, &profiles).map_err(|e| e.to_string())?;
    let frame_worst = exp
        .frames
        .iter()
        .map(|f| (f.e2e_latency - f.estimated_latency).abs())
        .fold(0.0, f64::max);
    ensure(frame_worst <= 1e-9, || {
        format!("simulated frame deviation {frame_worst:e} s")
    })?;
    Ok(format!("worked example 14 s; max deviation {worst:.1e} s (200 task sets), {frame_worst:.1e} s (200 frames)"))
}

fn geometry() -> Outcome {
    let mut g = common::rng(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b = common::random_box(&mut g);
        let mc = common::monte_carlo_area(&b, 1_000_000, &mut g);
        worst = worst.max((b.area() - mc).abs() / mc);
    }
    ensure(worst < 0.01, || {
        format!("worst Monte-Carlo relative error {worst:.4}")
    })?;
    let full = SphericalBox::full_sphere().area();
    ensure(full == 4.0 * PI, || format!("full sphere area {full}"))?;
    let a = SphericalBox::from_degrees(0.0, 0.0, 60.0, 60.0).unwrap();
    let b = SphericalBox::from_degrees(30.0, 0.0, 60.0, 60.0).unwrap();
    let iou = sph_iou(&a, &b);
    ensure((iou - 1.0 / 3.0).abs() <= 0.01, || {
        format!("equatorial IoU {iou}")
    })?;
    let mut round_trip = 0.0f64;
    for _ in 0..1000 {
        let c = common::uniform_point(&mut g);
        // within about 83° of the tangent point
        let p = omnisense::geometry::Frame::at(c)
            .world_coord(g.gen_range(-1.3..1.3), g.gen_range(-1.3..1.3));
        let back = gnomonic_unproject(c, gnomonic_project(c, p).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        round_trip = round_trip.max(back.angular_distance(&p));
    }
    ensure(round_trip < 1e-9, || {
        format!("gnomonic round-trip error {round_trip:e}")
    })?;
    Ok(format!(
        "area error {:.3}%, IoU {iou:.4}, round trip {round_trip:.1e} rad",
        worst * 100.0
    ))
}

fn constants() -> Outcome {
    let cls = SizeClassifier::default();
    ensure(cls.small_max == 0.0044 && cls.medium_max == 0.0354, || {
        format!("{cls:?}")
    })?;
    let level = |noa| size_level(noa, &cls).unwrap();
    ensure(level(0.0044) == SizeLevel::Small, || {
        "0.0044 not small".into()
    })?;
    ensure(level(0.004_400_000_001) == SizeLevel::Medium, || {
        "just above 0.0044 not medium".into()
    })?;
    ensure(level(0.0354) == SizeLevel::Medium, || {
        "0.0354 not medium".into()
    })?;
    ensure(level(0.035_400_000_001) == SizeLevel::Large, || {
        "just above 0.0354 not large".into()
    })?;
    let p = PredictorConfig::default();
    ensure(
        p.fov == 60f64.to_radians() && p.gamma == 1.1 && p.history_frames == 2,
        || format!("{p:?}"),
    )?;
    ensure(DEFAULT_NETWORK_WINDOW == 7, || "network window".into())?;
    ensure(DEFAULT_NMS_THRESHOLD == 0.6, || "NMS threshold".into())?;
    ensure(DEFAULT_BANDWIDTH_BPS == 17.9e6, || "bandwidth".into())?;
    let sim = SimConfig::default();
    ensure(
        sim.network_window == 7
            && sim.nms_threshold == 0.6
            && sim.bandwidth_bps == 17.9e6
            && sim.predictor == p,
        || "simulator defaults differ".into(),
    )?;
    // an object exactly f wide stays regular; one a hair wider becomes special
    let at = |w: f64| {
        let o = omnisense::geometry::DetectedObject::truth(
            SphericalBox::from_degrees(0.0, 0.0, w, 10.0).unwrap(),
            0,
            0,
        );
        predict_srois(&[o], &p, &cls, 80).unwrap()[0].special
    };
    ensure(!at(60.0) && at(60.000_001), || {
        "coverability boundary at f".into()
    })?;
    Ok("0.0044/0.0354, f=60°, γ=1.1, δ=2, ω=7, NMS 0.6, 17.9 Mb/s".into())
}

fn predictor_properties() -> Outcome {
    let cfg = PredictorConfig::default();
    let cls = SizeClassifier::default();
    let mut srois_seen = 0;
    for seed in 0..500u64 {
        let history = common::random_history(seed, 2);
        let a = predict_srois(&history, &cfg, &cls, 6).map_err(|e| e.to_string())?;
        let b = predict_srois(&history, &cfg, &cls, 6).map_err(|e| e.to_string())?;
        ensure(format!("{a:?}") == format!("{b:?}"), || {
            format!("seed {seed}: not deterministic")
        })?;
        common::check_prediction(&history, &a, cfg.fov, cfg.gamma)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        srois_seen += a.len();
    }
    Ok(format!("500 histories, {srois_seen} SRoIs checked"))
}

fn estimator_consistency_check() -> Outcome {
    let params = TraceParams {
        frames: 500,
        ..Default::default()
    }
    .stationary();
    let trace = generate_trace(&params, 17).map_err(|e| e.to_string())?;
    let profiles = ProfileSet::builtin(80);
    let cells = estimator_consistency(&trace, &profiles, &SimConfig::default())
        .map_err(|e| e.to_string())?;
    ensure(!cells.is_empty(), || "no cells".into())?;
    let within = cells.iter().filter(|c| c.within).count();
    let share = within as f64 / cells.len() as f64;
    ensure(share >= 0.95, || {
        format!("{within}/{} cells within 3 SE", cells.len())
    })?;
    Ok(format!(
        "{within}/{} cells within 3 binomial SE ({:.1}%)",
        cells.len(),
        share * 100.0
    ))
}

/// Scene, profiles and OmniSense configuration shared by the trend and sweep criteria.
fn trend_setup() -> Result<(SceneTrace, ProfileSet, SimConfig), String> {
    let trace = generate_trace(&TraceParams::default(), 7).map_err(|e| e.to_string())?;
    let cfg = SimConfig {
        opportunistic_discovery: true,
        ..Default::default()
    };
    Ok((trace, ProfileSet::builtin(80), cfg))
}

/// (mean latency, Sph-mAP) of one run.
fn measure(
    trace: &SceneTrace,
    profiles: &ProfileSet,
    cfg: &SimConfig,
) -> Result<(f64, f64), String> {
    let e = run_experiment(trace, cfg, profiles).map_err(|e| e.to_string())?;
    Ok((
        e.summary.mean_latency_s.unwrap_or(0.0),
        e.summary.sph_map.unwrap_or(0.0),
    ))
}

fn trend_reproduction() -> Outcome {
    let start = Instant::now();
    let (trace, profiles, base) = trend_setup()?;
    let models = profiles.real_models().len();
    let baselines: Vec<Method> = (1..=models)
        .map(Method::Erp)
        .chain((1..=models).map(Method::CubeMap))
        .collect();

    // budgets on a geometric grid, each run independently
    let mut budgets = Vec::new();
    let mut t = 0.1;
    while t < 6.0 {
        budgets.push(t);
        t *= 1.05;
    }
    let workers = std::thread::available_parallelism()
        .map_or(4, |n| n.get())
        .min(16);
    let jobs: Vec<SimConfig> = baselines
        .iter()
        .map(|&m| SimConfig {
            method: m,
            ..base.clone()
        })
        .chain(budgets.iter().map(|&b| SimConfig {
            budget_s: b,
            ..base.clone()
        }))
        .collect();
    let results: Vec<Result<(f64, f64), String>> = std::thread::scope(|s| {
        let chunks: Vec<_> = jobs
            .chunks(jobs.len().div_ceil(workers))
            .map(|chunk| {
                let (trace, profiles) = (&trace, &profiles);
                s.spawn(move || {
                    chunk
                        .iter()
                        .map(|c| measure(trace, profiles, c))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        chunks
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let results: Vec<(f64, f64)> = results.into_iter().collect::<Result<_, _>>()?;
    let (base_runs, omni_runs) = results.split_at(baselines.len());

    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let (mut erp_matched, mut cube_matched) = (0, 0);
    for (m, &(lat, map)) in baselines.iter().zip(base_runs) {
        let (k, &(olat, omap)) = omni_runs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 .0 - lat).abs().total_cmp(&(b.1 .0 - lat).abs()))
            .expect("non-empty grid");
        let off = olat / lat - 1.0;
        if off.abs() > 0.05 {
            lines.push(format!("{m}: {lat:.3} s unreachable (closest {olat:.3} s)"));
            continue;
        }
        match m {
            Method::Erp(_) => erp_matched += 1,
            _ => cube_matched += 1,
        }
        lines.push(format!(
            "{m}: {map:.3} vs {omap:.3} at T={:.2} ({:+.1}%)",
            budgets[k],
            off * 100.0
        ));
        if omap <= map {
            failures.push(format!("{m} not beaten at matched latency"));
        }
    }
    if erp_matched == 0 || cube_matched == 0 {
        failures.push("no latency-matched ERP or CubeMap baseline".into());
    }
    let (best_m, &(best_lat, best_map)) = baselines
        .iter()
        .zip(base_runs)
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("baselines");
    let cheap = omni_runs
        .iter()
        .filter(|(l, a)| *l <= 0.6 * best_lat && *a >= best_map)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match cheap {
        Some((l, a)) => lines.push(format!(
            "best baseline {best_m} {best_map:.3} at {best_lat:.2} s; OmniSense {a:.3} at {l:.2} s ({:.2}x)",
            l / best_lat
        )),
        None => failures.push(format!("best baseline {best_m} ({best_map:.3}) not reached within 0.6x latency")),
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 300.0 {
        failures.push(format!("took {secs:.0} s"));
    }
    for l in &lines {
        println!("    {l}");
    }
    if failures.is_empty() {
        Ok(format!("{erp_matched} ERP and {cube_matched} CubeMap baselines beaten at matched latency, {secs:.0} s"))
    } else {
        Err(failures.join("; "))
    }
}

fn budget_monotonicity() -> Outcome {
    let (trace, profiles, base) = trend_setup()?;
    let cfg = SimConfig {
        budget_s: 2.5,
        ..base
    };
    let budgets = [0.3, 0.6, 1.0, 1.5, 2.5, 4.0];
    let points = budget_sweep(&trace, &cfg, &profiles, &budgets).map_err(|e| e.to_string())?;
    for w in points.windows(2) {
        ensure(w[1].estimated_accuracy >= w[0].estimated_accuracy, || {
            format!(
                "estimated accuracy falls from T={} to T={}",
                w[0].budget_s, w[1].budget_s
            )
        })?;
        ensure(w[1].sph_map >= w[0].sph_map, || {
            format!(
                "Sph-mAP falls from T={} to T={}",
                w[0].budget_s, w[1].budget_s
            )
        })?;
    }
    let fmt = |f: fn(&omnisense::sim::SweepPoint) -> f64| {
        points
            .iter()
            .map(|p| format!("{:.3}", f(p)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok(format!(
        "T={budgets:?}: estimated [{}], Sph-mAP [{}]",
        fmt(|p| p.estimated_accuracy),
        fmt(|p| p.sph_map)
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"version": 1, "budget_s": 1.2, "opportunistic_discovery": true, "network_jitter": 0.3,
            "trace": {"generate": {"seed": 7, "params": {"frames": 60}}}}"#,
    )
    .map_err(|e| e.to_string())?;
    let run = |out: &str| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_omnisense"))
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            String::from_utf8_lossy(&status.stderr).into_owned()
        })
    };
    run("a")?;
    run("b")?;
    for name in OUTPUT_FILES {
        let a = std::fs::read(dir.path().join("a").join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.path().join("b").join(name)).map_err(|e| e.to_string())?;
        ensure(!a.is_empty() && a == b, || format!("{name} differs"))?;
    }
    Ok(format!("{} identical", OUTPUT_FILES.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("DP exactness", dp_exactness),
        ("dominance safety", dominance_safety),
        ("pipelined-latency equivalence", pipelined_equivalence),
        ("geometry", geometry),
        ("constants honored", constants),
        ("SRoI prediction properties", predictor_properties),
        ("estimator consistency", estimator_consistency_check),
        ("qualitative trend", trend_reproduction),
        ("budget monotonicity", budget_monotonicity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
