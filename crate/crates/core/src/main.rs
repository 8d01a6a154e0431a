use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use omnisense::allocator::{solve, AllocInstance, ExecutionPlan};
use omnisense::eval::{mean_e2e_latency, sph_map, sph_map_sweep, ApInterpolation, EvalConfig};
use omnisense::geometry::{
    gnomonic_project, gnomonic_unproject, sph_iou, SphericalBox, SphericalCoord,
};
use omnisense::profiles::ProfileSet;
use omnisense::sim::{
    budget_sweep, generate_trace, read_detections, read_trace, run_experiment, write_outputs,
    write_trace, SceneTrace, SimConfig, TraceParams, TraceSource, SIM_SCHEMA_VERSION,
};
use omnisense::{Error, Result};

#[derive(Parser)]
#[command(
    name = "omnisense",
    version,
    about = "Edge-assisted 360-degree video analytics simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment and write results.csv, summary.json and detections.jsonl.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one allocation instance and print the plan as JSON.
    Plan {
        #[arg(long)]
        instance: PathBuf,
        /// Seed of the processing order.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sph-mAP and mean latency of detections against ground truth.
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = omnisense::eval::DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        /// Also average over IoU thresholds 0.50:0.05:0.95.
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        all_points: bool,
    },
    /// Generate a synthetic scene trace.
    TraceGen {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay one run's frame states under several budgets; prints CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated budgets in seconds.
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<f64>,
    },
    /// Geometry utilities; angles in degrees.
    Geom {
        #[command(subcommand)]
        op: GeomOp,
    },
}

#[derive(Subcommand)]
enum GeomOp {
    /// Solid angle of a box given as lon,lat,fov_h,fov_v.
    Area {
        #[arg(allow_hyphen_values = true)]
        sphbox: String,
    },
    /// SphIoU of two boxes given as lon,lat,fov_h,fov_v.
    Iou {
        #[arg(allow_hyphen_values = true)]
        a: String,
        #[arg(allow_hyphen_values = true)]
        b: String,
    },
    /// Gnomonic projection of a point (lon,lat) about a tangent center, and back.
    Project {
        #[arg(long, allow_hyphen_values = true)]
        center: String,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Plan { instance, seed } => {
            let inst = AllocInstance::from_file(Error::parse_json(&read_text(&instance)?)?)?;
            print_json(&PlanReport::new(&inst, solve(&inst, seed)))
        }
        Command::Eval {
            dets,
            truth,
            iou,
            sweep,
            all_points,
        } => eval(&dets, &truth, iou, sweep, all_points),
        Command::TraceGen { params, seed, out } => {
            let params = match params {
                Some(p) => load_trace_params(&p)?,
                None => TraceParams::default(),
            };
            let trace = generate_trace(&params, seed)?;
            let mut w = BufWriter::new(File::create(&out)?);
            write_trace(&trace, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Sweep { config, budgets } => {
            let (cfg, profiles, trace) = load_experiment(&config)?;
            let points = budget_sweep(&trace, &cfg, &profiles, &budgets)?;
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            for p in points {
                w.serialize(p)?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Geom { op } => geom(op),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct PlanReport {
    /// Model name per SRoI, "skip" when not processed.
    models: Vec<String>,
    #[serde(flatten)]
    plan: ExecutionPlan,
}

impl PlanReport {
    fn new(inst: &AllocInstance, plan: ExecutionPlan) -> Self {
        let models = plan
            .assignment
            .iter()
            .map(|&i| {
                if i == 0 {
                    "skip".to_string()
                } else {
                    inst.model_names[i].clone()
                }
            })
            .collect();
        Self { models, plan }
    }
}

/// Reads a config and everything it references; relative paths resolve against the
/// config file's directory.
fn load_experiment(path: &Path) -> Result<(SimConfig, ProfileSet, SceneTrace)> {
    let text = read_text(path)?;
    let cfg = SimConfig::from_json(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let profiles = match &cfg.profiles {
        Some(p) => ProfileSet::from_json(&read_text(&base.join(p))?)?,
        None => ProfileSet::builtin(cfg.categories),
    };
    let trace = match &cfg.trace {
        Some(TraceSource::Path(p)) => read_trace(open(&base.join(p))?)?,
        Some(TraceSource::Generate { params, seed }) => generate_trace(params, *seed)?,
        None => {
            return Err(Error::Config {
                field: "trace".into(),
                message: "a trace path or generator is required".into(),
            })
        }
    };
    Ok((cfg, profiles, trace))
}

fn simulate(config: &Path, out: &Path) -> Result<()> {
    let (cfg, profiles, trace) = load_experiment(config)?;
    let exp = run_experiment(&trace, &cfg, &profiles)?;
    write_outputs(out, &exp)?;
    print_json(&exp.summary)
}

/// Trace parameters as a JSON object with an optional top-level `version`.
fn load_trace_params(path: &Path) -> Result<TraceParams> {
    let mut doc: serde_json::Value = Error::parse_json(&read_text(path)?)?;
    if let Some(obj) = doc.as_object_mut() {
        if let Some(v) = obj.remove("version") {
            if v.as_u64() != Some(SIM_SCHEMA_VERSION as u64) {
                return Err(Error::Config {
                    field: "version".into(),
                    message: format!("unsupported version {v}"),
                });
            }
        }
    }
    let params: TraceParams = Error::parse_json(&doc.to_string())?;
    params.validate()?;
    Ok(params)
}

#[derive(Serialize)]
struct EvalReport {
    iou_threshold: f64,
    interpolation: ApInterpolation,
    sph_map: f64,
    per_category: std::collections::BTreeMap<u32, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sph_map_sweep: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_latency_s: Option<f64>,
    frames: usize,
}

fn eval(dets: &Path, truth: &Path, iou: f64, sweep: bool, all_points: bool) -> Result<()> {
    let (detections, latencies) = read_detections(open(dets)?)?;
    let truth = read_trace(open(truth)?)?;
    let cfg = EvalConfig {
        iou_threshold: iou,
        interpolation: if all_points {
            ApInterpolation::AllPoints
        } else {
            ApInterpolation::Point101
        },
        categories: None,
    };
    let report = sph_map(&detections, &truth.frames, &cfg)?;
    print_json(&EvalReport {
        iou_threshold: cfg.iou_threshold,
        interpolation: cfg.interpolation,
        sph_map: report.map,
        per_category: report.per_category,
        sph_map_sweep: if sweep {
            Some(sph_map_sweep(&detections, &truth.frames, &cfg)?)
        } else {
            None
        },
        mean_latency_s: mean_e2e_latency(&latencies).ok(),
        frames: truth.frames.len(),
    })
}

fn parse_numbers<const N: usize>(field: &str, text: &str, shape: &str) -> Result<[f64; N]> {
    let bad = || Error::Config {
        field: field.into(),
        message: format!("expected {shape}, got `{text}`"),
    };
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    values.try_into().map_err(|_| bad())
}

fn parse_box(field: &str, text: &str) -> Result<SphericalBox> {
    let [lon, lat, h, v] = parse_numbers(field, text, "lon,lat,fov_h,fov_v")?;
    SphericalBox::from_degrees(lon, lat, h, v)
}

fn parse_point(field: &str, text: &str) -> Result<SphericalCoord> {
    let [lon, lat] = parse_numbers(field, text, "lon,lat")?;
    SphericalCoord::from_degrees(lon, lat)
}

fn geom(op: GeomOp) -> Result<()> {
    match op {
        GeomOp::Area { sphbox } => {
            let b = parse_box("box", &sphbox)?;
            print_json(
                &serde_json::json!({ "area_sr": b.area(), "noa": b.area() / (4.0 * std::f64::consts::PI) }),
            )
        }
        GeomOp::Iou { a, b } => {
            let (a, b) = (parse_box("a", &a)?, parse_box("b", &b)?);
            print_json(&serde_json::json!({ "sph_iou": sph_iou(&a, &b) }))
        }
        GeomOp::Project { center, point } => {
            let c = parse_point("center", &center)?;
            let p = parse_point("point", &point)?;
            let q = gnomonic_project(c, p)?;
            let back = gnomonic_unproject(c, q)?;
            print_json(&serde_json::json!({
                "x": q.x,
                "y": q.y,
                "round_trip_error_rad": back.angular_distance(&p),
            }))
        }
    }
}
