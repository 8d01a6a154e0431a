//! Result files: per-frame CSV, JSON summary and per-frame detections (JSON lines).

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trace::{read_frames, write_frame};
use super::Experiment;
use crate::geometry::DetectedObject;
use crate::Result;

pub const OUTPUT_FILES: [&str; 3] = ["results.csv", "summary.json", "detections.jsonl"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub frame: u64,
    pub method: String,
    pub latency_s: f64,
    pub plan: String,
    pub n_detections: usize,
}

/// Writes `results.csv`, `summary.json` and `detections.jsonl` into `dir`.
pub fn write_outputs(dir: &Path, exp: &Experiment) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = csv::Writer::from_path(dir.join(OUTPUT_FILES[0]))?;
    for f in &exp.frames {
        csv.serialize(ResultRow {
            frame: f.frame,
            method: exp.summary.method.clone(),
            latency_s: f.e2e_latency,
            plan: f.plan_label.clone(),
            n_detections: f.detections.len(),
        })?;
    }
    csv.flush()?;

    let mut summary = serde_json::to_string_pretty(&exp.summary)?;
    summary.push('\n');
    std::fs::write(dir.join(OUTPUT_FILES[1]), summary)?;

    let mut out = BufWriter::new(File::create(dir.join(OUTPUT_FILES[2]))?);
    for f in &exp.frames {
        write_frame(&mut out, f.frame, &f.detections, true, Some(f.e2e_latency))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}

/// Per-frame detections and, where recorded, per-frame latencies.
pub fn read_detections<R: BufRead>(input: R) -> Result<(Vec<Vec<DetectedObject>>, Vec<f64>)> {
    let (_, records) = read_frames(input)?;
    let len = records.last().map_or(0, |r| r.frame as usize + 1);
    let mut dets = vec![Vec::new(); len];
    let mut latencies = Vec::new();
    for r in records {
        dets[r.frame as usize] = r
            .objects
            .iter()
            .map(|o| o.to_object(r.frame))
            .collect::<Result<_>>()?;
        latencies.extend(r.latency_s);
    }
    Ok((dets, latencies))
}
