//! Event-driven execution of one frame's SRoI tasks on a two-stage pipeline.
//!
//! The device preprocesses tasks one after another; inference of a task starts once its
//! preprocessing is done and the previous inference has finished.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskTiming {
    pub preprocess_start: f64,
    pub preprocess_end: f64,
    pub inference_start: f64,
    pub inference_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    PreprocessDone,
    InferenceDone,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
    task: usize,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, o: &Self) -> Ordering {
        self.time.total_cmp(&o.time).then(self.seq.cmp(&o.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

struct Sim {
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
}

impl Sim {
    fn schedule(&mut self, time: f64, kind: Kind, task: usize) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time,
            seq: self.seq,
            kind,
            task,
        }));
    }
}

/// Runs `(preprocess, inference)` tasks in order and returns per-task timings and the
/// completion time of the last inference (0 for no tasks).
pub fn execute_pipeline(tasks: &[(f64, f64)]) -> (Vec<TaskTiming>, f64) {
    let mut timings = vec![
        TaskTiming {
            preprocess_start: 0.0,
            preprocess_end: 0.0,
            inference_start: 0.0,
            inference_end: 0.0,
        };
        tasks.len()
    ];
    if tasks.is_empty() {
        return (timings, 0.0);
    }
    let mut sim = Sim {
        queue: BinaryHeap::new(),
        seq: 0,
    };
    sim.schedule(tasks[0].0, Kind::PreprocessDone, 0);

    let mut ready: std::collections::VecDeque<usize> = Default::default();
    let mut infer_busy = false;
    let mut next_infer = 0usize;
    let mut now = 0.0;
    while let Some(Reverse(ev)) = sim.queue.pop() {
        now = ev.time;
        match ev.kind {
            Kind::PreprocessDone => {
                timings[ev.task].preprocess_end = now;
                ready.push_back(ev.task);
                let next = ev.task + 1;
                if next < tasks.len() {
                    timings[next].preprocess_start = now;
                    sim.schedule(now + tasks[next].0, Kind::PreprocessDone, next);
                }
            }
            Kind::InferenceDone => {
                timings[ev.task].inference_end = now;
                infer_busy = false;
            }
        }
        // inferences run in task order on a single resource
        if !infer_busy && ready.front() == Some(&next_infer) {
            let task = ready.pop_front().expect("checked");
            timings[task].inference_start = now;
            sim.schedule(now + tasks[task].1, Kind::InferenceDone, task);
            infer_busy = true;
            next_infer += 1;
        }
    }
    (timings, now)
}

/// Completion time when tasks run strictly one after another.
pub fn execute_serial(tasks: &[(f64, f64)]) -> f64 {
    tasks.iter().fold(0.0, |t, &(p, i)| t + p + i)
}
