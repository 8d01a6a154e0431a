//! Latency-constrained model allocation over predicted SRoIs.
//!
//! Each SRoI gets exactly one model or the skip option (index 0). SRoIs are processed in a
//! fixed order on one pipeline: preprocessing runs back to back on the device, and an
//! inference starts once its own preprocessing and the previous inference are done.

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::predictor::Sroi;
use crate::profiles::{estimate_accuracy, estimate_delay, Compression, NetworkState, ProfileSet};
use crate::{Error, Result};

/// Slack on the budget comparison, seconds.
pub const FEASIBILITY_SLACK: f64 = 1e-9;
/// Stage size above which times are quantized before pruning.
pub const STATE_CAP: usize = 100_000;
/// Time quantum used once the state cap is exceeded, seconds.
pub const STATE_QUANTUM: f64 = 1e-4;
/// Largest plan space the exhaustive oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// One allocation problem: `r` SRoIs by `m + 1` options (column 0 is skip).
#[derive(Debug, Clone, PartialEq)]
pub struct AllocInstance {
    pub budget: f64,
    /// Option names; `model_names[0]` is "skip".
    pub model_names: Vec<String>,
    pub weights: Vec<f64>,
    pub ccvs: Vec<Vec<f64>>,
    /// Estimated accuracy `A_i · P_j`, indexed `[sroi][model]`.
    pub accuracy: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub inf: Vec<Vec<f64>>,
}

/// Per-SRoI inputs for [`AllocInstance::new`], excluding the skip column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SroiRecord {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ccv: Vec<f64>,
    #[serde(rename = "dP")]
    pub d_pre: Vec<f64>,
    #[serde(rename = "dI")]
    pub d_inf: Vec<f64>,
    #[serde(rename = "A")]
    pub accuracy: Vec<f64>,
}

/// On-disk allocation instance; model arrays list real models only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default = "one")]
    pub version: u32,
    pub budget_s: f64,
    pub models: Vec<String>,
    pub srois: Vec<SroiRecord>,
}

fn one() -> u32 {
    1
}

impl AllocInstance {
    /// Builds an instance from real-model names and per-SRoI records.
    pub fn new(budget: f64, models: Vec<String>, srois: Vec<SroiRecord>) -> Result<Self> {
        if !(budget > 0.0) {
            return Err(Error::config("budget_s", "must be positive"));
        }
        let m = models.len();
        let mut inst = AllocInstance {
            budget,
            model_names: std::iter::once("skip".to_string()).chain(models).collect(),
            weights: Vec::with_capacity(srois.len()),
            ccvs: Vec::with_capacity(srois.len()),
            accuracy: Vec::with_capacity(srois.len()),
            pre: Vec::with_capacity(srois.len()),
            inf: Vec::with_capacity(srois.len()),
        };
        for (j, s) in srois.into_iter().enumerate() {
            let field = |f: &str| format!("srois[{j}].{f}");
            if !(0.0..=1.0).contains(&s.alpha) {
                return Err(Error::config(field("alpha"), "must lie in [0, 1]"));
            }
            for (name, row, upper) in [
                ("dP", &s.d_pre, f64::INFINITY),
                ("dI", &s.d_inf, f64::INFINITY),
                ("A", &s.accuracy, 1.0),
            ] {
                if row.len() != m {
                    return Err(Error::config(
                        field(name),
                        format!("expected {m} entries, found {}", row.len()),
                    ));
                }
                if let Some((i, v)) = row
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !(v.is_finite() && **v >= 0.0 && **v <= upper))
                {
                    return Err(Error::config(
                        format!("srois[{j}].{name}[{i}]"),
                        format!("invalid value {v}"),
                    ));
                }
            }
            let with_skip = |row: Vec<f64>| std::iter::once(0.0).chain(row).collect::<Vec<_>>();
            inst.weights.push(s.alpha);
            inst.ccvs.push(s.ccv);
            inst.accuracy.push(with_skip(s.accuracy));
            inst.pre.push(with_skip(s.d_pre));
            inst.inf.push(with_skip(s.d_inf));
        }
        Ok(inst)
    }

    /// Instance for predicted SRoIs under the current profiles and network estimate.
    pub fn build(
        srois: &[Sroi],
        profiles: &ProfileSet,
        net: &NetworkState,
        compression: Compression,
        budget: f64,
    ) -> Result<Self> {
        let models = profiles.real_models();
        let mut delays = Vec::with_capacity(models.len());
        for m in models {
            delays.push(estimate_delay(m, profiles, net, compression)?);
        }
        let records = srois
            .iter()
            .map(|s| {
                Ok(SroiRecord {
                    alpha: s.weight,
                    ccv: s.ccv.clone(),
                    d_pre: delays.iter().map(|d| d.preprocess).collect(),
                    d_inf: delays.iter().map(|d| d.inference).collect(),
                    accuracy: models
                        .iter()
                        .map(|m| estimate_accuracy(m, s).map(|a| a.clamp(0.0, 1.0)))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            budget,
            models.iter().map(|m| m.name.clone()).collect(),
            records,
        )
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        if file.version != 1 {
            return Err(Error::config(
                "version",
                format!("unsupported version {}", file.version),
            ));
        }
        Self::new(file.budget_s, file.models, file.srois)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(Error::parse_json(&text)?)
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            version: 1,
            budget_s: self.budget,
            models: self.model_names[1..].to_vec(),
            srois: (0..self.srois())
                .map(|j| SroiRecord {
                    alpha: self.weights[j],
                    ccv: self.ccvs[j].clone(),
                    d_pre: self.pre[j][1..].to_vec(),
                    d_inf: self.inf[j][1..].to_vec(),
                    accuracy: self.accuracy[j][1..].to_vec(),
                })
                .collect(),
        }
    }

    pub fn srois(&self) -> usize {
        self.weights.len()
    }

    /// Number of options per SRoI, skip included.
    pub fn options(&self) -> usize {
        self.model_names.len()
    }

    /// Weighted accuracy `α_j · A_i · P_j`.
    pub fn value(&self, sroi: usize, model: usize) -> f64 {
        self.weights[sroi] * self.accuracy[sroi][model]
    }

    pub fn delays(&self, sroi: usize, model: usize) -> (f64, f64) {
        (self.pre[sroi][model], self.inf[sroi][model])
    }

    /// Pipelined latency of `assignment` (indexed by SRoI) processed in `order`.
    pub fn latency_of(&self, order: &[usize], assignment: &[usize]) -> f64 {
        pipelined_latency(
            order
                .iter()
                .filter(|&&j| assignment[j] != 0)
                .map(|&j| self.delays(j, assignment[j])),
        )
    }

    fn value_of(&self, order: &[usize], assignment: &[usize]) -> f64 {
        order
            .iter()
            .fold(0.0, |v, &j| v + self.value(j, assignment[j]))
    }
}

/// Frame completion time of a sequence of `(preprocess, inference)` delays.
///
/// `t_pre ← t_pre + d_pre` and `t ← max(t_pre_prev + d, t_prev + d_inf)` with
/// `d = d_pre + d_inf`.
pub fn pipelined_latency(steps: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut tp = 0.0;
    let mut t = 0.0;
    for (dp, di) in steps {
        (tp, t) = advance(tp, t, dp, di);
    }
    t
}

#[inline]
fn advance(tp: f64, t: f64, dp: f64, di: f64) -> (f64, f64) {
    let d = dp + di;
    (tp + dp, f64::max(tp + d, t + di))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    /// Option index per SRoI (0 = skip).
    pub assignment: Vec<usize>,
    /// Processing order of SRoIs.
    pub order: Vec<usize>,
    /// Estimated weighted accuracy.
    pub value: f64,
    /// Estimated pipelined latency, seconds.
    pub latency: f64,
    /// Set when time quantization was needed to bound the state space.
    pub approximate: bool,
}

impl ExecutionPlan {
    pub fn empty() -> Self {
        Self {
            assignment: Vec::new(),
            order: Vec::new(),
            value: 0.0,
            latency: 0.0,
            approximate: false,
        }
    }
}

/// Partial plan after deciding a prefix of the order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    pub value: f64,
    pub t_pre: f64,
    pub t: f64,
    /// Chosen option per decided SRoI, in processing order.
    pub models: Vec<usize>,
}

/// Preference among states: higher value, then earlier completion, earlier preprocessing,
/// then lexicographically smaller choices.
fn preference(a: &PlanState, b: &PlanState) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then(a.t.total_cmp(&b.t))
        .then(a.t_pre.total_cmp(&b.t_pre))
        .then_with(|| a.models.cmp(&b.models))
}

fn quantize(x: f64) -> f64 {
    (x / STATE_QUANTUM).round() * STATE_QUANTUM
}

/// Removes states dominated in (value ≥, t_pre ≤, t ≤); equal states collapse to the
/// preferred one.
fn prune(states: &mut Vec<PlanState>, quantized: bool) {
    states.sort_by(preference);
    let key = |s: &PlanState| {
        if quantized {
            (quantize(s.t_pre), quantize(s.t))
        } else {
            (s.t_pre, s.t)
        }
    };
    // visited in non-increasing value, so any kept state has value >= the candidate
    let mut kept: Vec<PlanState> = Vec::with_capacity(states.len());
    let mut frontier: Vec<(f64, f64)> = Vec::new();
    for s in states.drain(..) {
        let (tp, t) = key(&s);
        if frontier.iter().any(|&(ktp, kt)| ktp <= tp && kt <= t) {
            continue;
        }
        frontier.retain(|&(ktp, kt)| !(tp <= ktp && t <= kt));
        frontier.push((tp, t));
        kept.push(s);
    }
    *states = kept;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DpOptions {
    pub prune: bool,
    pub state_cap: Option<usize>,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self {
            prune: true,
            state_cap: Some(STATE_CAP),
        }
    }
}

/// Best plan for a fixed processing order.
pub fn solve_dp(inst: &AllocInstance, order: &[usize]) -> ExecutionPlan {
    solve_dp_with(inst, order, DpOptions::default())
}

pub fn solve_dp_with(inst: &AllocInstance, order: &[usize], opts: DpOptions) -> ExecutionPlan {
    let limit = inst.budget + FEASIBILITY_SLACK;
    let mut approximate = false;
    let mut states = vec![PlanState {
        value: 0.0,
        t_pre: 0.0,
        t: 0.0,
        models: Vec::with_capacity(order.len()),
    }];
    for &j in order {
        let mut next = Vec::with_capacity(states.len() * inst.options());
        for s in &states {
            for i in 0..inst.options() {
                let (t_pre, t) = if i == 0 {
                    (s.t_pre, s.t)
                } else {
                    let (dp, di) = inst.delays(j, i);
                    advance(s.t_pre, s.t, dp, di)
                };
                if t > limit {
                    continue;
                }
                let mut models = s.models.clone();
                models.push(i);
                next.push(PlanState {
                    value: s.value + inst.value(j, i),
                    t_pre,
                    t,
                    models,
                });
            }
        }
        if opts.prune {
            let over = opts.state_cap.is_some_and(|cap| next.len() > cap);
            approximate |= over;
            prune(&mut next, over);
        }
        states = next;
    }
    let best = states
        .into_iter()
        .min_by(preference)
        .expect("skip keeps every stage non-empty");
    let mut assignment = vec![0; inst.srois()];
    for (&j, &i) in order.iter().zip(&best.models) {
        assignment[j] = i;
    }
    ExecutionPlan {
        assignment,
        order: order.to_vec(),
        value: best.value,
        latency: best.t,
        approximate,
    }
}

/// Solves for one processing order drawn from a generator seeded with `seed`.
pub fn solve(inst: &AllocInstance, seed: u64) -> ExecutionPlan {
    let mut order: Vec<usize> = (0..inst.srois()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    solve_dp(inst, &order)
}

/// Exhaustive search over all assignments for a fixed order.
pub fn brute_force(inst: &AllocInstance, order: &[usize]) -> Result<ExecutionPlan> {
    let options = inst.options() as u64;
    let space = (0..order.len()).try_fold(1u64, |acc, _| acc.checked_mul(options));
    if space.is_none_or(|s| s > BRUTE_FORCE_LIMIT) {
        return Err(Error::TooLarge(format!(
            "{} options over {} SRoIs exceeds {BRUTE_FORCE_LIMIT} plans",
            inst.options(),
            order.len()
        )));
    }
    let limit = inst.budget + FEASIBILITY_SLACK;
    let mut assignment = vec![0usize; inst.srois()];
    let mut best: Option<PlanState> = None;
    loop {
        let latency = inst.latency_of(order, &assignment);
        if latency <= limit {
            let t_pre = order
                .iter()
                .map(|&j| inst.pre[j][assignment[j]])
                .fold(0.0, |a, b| a + b);
            let cand = PlanState {
                value: inst.value_of(order, &assignment),
                t_pre,
                t: latency,
                models: order.iter().map(|&j| assignment[j]).collect(),
            };
            if best
                .as_ref()
                .is_none_or(|b| preference(&cand, b) == Ordering::Less)
            {
                best = Some(cand);
            }
        }
        // odometer over the processing order, last position fastest
        let mut pos = order.len();
        loop {
            if pos == 0 {
                let best = best.expect("all-skip plan is feasible");
                return Ok(ExecutionPlan {
                    assignment: {
                        let mut a = vec![0; inst.srois()];
                        for (&j, &i) in order.iter().zip(&best.models) {
                            a[j] = i;
                        }
                        a
                    },
                    order: order.to_vec(),
                    value: best.value,
                    latency: best.t,
                    approximate: false,
                });
            }
            pos -= 1;
            let j = order[pos];
            assignment[j] += 1;
            if assignment[j] < inst.options() {
                break;
            }
            assignment[j] = 0;
        }
    }
}

/// Best plan over every processing order (oracle; `r!` DP runs).
pub fn best_over_orders(inst: &AllocInstance) -> Result<ExecutionPlan> {
    let r = inst.srois();
    if r > 8 {
        return Err(Error::TooLarge(format!("{r}! orders")));
    }
    let mut order: Vec<usize> = (0..r).collect();
    let mut best = solve_dp(inst, &order);
    // Heap's algorithm
    let mut c = vec![0usize; r];
    let mut i = 0;
    while i < r {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            let plan = solve_dp(inst, &order);
            if plan.value > best.value {
                best = plan;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// (alpha, accuracy, dP, dI) per SRoI.
    type Row<'a> = (f64, &'a [f64], &'a [f64], &'a [f64]);

    fn inst(budget: f64, rows: &[Row]) -> AllocInstance {
        let m = rows.first().map_or(0, |r| r.1.len());
        AllocInstance::new(
            budget,
            (1..=m).map(|k| format!("m{k}")).collect(),
            rows.iter()
                .map(|(alpha, a, dp, di)| SroiRecord {
                    alpha: *alpha,
                    ccv: Vec::new(),
                    d_pre: dp.to_vec(),
                    d_inf: di.to_vec(),
                    accuracy: a.to_vec(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn worked_pipeline_example() {
        let steps = [(2.0, 3.0), (1.0, 4.0), (3.0, 2.0), (1.0, 3.0)];
        let mut seen = Vec::new();
        for k in 1..=4 {
            seen.push(pipelined_latency(steps[..k].iter().copied()));
        }
        assert_eq!(seen, vec![5.0, 9.0, 11.0, 14.0]);
        assert_eq!(pipelined_latency([]), 0.0);
    }

    #[test]
    fn serial_without_waiting() {
        // each inference finishes before the next preprocessing does
        let steps = [(2.0, 1.0), (2.0, 0.5), (3.0, 1.5)];
        assert_eq!(pipelined_latency(steps), 2.0 + 2.0 + 3.0 + 1.5);
    }

    #[test]
    fn single_sroi_budget() {
        let i = inst(2.0, &[(1.0, &[0.5], &[0.5], &[0.5])]);
        let p = solve_dp(&i, &[0]);
        assert_eq!((p.assignment.clone(), p.value), (vec![1], 0.5));
        let i = inst(0.5, &[(1.0, &[0.5], &[0.5], &[0.5])]);
        let p = solve_dp(&i, &[0]);
        assert_eq!(
            (p.assignment.clone(), p.value, p.latency),
            (vec![0], 0.0, 0.0)
        );
        assert_eq!(solve(&i, 7), p);
    }

    #[test]
    fn unconstrained_takes_argmax() {
        let i = inst(
            f64::INFINITY,
            &[
                (0.5, &[0.2, 0.7, 0.4], &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]),
                (0.5, &[0.9, 0.1, 0.3], &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]),
            ],
        );
        assert_eq!(solve(&i, 1).assignment, vec![2, 1]);
        assert_eq!(brute_force(&i, &[1, 0]).unwrap().assignment, vec![2, 1]);
    }

    #[test]
    fn empty_instance() {
        let i = inst(1.0, &[]);
        let p = brute_force(&i, &[]).unwrap();
        assert_eq!((p.value, p.latency, p.assignment.len()), (0.0, 0.0, 0));
        assert_eq!(solve(&i, 3).value, 0.0);
    }

    #[test]
    fn brute_force_guard() {
        let row: (f64, &[f64], &[f64], &[f64]) = (0.1, &[0.5; 9], &[0.1; 9], &[0.1; 9]);
        let i = inst(1.0, &[row; 7]);
        let order: Vec<usize> = (0..7).collect();
        assert!(matches!(brute_force(&i, &order), Err(Error::TooLarge(_))));
    }

    #[test]
    fn prune_keeps_optimum_on_tradeoff() {
        // A fast and a slow-but-accurate option; the budget allows only one slow one.
        let row: (f64, &[f64], &[f64], &[f64]) = (0.25, &[0.4, 0.9], &[0.1, 0.5], &[0.1, 0.6]);
        let i = inst(1.5, &[row; 4]);
        let order = [0, 1, 2, 3];
        let a = solve_dp(&i, &order);
        let b = solve_dp_with(
            &i,
            &order,
            DpOptions {
                prune: false,
                state_cap: None,
            },
        );
        let c = brute_force(&i, &order).unwrap();
        assert_eq!(a.value, c.value);
        assert_eq!(b.value, c.value);
        assert_eq!(a.assignment, c.assignment);
        assert!(a.latency <= 1.5);
    }

    #[test]
    fn rejects_bad_records() {
        let bad = AllocInstance::new(
            1.0,
            vec!["a".into()],
            vec![SroiRecord {
                alpha: 1.0,
                ccv: vec![],
                d_pre: vec![0.1],
                d_inf: vec![-0.1],
                accuracy: vec![0.5],
            }],
        )
        .unwrap_err();
        assert!(bad.to_string().contains("srois[0].dI[0]"), "{bad}");
        assert!(AllocInstance::new(0.0, vec![], vec![]).is_err());
    }
}
