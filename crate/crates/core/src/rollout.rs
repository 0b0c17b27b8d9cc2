//! Multi-step composition of one-step models and the range-normalised
//! per-step error.
//!
//! A rollout of horizon `H` yields `H + 1` states, index 0 being the supplied
//! initial state. Errors are reported for steps `1..=H`. At step `t` each
//! dimension's error is divided by that dimension's range over the
//! evaluation set, squared, and averaged over dimensions, so 1.0 means every
//! coordinate is off by its full observed range.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::models::DynamicsModel;
use crate::numerics::{percentiles, Matrix, PercentileSummary, Rng};
use crate::systems::{Policy, PolicySpec, Trajectory, DIVERGENCE_BOUND};

/// Error reported for steps at or after divergence, and the cap on any
/// finite error.
pub const ERROR_SENTINEL: f64 = 1e6;

/// Dimensions whose range is at most this are skipped by the metric.
pub const DEGENERATE_RANGE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    /// `predicted_states[0]` is the initial state. Truncated at divergence.
    pub predicted_states: Vec<Vec<f64>>,
    /// First step whose prediction was non-finite or beyond the bound.
    pub diverged_at: Option<usize>,
    pub horizon: usize,
}

impl RolloutResult {
    pub fn state(&self, t: usize) -> Option<&[f64]> {
        self.predicted_states.get(t).map(Vec::as_slice)
    }
}

/// Per-dimension `[min, max]` of the states in an evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRanges {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StateRanges {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(shape("range bounds of different length"));
        }
        let r = Self { lo, hi };
        if r.active_dims().next().is_none() {
            return Err(invalid("every state dimension has a degenerate range"));
        }
        Ok(r)
    }

    /// Min/max over every state of every trajectory.
    pub fn from_trajectories(trajs: &[Trajectory]) -> Result<Self> {
        let d = trajs
            .first()
            .map(Trajectory::state_dim)
            .ok_or_else(|| Error::Empty("no trajectories for normalisation ranges".into()))?;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for s in trajs.iter().flat_map(|t| &t.states) {
            if s.len() != d {
                return Err(shape("trajectories disagree on state width"));
            }
            for j in 0..d {
                lo[j] = lo[j].min(s[j]);
                hi[j] = hi[j].max(s[j]);
            }
        }
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Indices of dimensions with a usable range.
    pub fn active_dims(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).filter(|&j| self.hi[j] - self.lo[j] > DEGENERATE_RANGE)
    }

    /// Normalised squared error between two states, capped at the sentinel.
    pub fn error(&self, predicted: &[f64], truth: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0;
        for j in self.active_dims() {
            let e = (predicted[j] - truth[j]) / (self.hi[j] - self.lo[j]);
            sum += e * e;
            count += 1;
        }
        let mse = sum / count as f64;
        if mse.is_nan() {
            ERROR_SENTINEL
        } else {
            mse.min(ERROR_SENTINEL)
        }
    }
}

/// Percentiles of the normalised error at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorProfile {
    /// `steps[i]` summarises step `i + 1`.
    pub steps: Vec<PercentileSummary>,
    /// Trajectories contributing at each step.
    pub counts: Vec<usize>,
    pub n_trajectories: usize,
    pub ranges: StateRanges,
}

impl ErrorProfile {
    /// Aggregates per-trajectory error sequences (which may be of unequal
    /// length); the profile stops at the last step any trajectory reaches.
    pub fn from_errors(errors: &[Vec<f64>], ranges: StateRanges) -> Result<Self> {
        let horizon = errors.iter().map(Vec::len).max().unwrap_or(0);
        if horizon == 0 {
            return Err(Error::Empty("no per-step errors to aggregate".into()));
        }
        let mut steps = Vec::with_capacity(horizon);
        let mut counts = Vec::with_capacity(horizon);
        let mut column = Vec::with_capacity(errors.len());
        for t in 0..horizon {
            column.clear();
            column.extend(errors.iter().filter_map(|e| e.get(t)));
            steps.push(percentiles(&column)?);
            counts.push(column.len());
        }
        Ok(Self {
            steps,
            counts,
            n_trajectories: errors.len(),
            ranges,
        })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn medians(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.p50).collect()
    }

    /// CSV with header `step,p50,p65,p95,n`; steps start at 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "p50", "p65", "p95", "n"])?;
        for (i, (s, n)) in self.steps.iter().zip(&self.counts).enumerate() {
            w.write_record([
                (i + 1).to_string(),
                s.p50.to_string(),
                s.p65.to_string(),
                s.p95.to_string(),
                n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the step summaries back; ranges are not stored in the CSV.
    pub fn read_csv<R: Read>(input: R) -> Result<(Vec<PercentileSummary>, Vec<usize>)> {
        let mut r = csv::Reader::from_reader(input);
        let mut steps = Vec::new();
        let mut counts = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| -> Result<&str> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse(format!("row {} has {} fields", i + 1, rec.len())))
            };
            let num = |k: usize| -> Result<f64> {
                field(k)?
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {} field {k}: {e}", i + 1)))
            };
            steps.push(PercentileSummary {
                p50: num(1)?,
                p65: num(2)?,
                p95: num(3)?,
            });
            counts.push(
                field(4)?
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {} count: {e}", i + 1)))?,
            );
        }
        Ok((steps, counts))
    }
}

/// Where rollout actions come from.
#[derive(Clone, Debug, PartialEq)]
pub enum RolloutMode {
    /// Replay the actions recorded in each test trajectory.
    Logged,
    /// Recompute `a_t = pi(s_hat_t)`; each trajectory's policy is rebuilt
    /// from its stored policy seed.
    Recomputed(PolicySpec),
}

fn diverged(state: &[f64]) -> bool {
    state.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
}

/// Steps every initial state forward in lockstep, batching the model calls.
fn rollout_lockstep<F>(model: &DynamicsModel, s0s: &[&[f64]], horizons: &[usize], mut action: F) -> Result<Vec<RolloutResult>>
where
    F: FnMut(usize, usize, &[f64]) -> Result<Vec<f64>>,
{
    let (ds, da) = (model.state_dim, model.action_dim);
    let mut results: Vec<RolloutResult> = s0s
        .iter()
        .zip(horizons)
        .map(|(s0, &h)| RolloutResult {
            predicted_states: vec![s0.to_vec()],
            diverged_at: None,
            horizon: h,
        })
        .collect();
    for (j, s0) in s0s.iter().enumerate() {
        if s0.len() != ds {
            return Err(shape(format!("initial state of width {} for a {ds}-state model", s0.len())));
        }
        if diverged(s0) {
            results[j].diverged_at = Some(0);
        }
    }
    let max_h = horizons.iter().copied().max().unwrap_or(0);
    let mut active: Vec<usize> = Vec::with_capacity(s0s.len());
    for t in 0..max_h {
        active.clear();
        active.extend((0..results.len()).filter(|&j| results[j].diverged_at.is_none() && t < horizons[j]));
        if active.is_empty() {
            break;
        }
        let mut states = Vec::with_capacity(active.len() * ds);
        let mut actions = Vec::with_capacity(active.len() * da);
        for &j in &active {
            let s = &results[j].predicted_states[t];
            let a = action(j, t, s)?;
            if a.len() != da {
                return Err(shape(format!("action of width {} for a {da}-action model", a.len())));
            }
            states.extend_from_slice(s);
            actions.extend_from_slice(&a);
        }
        let next = model.predict_batch(
            &Matrix::from_vec(active.len(), ds, states)?,
            &Matrix::from_vec(active.len(), da, actions)?,
        )?;
        for (row, &j) in active.iter().enumerate() {
            let s = next.row(row);
            if diverged(s) {
                results[j].diverged_at = Some(t + 1);
            } else {
                results[j].predicted_states.push(s.to_vec());
            }
        }
    }
    Ok(results)
}

/// Composes the model over `horizon` steps using the given action sequence.
pub fn rollout_logged(model: &DynamicsModel, s0: &[f64], actions: &[Vec<f64>], horizon: usize) -> Result<RolloutResult> {
    if horizon > actions.len() {
        return Err(invalid(format!("horizon {horizon} exceeds {} logged actions", actions.len())));
    }
    let mut out = rollout_lockstep(model, &[s0], &[horizon], |_, t, _| Ok(actions[t].clone()))?;
    Ok(out.remove(0))
}

/// Composes the model over `horizon` steps, recomputing each action from
/// the predicted state.
pub fn rollout_recomputed(
    model: &DynamicsModel,
    policy: &Policy,
    s0: &[f64],
    horizon: usize,
    rng: &mut Rng,
) -> Result<RolloutResult> {
    if policy.action_dim() != model.action_dim {
        return Err(shape(format!(
            "policy emits {} actions, model expects {}",
            policy.action_dim(),
            model.action_dim
        )));
    }
    let mut out = rollout_lockstep(model, &[s0], &[horizon], |_, _, s| policy.act(s, rng))?;
    Ok(out.remove(0))
}

/// Normalised error of a rollout against ground truth at steps `1..=H`.
/// Steps at or after divergence report [`ERROR_SENTINEL`].
pub fn per_step_mse(predicted: &RolloutResult, truth: &Trajectory, ranges: &StateRanges) -> Result<Vec<f64>> {
    let h = predicted.horizon;
    if truth.states.len() < h + 1 {
        return Err(shape(format!(
            "rollout horizon {h} but ground truth has {} states",
            truth.states.len()
        )));
    }
    if ranges.dim() != truth.state_dim() {
        return Err(shape("ranges and states differ in width"));
    }
    Ok((1..=h)
        .map(|t| match predicted.state(t) {
            Some(p) => ranges.error(p, &truth.states[t]),
            None => ERROR_SENTINEL,
        })
        .collect())
}

/// Policy seed mixed with this index drives any randomness in
/// recomputed-action rollouts.
const RECOMPUTE_STREAM: u64 = 7;

/// Per-trajectory error sequences of composed rollouts from each
/// trajectory's initial state. Trajectories shorter than `horizon` are
/// evaluated over their own length.
pub fn rollout_errors(
    model: &DynamicsModel,
    trajs: &[Trajectory],
    mode: &RolloutMode,
    ranges: &StateRanges,
    horizon: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    if trajs.is_empty() {
        return Err(Error::Empty("no test trajectories".into()));
    }
    let horizons: Vec<usize> = trajs
        .iter()
        .map(|t| horizon.map_or(t.horizon(), |h| h.min(t.horizon())))
        .collect();
    let s0s: Vec<&[f64]> = trajs.iter().map(Trajectory::initial_state).collect();
    let results = match mode {
        RolloutMode::Logged => rollout_lockstep(model, &s0s, &horizons, |j, t, _| Ok(trajs[j].actions[t].clone()))?,
        RolloutMode::Recomputed(spec) => {
            let policies = trajs
                .iter()
                .map(|t| spec.instantiate(t.policy_seed))
                .collect::<Result<Vec<_>>>()?;
            if let Some(p) = policies.iter().find(|p| p.action_dim() != model.action_dim) {
                return Err(shape(format!(
                    "policy emits {} actions, model expects {}",
                    p.action_dim(),
                    model.action_dim
                )));
            }
            let mut rngs: Vec<Rng> = trajs
                .iter()
                .map(|t| Rng::derived(t.policy_seed, RECOMPUTE_STREAM))
                .collect();
            rollout_lockstep(model, &s0s, &horizons, |j, _, s| policies[j].act(s, &mut rngs[j]))?
        }
    };
    results
        .iter()
        .zip(trajs)
        .map(|(r, t)| per_step_mse(r, t, ranges))
        .collect()
}

/// Rollout error percentiles over a test set, with ranges taken from that
/// same set.
pub fn evaluate(model: &DynamicsModel, trajs: &[Trajectory], mode: &RolloutMode) -> Result<ErrorProfile> {
    let ranges = StateRanges::from_trajectories(trajs)?;
    let errors = rollout_errors(model, trajs, mode, &ranges, None)?;
    ErrorProfile::from_errors(&errors, ranges)
}

/// Per-trajectory one-step errors: the model is fed the true `(s_t, a_t)`
/// at every index.
pub fn one_step_errors(model: &DynamicsModel, trajs: &[Trajectory], ranges: &StateRanges) -> Result<Vec<Vec<f64>>> {
    trajs
        .iter()
        .map(|traj| {
            let h = traj.horizon();
            if h == 0 {
                return Ok(Vec::new());
            }
            let states = Matrix::from_rows(&traj.states[..h])?;
            let actions = if model.action_dim == 0 {
                Matrix::zeros(h, 0)
            } else {
                Matrix::from_rows(&traj.actions)?
            };
            let pred = model.predict_batch(&states, &actions)?;
            Ok((0..h)
                .map(|t| {
                    let p = pred.row(t);
                    if diverged(p) {
                        ERROR_SENTINEL
                    } else {
                        ranges.error(p, &traj.states[t + 1])
                    }
                })
                .collect())
        })
        .collect()
}

/// Percentiles of the one-step (uncomposed) error at every index.
pub fn one_step_error_profile(model: &DynamicsModel, trajs: &[Trajectory]) -> Result<ErrorProfile> {
    let ranges = StateRanges::from_trajectories(trajs)?;
    let errors = one_step_errors(model, trajs, &ranges)?;
    ErrorProfile::from_errors(&errors, ranges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(states: Vec<Vec<f64>>) -> Trajectory {
        let h = states.len() - 1;
        Trajectory {
            actions: vec![vec![0.0]; h],
            states,
            system_seed: 0,
            policy_seed: 0,
            diverged: false,
        }
    }

    #[test]
    fn full_range_offset_is_one() {
        let truth = traj(vec![vec![0.0, 0.0], vec![2.0, 10.0], vec![1.0, 5.0]]);
        let ranges = StateRanges::from_trajectories(std::slice::from_ref(&truth)).unwrap();
        let pred = RolloutResult {
            predicted_states: vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![1.0, 5.0]],
            diverged_at: None,
            horizon: 2,
        };
        assert_eq!(per_step_mse(&pred, &truth, &ranges).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn degenerate_dimension_skipped() {
        let truth = traj(vec![vec![0.0, 3.0], vec![1.0, 3.0]]);
        let ranges = StateRanges::from_trajectories(std::slice::from_ref(&truth)).unwrap();
        assert_eq!(ranges.active_dims().collect::<Vec<_>>(), vec![0]);
        assert_eq!(ranges.error(&[0.5, 100.0], &[1.0, 3.0]), 0.25);
        let flat = traj(vec![vec![1.0], vec![1.0]]);
        assert!(StateRanges::from_trajectories(&[flat]).is_err());
    }

    #[test]
    fn divergence_reports_sentinel() {
        let truth = traj(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let ranges = StateRanges::from_trajectories(std::slice::from_ref(&truth)).unwrap();
        let pred = RolloutResult {
            predicted_states: vec![vec![0.0], vec![1.0]],
            diverged_at: Some(2),
            horizon: 3,
        };
        assert_eq!(per_step_mse(&pred, &truth, &ranges).unwrap(), vec![0.0, ERROR_SENTINEL, ERROR_SENTINEL]);
    }

    #[test]
    fn profile_csv_round_trip() {
        let ranges = StateRanges::new(vec![0.0], vec![1.0]).unwrap();
        let errors = vec![vec![0.1, 0.2, 0.3], vec![0.3, 0.1], vec![0.2, 0.5, 1.0 / 3.0]];
        let profile = ErrorProfile::from_errors(&errors, ranges).unwrap();
        assert_eq!(profile.counts, vec![3, 3, 2]);
        let mut buf = Vec::new();
        profile.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,p50,p65,p95,n\n1,"));
        let (steps, counts) = ErrorProfile::read_csv(buf.as_slice()).unwrap();
        assert_eq!(steps, profile.steps);
        assert_eq!(counts, profile.counts);
    }
}
