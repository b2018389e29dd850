//! Distributed localization by consensus.
//!
//! Every round, each robot that sees the target (the valid set `S^t`)
//! produces a fresh measurement. Robot `i` then mixes the estimates of the
//! valid members of its closed neighbourhood and blends in its own
//! measurement with a decaying step:
//!
//! ```text
//! x_i^{t+1} = (1 - a_i^t) * sum_{j in (N_i ∪ {i}) ∩ S^t} w_ij x_j^t + a_i^t * xhat_i^t
//! ```
//!
//! Robots outside `S^t` take `a = 0` and only listen; a robot with no valid
//! neighbour and no measurement keeps what it had.

pub mod io;
mod topology;
mod weights;

pub use topology::{ActiveLinks, Topology};
pub use weights::{compute_weights, compute_weights_on, WeightMatrix, WeightScheme};

use crate::exec::{self, Execution};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("round {t}: measurements do not match the valid set: {reason}")]
    Mismatch { t: u64, reason: String },
    #[error("state has {state} nodes but topology has {topology}")]
    SizeMismatch { state: usize, topology: usize },
    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Format(#[from] io::ReplayError),
}

/// `a^t = min(1, numerator / (t + 1))` for robots that measure and have a
/// valid neighbour. A zero numerator gives plain consensus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub numerator: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { numerator: 1.0 }
    }
}

impl StepSchedule {
    pub fn new(numerator: f64) -> Result<Self, ProtocolError> {
        if !(numerator.is_finite() && numerator >= 0.0) {
            return Err(ProtocolError::InvalidSchedule(format!(
                "numerator must be finite and non-negative, got {numerator}"
            )));
        }
        Ok(Self { numerator })
    }

    pub fn step_size(&self, t: u64, in_valid: bool, has_valid_neighbor: bool) -> f64 {
        if !in_valid {
            0.0
        } else if !has_valid_neighbor {
            1.0
        } else {
            (self.numerator / (t as f64 + 1.0)).min(1.0)
        }
    }
}

/// One robot's measurement attempt for a round; `present` iff the robot is
/// in the valid set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub node: usize,
    pub value: Vector3<f64>,
    pub present: bool,
}

impl Measurement {
    pub fn present(node: usize, value: Vector3<f64>) -> Self {
        Self {
            node,
            value,
            present: true,
        }
    }

    pub fn absent(node: usize) -> Self {
        Self {
            node,
            value: Vector3::zeros(),
            present: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(default)]
    pub weights: WeightScheme,
    #[serde(default)]
    pub step: StepSchedule,
    /// Per-edge, per-round probability that a link is silent.
    #[serde(default)]
    pub drop_probability: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            weights: WeightScheme::UniformClosed,
            step: StepSchedule::default(),
            drop_probability: 0.0,
        }
    }
}

/// Estimates `x_i^t` at round `t`; `None` until a robot hears of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolState {
    pub t: u64,
    pub estimates: Vec<Option<Vector3<f64>>>,
}

impl ProtocolState {
    pub fn empty(n: usize) -> Self {
        Self {
            t: 0,
            estimates: vec![None; n],
        }
    }

    /// Round-zero state: every measuring robot starts from its measurement.
    pub fn initialize(n: usize, measurements: &[Measurement]) -> Result<Self, ProtocolError> {
        let mut state = Self::empty(n);
        let valid = check_measurements(0, n, measurements)?;
        for m in measurements {
            if valid[m.node] {
                state.estimates[m.node] = Some(m.value);
            }
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// Validates one round's measurements and returns the valid set they imply.
fn check_measurements(t: u64, n: usize, measurements: &[Measurement]) -> Result<Vec<bool>, ProtocolError> {
    let bad = |reason: String| ProtocolError::Mismatch { t, reason };
    if measurements.len() != n {
        return Err(bad(format!("{} measurement slots for {n} nodes", measurements.len())));
    }
    let mut valid = vec![false; n];
    for (i, m) in measurements.iter().enumerate() {
        if m.node != i {
            return Err(bad(format!("slot {i} carries node {}", m.node)));
        }
        if m.present && !(m.value.iter().all(|v| v.is_finite())) {
            return Err(bad(format!("node {i} is in the valid set with a non-finite value")));
        }
        valid[i] = m.present;
    }
    Ok(valid)
}

/// One synchronous round over all links.
pub fn protocol_round(
    state: &ProtocolState,
    topology: &Topology,
    scheme: WeightScheme,
    schedule: StepSchedule,
    measurements: &[Measurement],
) -> Result<ProtocolState, ProtocolError> {
    protocol_round_with(
        Execution::default(),
        state,
        topology,
        scheme,
        schedule,
        measurements,
        &ActiveLinks::all(topology),
    )
}

/// One synchronous round over the given active links.
pub fn protocol_round_with(
    exec: Execution,
    state: &ProtocolState,
    topology: &Topology,
    scheme: WeightScheme,
    schedule: StepSchedule,
    measurements: &[Measurement],
    links: &ActiveLinks,
) -> Result<ProtocolState, ProtocolError> {
    let n = topology.len();
    if state.len() != n {
        return Err(ProtocolError::SizeMismatch {
            state: state.len(),
            topology: n,
        });
    }
    let valid = check_measurements(state.t, n, measurements)?;
    // A robot that starts measuring before it has heard anything joins with
    // its own measurement, as at round zero.
    let current: Vec<Option<Vector3<f64>>> = state
        .estimates
        .iter()
        .zip(measurements)
        .map(|(x, m)| x.or(m.present.then_some(m.value)))
        .collect();
    let weights = compute_weights_on(topology, links, &valid, scheme);
    let t = state.t;
    let estimates = exec::map_indexed(exec, n, |i| {
        let row = weights.row(i);
        if row.is_empty() {
            return current[i];
        }
        let has_valid_neighbor = row.iter().any(|&(j, _)| j != i);
        let alpha = schedule.step_size(t, valid[i], has_valid_neighbor);
        let mixed: Vector3<f64> = row
            .iter()
            .map(|&(j, w)| w * current[j].expect("valid robots hold estimates"))
            .sum();
        let mut next = (1.0 - alpha) * mixed;
        if valid[i] {
            next += alpha * measurements[i].value;
        }
        Some(next)
    });
    Ok(ProtocolState { t: t + 1, estimates })
}

/// Supplies each round's measurements.
pub trait MeasurementSource {
    fn measurements(&mut self, t: u64, n: usize) -> Result<Vec<Measurement>, ProtocolError>;
}

/// States `x^0..=x^T` and the valid sets `S^0..S^{T-1}` that drove them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<ProtocolState>,
    pub valid_sets: Vec<Vec<bool>>,
}

impl Trajectory {
    pub fn last(&self) -> &ProtocolState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Earliest round in which each robot was in the valid set.
    pub fn join_rounds(&self) -> Vec<Option<u64>> {
        let n = self.states[0].len();
        (0..n)
            .map(|i| self.valid_sets.iter().position(|s| s[i]).map(|t| t as u64))
            .collect()
    }
}

/// Runs `rounds` protocol rounds from `initial`. Link drops, if configured,
/// are drawn from a generator seeded by `seed` and the round index.
pub fn run(
    initial: ProtocolState,
    topology: &Topology,
    config: &ProtocolConfig,
    source: &mut dyn MeasurementSource,
    rounds: u64,
    seed: u64,
) -> Result<Trajectory, ProtocolError> {
    let n = topology.len();
    let mut states = vec![initial];
    let mut valid_sets = Vec::with_capacity(rounds as usize);
    for _ in 0..rounds {
        let state = states.last().expect("non-empty");
        let measurements = source.measurements(state.t, n)?;
        let links = if config.drop_probability > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::sim::stream_seed(seed, state.t, 0, 0x11));
            ActiveLinks::sample(topology, config.drop_probability, &mut rng)
        } else {
            ActiveLinks::all(topology)
        };
        let next = protocol_round_with(
            Execution::default(),
            state,
            topology,
            config.weights,
            config.step,
            &measurements,
            &links,
        )?;
        valid_sets.push(measurements.iter().map(|m| m.present).collect());
        states.push(next);
    }
    Ok(Trajectory { states, valid_sets })
}

/// Worst robot error and largest pairwise disagreement, over robots that
/// hold an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceMetrics {
    pub max_error: f64,
    pub spread: f64,
}

pub fn convergence_metrics(trajectory: &[ProtocolState], target: &Vector3<f64>) -> Vec<ConvergenceMetrics> {
    trajectory.iter().map(|s| state_metrics(s, target)).collect()
}

pub fn state_metrics(state: &ProtocolState, target: &Vector3<f64>) -> ConvergenceMetrics {
    let known: Vec<&Vector3<f64>> = state.estimates.iter().flatten().collect();
    let max_error = known.iter().map(|x| (*x - target).norm()).fold(0.0, f64::max);
    let mut spread: f64 = 0.0;
    for (a, x) in known.iter().enumerate() {
        for y in &known[a + 1..] {
            spread = spread.max((*x - *y).norm());
        }
    }
    ConvergenceMetrics { max_error, spread }
}
