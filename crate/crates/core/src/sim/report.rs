//! Metrics over a finished run, and the scenario's pass/fail checks.

use super::{AttitudeSample, RecoveryCheck, Scenario};
use crate::protocol::{state_metrics, Trajectory};

/// Bands used for recovery times when the scenario sets none.
const DEFAULT_BANDS: RecoveryCheck = RecoveryCheck {
    robot: 0,
    depth_band: 0.005,
    attitude_band_deg: 1.0,
    hold: 1.0,
    max_time: f64::INFINITY,
};

/// Window at the end of the run used for steady-state attitude, s.
const STEADY_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub round: u64,
    pub time: f64,
    pub valid: usize,
    pub initialized: usize,
    /// NaN until some robot holds an estimate.
    pub max_error: f64,
    pub spread: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Start,
    Push,
    Setpoint,
}

impl EventKind {
    fn name(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Push => "push",
            EventKind::Setpoint => "setpoint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecovery {
    pub robot: usize,
    pub kind: EventKind,
    pub time: f64,
    /// Time from the event until depth and attitude enter their bands for
    /// good (for at least the hold time); `None` if they never do.
    pub recovery: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rounds: Vec<RoundMetrics>,
    pub join_rounds: Vec<Option<u64>>,
    /// First round count after which every robot is within the convergence
    /// tolerance.
    pub convergence_round: Option<u64>,
    pub final_errors: Vec<Option<f64>>,
    pub tank_diagonal: f64,
    pub events: Vec<EventRecovery>,
    /// Largest `|roll|`, `|pitch|` in the final second, degrees.
    pub steady_attitude_deg: Vec<f64>,
    /// Largest `|roll|`, `|pitch|` over the run, degrees.
    pub max_attitude_deg: Vec<f64>,
    pub checks: Vec<CheckOutcome>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn final_max_error(&self) -> Option<f64> {
        self.final_errors.iter().copied().collect::<Option<Vec<_>>>().map(|e| e.into_iter().fold(0.0, f64::max))
    }

    /// Flat `(metric, value)` pairs, in a fixed order.
    pub fn metrics(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let optu = |v: Option<u64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let mut m = vec![
            ("rounds".to_string(), (self.rounds.len()).to_string()),
            ("convergence_round".to_string(), optu(self.convergence_round)),
            ("final_max_error".to_string(), opt(self.final_max_error())),
            (
                "final_relative_error".to_string(),
                opt(self.final_max_error().map(|e| e / self.tank_diagonal)),
            ),
        ];
        for (i, j) in self.join_rounds.iter().enumerate() {
            m.push((format!("join_round.{i}"), optu(*j)));
        }
        for (i, e) in self.final_errors.iter().enumerate() {
            m.push((format!("final_error.{i}"), opt(*e)));
        }
        for e in &self.events {
            m.push((format!("recovery.{}.{}@{}", e.robot, e.kind.name(), e.time), opt(e.recovery)));
        }
        for (i, a) in self.steady_attitude_deg.iter().enumerate() {
            m.push((format!("steady_attitude_deg.{i}"), a.to_string()));
        }
        for (i, a) in self.max_attitude_deg.iter().enumerate() {
            m.push((format!("max_attitude_deg.{i}"), a.to_string()));
        }
        for c in &self.checks {
            m.push((format!("check.{}", c.name), if c.passed { "pass" } else { "fail" }.to_string()));
        }
        m
    }
}

/// Recovery time after `start`, looking only at samples before `end`.
pub fn recovery_time(samples: &[&AttitudeSample], start: f64, end: f64, bands: &RecoveryCheck) -> Option<f64> {
    let window: Vec<&&AttitudeSample> = samples.iter().filter(|s| s.time >= start - 1e-9 && s.time < end).collect();
    let limit = bands.attitude_band_deg.to_radians();
    let in_band = |s: &AttitudeSample| {
        (s.depth - s.target_depth).abs() <= bands.depth_band && s.roll.abs() <= limit && s.pitch.abs() <= limit
    };
    // Walk backwards tracking the time of the next out-of-band sample.
    let mut next_bad = end;
    let mut best = None;
    for s in window.iter().rev() {
        if in_band(s) {
            if next_bad - s.time >= bands.hold - 1e-9 {
                best = Some(s.time - start);
            }
        } else {
            next_bad = s.time;
        }
    }
    best.map(|t: f64| t.max(0.0))
}

pub fn build_report(scenario: &Scenario, trajectory: &Trajectory, samples: &[AttitudeSample]) -> Report {
    let n = scenario.robots.len();
    let run = &scenario.run;
    let checks_cfg = &run.checks;
    let diagonal = scenario.world.diagonal();

    let rounds: Vec<RoundMetrics> = trajectory
        .states
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, s)| {
            let time = k as f64 * run.round_period;
            let m = state_metrics(s, &scenario.world.target_at(time));
            let initialized = s.estimates.iter().filter(|x| x.is_some()).count();
            let max_error = if initialized == 0 { f64::NAN } else { m.max_error };
            RoundMetrics {
                round: (k - 1) as u64,
                time,
                valid: trajectory.valid_sets[k - 1].iter().filter(|v| **v).count(),
                initialized,
                max_error,
                spread: m.spread,
                relative_error: max_error / diagonal,
            }
        })
        .collect();

    let tolerance = checks_cfg
        .convergence_tolerance
        .or(checks_cfg.max_relative_error.map(|r| r * diagonal));
    let convergence_round = tolerance.and_then(|tol| {
        rounds
            .iter()
            .find(|r| r.initialized == n && r.max_error < tol)
            .map(|r| r.round + 1)
    });

    let end_time = trajectory.states.len().saturating_sub(1) as f64 * run.round_period;
    let target = scenario.world.target_at(end_time);
    let final_errors: Vec<Option<f64>> = trajectory
        .last()
        .estimates
        .iter()
        .map(|x| x.map(|x| (x - target).norm()))
        .collect();

    let by_robot: Vec<Vec<&AttitudeSample>> =
        (0..n).map(|i| samples.iter().filter(|s| s.robot == i).collect()).collect();
    let run_end = by_robot
        .iter()
        .flat_map(|v| v.last())
        .map(|s| s.time + run.control_period)
        .fold(0.0, f64::max);

    let bands = checks_cfg.recovery.unwrap_or(DEFAULT_BANDS);
    let mut events = Vec::new();
    for (i, spec) in scenario.robots.iter().enumerate() {
        let mut times: Vec<(f64, EventKind)> = vec![(0.0, EventKind::Start)];
        times.extend(scenario.disturbances.iter().filter(|d| d.robot == i).map(|d| (d.time, EventKind::Push)));
        times.extend(spec.setpoints.iter().map(|s| (s.time, EventKind::Setpoint)));
        times.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (k, &(time, kind)) in times.iter().enumerate() {
            if time >= run_end {
                continue;
            }
            let end = times.get(k + 1).map_or(run_end, |next| next.0.min(run_end));
            events.push(EventRecovery {
                robot: i,
                kind,
                time,
                recovery: recovery_time(&by_robot[i], time, end, &bands),
            });
        }
    }

    let attitude = |s: &&AttitudeSample| s.roll.abs().max(s.pitch.abs()).to_degrees();
    let max_attitude_deg: Vec<f64> = by_robot.iter().map(|v| v.iter().map(attitude).fold(0.0, f64::max)).collect();
    let steady_attitude_deg: Vec<f64> = by_robot
        .iter()
        .map(|v| {
            v.iter()
                .filter(|s| s.time >= run_end - STEADY_WINDOW - 1e-9)
                .map(attitude)
                .fold(0.0, f64::max)
        })
        .collect();
    let join_rounds = trajectory.join_rounds();

    let mut checks = Vec::new();
    if let Some(limit) = checks_cfg.max_relative_error {
        let worst = final_errors
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .map(|e| e.into_iter().fold(0.0, f64::max) / diagonal);
        checks.push(CheckOutcome {
            name: "final_relative_error".into(),
            passed: worst.is_some_and(|w| w < limit),
            detail: match worst {
                Some(w) => format!("worst {w:.6} of the tank diagonal, limit {limit}"),
                None => "some robot never received an estimate".into(),
            },
        });
    }
    if checks_cfg.staged_joins {
        let first = join_rounds.first().copied().flatten();
        let later = join_rounds[1..].iter().all(|j| matches!((j, first), (Some(j), Some(f)) if *j > f));
        checks.push(CheckOutcome {
            name: "staged_joins".into(),
            passed: first.is_some() && later,
            detail: format!("join rounds {join_rounds:?}"),
        });
    }
    if let Some(rc) = checks_cfg.recovery {
        let mine: Vec<&EventRecovery> = events.iter().filter(|e| e.robot == rc.robot).collect();
        let judged: Vec<&EventRecovery> = if mine.iter().any(|e| e.kind != EventKind::Start) {
            mine.into_iter().filter(|e| e.kind != EventKind::Start).collect()
        } else {
            mine
        };
        let passed = !judged.is_empty() && judged.iter().all(|e| e.recovery.is_some_and(|r| r <= rc.max_time));
        let detail = judged
            .iter()
            .map(|e| format!("{}@{}s: {}", e.kind.name(), e.time, e.recovery.map_or("never".into(), |r| format!("{r:.2}s"))))
            .collect::<Vec<_>>()
            .join(", ");
        checks.push(CheckOutcome {
            name: "recovery".into(),
            passed,
            detail: format!("{detail}; limit {}s", rc.max_time),
        });
    }
    if let Some(limit) = checks_cfg.max_attitude_deg {
        let worst = max_attitude_deg.iter().copied().fold(0.0, f64::max);
        checks.push(CheckOutcome {
            name: "max_attitude".into(),
            passed: worst <= limit,
            detail: format!("worst {worst:.3} deg, limit {limit} deg"),
        });
    }

    Report {
        rounds,
        join_rounds,
        convergence_round,
        final_errors,
        tank_diagonal: diagonal,
        events,
        steady_attitude_deg,
        max_attitude_deg,
        checks,
    }
}
