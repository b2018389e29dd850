//! Protocol-only runs driven by a recorded measurement file.

use super::{SimError, TopologySpec};
use crate::protocol::io::{write_trajectory, Replay};
use crate::protocol::{convergence_metrics, run, ProtocolConfig, ProtocolState, Trajectory};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySpec {
    /// Measurement CSV, relative to the replay description file.
    pub measurements: PathBuf,
    /// Robot count; defaults to the highest node id in the file plus one.
    #[serde(default)]
    pub nodes: Option<usize>,
    #[serde(default)]
    pub topology: TopologySpec,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    /// Defaults to the last round recorded in the file plus one.
    #[serde(default)]
    pub rounds: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    /// True target, for error metrics.
    #[serde(default)]
    pub target: Option<[f64; 3]>,
    /// Pass iff every final estimate is within this distance of the target.
    #[serde(default)]
    pub max_final_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub trajectory: Trajectory,
    pub final_max_error: Option<f64>,
    pub passed: bool,
}

impl ReplaySpec {
    pub fn load(path: &Path) -> Result<(Self, Replay), SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_owned(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let spec: ReplaySpec = serde_path_to_error::deserialize(de).map_err(|e| SimError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let csv_path = path.parent().unwrap_or(Path::new(".")).join(&spec.measurements);
        let file = std::fs::File::open(&csv_path).map_err(|source| SimError::Io {
            path: csv_path.clone(),
            source,
        })?;
        let replay = Replay::from_reader(file).map_err(|e| SimError::Log {
            path: csv_path,
            line: e.line,
            reason: e.reason,
        })?;
        Ok((spec, replay))
    }

    pub fn execute(&self, mut replay: Replay, rounds_override: Option<u64>) -> Result<ReplayOutcome, SimError> {
        let n = self.nodes.unwrap_or(replay.nodes());
        if n == 0 {
            return Err(SimError::Config("replay has no robots".into()));
        }
        let topology = self.topology.build(n)?;
        let rounds = rounds_override
            .or(self.rounds)
            .unwrap_or_else(|| replay.last_round().map_or(0, |t| t + 1));
        let trajectory = run(ProtocolState::empty(n), &topology, &self.protocol, &mut replay, rounds, self.seed)?;
        let final_max_error = self.target.and_then(|x| {
            let x = Vector3::from(x);
            let errs: Option<Vec<f64>> = trajectory.last().estimates.iter().map(|e| e.map(|e| (e - x).norm())).collect();
            errs.map(|e| e.into_iter().fold(0.0, f64::max))
        });
        let passed = match self.max_final_error {
            Some(limit) => final_max_error.is_some_and(|e| e <= limit),
            None => true,
        };
        Ok(ReplayOutcome {
            trajectory,
            final_max_error,
            passed,
        })
    }

    /// `trajectory.csv` plus a `round,max_error,spread` summary when the
    /// target is known.
    pub fn write_outputs(&self, dir: &Path, outcome: &ReplayOutcome) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|source| SimError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let path = dir.join(super::TRAJECTORY_FILE);
        let io = |path: &Path| {
            let path = path.to_owned();
            move |source| SimError::Io { path, source }
        };
        let file = std::fs::File::create(&path).map_err(io(&path))?;
        write_trajectory(std::io::BufWriter::new(file), &outcome.trajectory).map_err(io(&path))?;
        if let Some(x) = self.target {
            let path = dir.join(super::SUMMARY_FILE);
            let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io(&path))?);
            let metrics = convergence_metrics(&outcome.trajectory.states, &Vector3::from(x));
            let mut text = String::from("round,max_error,spread\n");
            for (t, m) in metrics.iter().enumerate() {
                text.push_str(&format!("{t},{},{}\n", m.max_error, m.spread));
            }
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io(&path))?;
        }
        Ok(())
    }
}
