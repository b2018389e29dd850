//! Measurement replay (`t,node,x,y,z,valid`) and trajectory
//! (`t,node,x,y,z,in_valid_set`) CSV files.

use super::{Measurement, MeasurementSource, ProtocolError, ProtocolState, Trajectory};
use nalgebra::Vector3;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

pub const REPLAY_HEADER: [&str; 6] = ["t", "node", "x", "y", "z", "valid"];
pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "node", "x", "y", "z", "in_valid_set"];

#[derive(Debug, Error)]
#[error("line {line}: {reason}")]
pub struct ReplayError {
    pub line: u64,
    pub reason: String,
}

/// Recorded measurements, replayed round by round. Rows missing for a
/// `(t, node)` pair count as "not in view".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Replay {
    rounds: BTreeMap<u64, BTreeMap<usize, Vector3<f64>>>,
    nodes: usize,
}

impl Replay {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ReplayError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| ReplayError { line: 1, reason: e.to_string() })?
            .clone();
        if header.iter().collect::<Vec<_>>() != REPLAY_HEADER {
            return Err(ReplayError {
                line: 1,
                reason: format!("expected header `{}`", REPLAY_HEADER.join(",")),
            });
        }
        let mut replay = Replay::default();
        for record in rdr.records() {
            let record = record.map_err(|e| ReplayError {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let err = |reason: String| ReplayError { line, reason };
            let t: u64 = record[0].parse().map_err(|_| err(format!("bad round {:?}", &record[0])))?;
            let node: usize = record[1].parse().map_err(|_| err(format!("bad node {:?}", &record[1])))?;
            let valid = match &record[5] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(err(format!("bad valid flag {other:?}"))),
            };
            replay.nodes = replay.nodes.max(node + 1);
            if !valid {
                continue;
            }
            let mut v = Vector3::zeros();
            for k in 0..3 {
                v[k] = record[2 + k]
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(format!("valid row needs finite {}", REPLAY_HEADER[2 + k])))?;
            }
            if replay.rounds.entry(t).or_default().insert(node, v).is_some() {
                return Err(err(format!("duplicate row for t={t}, node={node}")));
            }
        }
        Ok(replay)
    }

    /// Number of robots mentioned in the file.
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn last_round(&self) -> Option<u64> {
        self.rounds.keys().next_back().copied()
    }
}

impl MeasurementSource for Replay {
    fn measurements(&mut self, t: u64, n: usize) -> Result<Vec<Measurement>, ProtocolError> {
        if self.nodes > n {
            return Err(ProtocolError::Mismatch {
                t,
                reason: format!("replay references node {} but the topology has {n}", self.nodes - 1),
            });
        }
        let row = self.rounds.get(&t);
        Ok((0..n)
            .map(|i| match row.and_then(|r| r.get(&i)) {
                Some(v) => Measurement::present(i, *v),
                None => Measurement::absent(i),
            })
            .collect())
    }
}

/// Writes one row per `(t, node)`. Uninitialized estimates leave `x,y,z`
/// empty; the final state's `in_valid_set` is 0 because membership is only
/// observed when a round runs.
pub fn write_trajectory<W: Write>(writer: W, trajectory: &Trajectory) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRAJECTORY_HEADER)?;
    for (t, state) in trajectory.states.iter().enumerate() {
        for (i, x) in state.estimates.iter().enumerate() {
            let valid = trajectory.valid_sets.get(t).is_some_and(|s| s[i]);
            let (a, b, c) = match x {
                Some(v) => (v.x.to_string(), v.y.to_string(), v.z.to_string()),
                None => (String::new(), String::new(), String::new()),
            };
            w.write_record([t.to_string(), i.to_string(), a, b, c, u8::from(valid).to_string()])?;
        }
    }
    w.flush()
}

/// Writes per-round measurements in the replay format, one row per robot.
pub fn write_measurements<W: Write>(writer: W, rounds: &[Vec<Measurement>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPLAY_HEADER)?;
    for (t, round) in rounds.iter().enumerate() {
        for m in round {
            let (a, b, c) = if m.present {
                (m.value.x.to_string(), m.value.y.to_string(), m.value.z.to_string())
            } else {
                (String::new(), String::new(), String::new())
            };
            w.write_record([t.to_string(), m.node.to_string(), a, b, c, u8::from(m.present).to_string()])?;
        }
    }
    w.flush()
}

/// Reads a file written by [`write_trajectory`].
pub fn read_trajectory<R: Read>(reader: R) -> Result<Trajectory, ReplayError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| ReplayError { line: 1, reason: e.to_string() })?
        .clone();
    if header.iter().collect::<Vec<_>>() != TRAJECTORY_HEADER {
        return Err(ReplayError {
            line: 1,
            reason: format!("expected header `{}`", TRAJECTORY_HEADER.join(",")),
        });
    }
    let mut rows: Vec<Vec<(Option<Vector3<f64>>, bool)>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| ReplayError {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |reason: String| ReplayError { line, reason };
        let t: usize = record[0].parse().map_err(|_| err(format!("bad round {:?}", &record[0])))?;
        let node: usize = record[1].parse().map_err(|_| err(format!("bad node {:?}", &record[1])))?;
        if t == rows.len() && node == 0 {
            rows.push(Vec::new());
        } else if !(t + 1 == rows.len() && node == rows[t].len()) {
            return Err(err(format!("row t={t}, node={node} is out of order")));
        }
        let x = if record[2].is_empty() && record[3].is_empty() && record[4].is_empty() {
            None
        } else {
            let mut v = Vector3::zeros();
            for k in 0..3 {
                v[k] = record[2 + k]
                    .parse()
                    .map_err(|_| err(format!("bad {} {:?}", TRAJECTORY_HEADER[2 + k], &record[2 + k])))?;
            }
            Some(v)
        };
        let valid = match &record[5] {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("bad in_valid_set flag {other:?}"))),
        };
        rows[t].push((x, valid));
    }
    if rows.is_empty() {
        return Err(ReplayError {
            line: 1,
            reason: "trajectory has no rows".into(),
        });
    }
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(ReplayError {
            line: 0,
            reason: "rounds have different node counts".into(),
        });
    }
    let last = rows.len() - 1;
    Ok(Trajectory {
        states: rows
            .iter()
            .enumerate()
            .map(|(t, r)| ProtocolState {
                t: t as u64,
                estimates: r.iter().map(|(x, _)| *x).collect(),
            })
            .collect(),
        valid_sets: rows[..last].iter().map(|r| r.iter().map(|(_, v)| *v).collect()).collect(),
    })
}
