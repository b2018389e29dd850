//! CSV export and re-import of a run.
//!
//! | file               | one row per            | columns |
//! |--------------------|------------------------|---------|
//! | `trajectory.csv`   | round, robot           | `t,node,x,y,z,in_valid_set` |
//! | `measurements.csv` | round, robot           | `t,node,x,y,z,valid` (replayable) |
//! | `control.csv`      | control step, robot    | `t,robot,nu1..nu4,zeta1..zeta4,saturated` |
//! | `states.csv`       | control step, robot    | `t,robot,x,y,z,roll,pitch,yaw,depth,target_depth` |
//! | `gimbals.csv`      | round, robot           | `t,robot,pan,tilt` |
//! | `summary.csv`      | round                  | `round,time,valid,initialized,max_error,spread,relative_error` |
//! | `report.csv`       | metric                 | `metric,value` |
//!
//! Times are in seconds, lengths in metres, angles in radians. Every column
//! is plain numeric, so files load directly into gnuplot or a dataframe.

use super::{build_report, Report, RoundLog, Scenario, SimError};
use crate::protocol::io::{read_trajectory, write_measurements, write_trajectory};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const CONTROL_FILE: &str = "control.csv";
pub const STATES_FILE: &str = "states.csv";
pub const GIMBALS_FILE: &str = "gimbals.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.csv";

const STATES_HEADER: [&str; 10] = ["t", "robot", "x", "y", "z", "roll", "pitch", "yaw", "depth", "target_depth"];

/// The slice of `states.csv` the report needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeSample {
    pub time: f64,
    pub robot: usize,
    pub depth: f64,
    pub target_depth: f64,
    pub roll: f64,
    pub pitch: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_owned(),
        source,
    }
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf), SimError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_err(&path))?;
    Ok((BufWriter::new(file), path))
}

/// Writes every log file into `dir`, creating it if needed, and returns the
/// report computed from the run.
pub fn write_logs(dir: &Path, scenario: &Scenario, log: &RoundLog) -> Result<Report, SimError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let surface = scenario.world.surface;

    let (mut w, path) = create(dir, SCENARIO_FILE)?;
    writeln!(w, "{}", scenario.to_json()).and_then(|_| w.flush()).map_err(io_err(&path))?;

    let (w, path) = create(dir, TRAJECTORY_FILE)?;
    write_trajectory(w, &log.trajectory).map_err(io_err(&path))?;

    let (w, path) = create(dir, MEASUREMENTS_FILE)?;
    write_measurements(w, &log.measurements).map_err(io_err(&path))?;

    let (w, path) = create(dir, CONTROL_FILE)?;
    write_csv(w, &path, |c| {
        c.write_record([
            "t", "robot", "nu1", "nu2", "nu3", "nu4", "zeta1", "zeta2", "zeta3", "zeta4", "saturated",
        ])?;
        for s in &log.samples {
            let mut row = vec![s.time.to_string(), s.robot.to_string()];
            row.extend(s.command.speeds().iter().map(f64::to_string));
            row.extend(s.zeta.iter().map(f64::to_string));
            row.push(u8::from(s.saturated).to_string());
            c.write_record(row)?;
        }
        Ok(())
    })?;

    let (w, path) = create(dir, STATES_FILE)?;
    write_csv(w, &path, |c| {
        c.write_record(STATES_HEADER)?;
        for s in &log.samples {
            let p = s.state.position;
            let a = s.state.attitude;
            c.write_record([
                s.time.to_string(),
                s.robot.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
                a.x.to_string(),
                a.y.to_string(),
                a.z.to_string(),
                (surface - p.z).to_string(),
                s.target_depth.to_string(),
            ])?;
        }
        Ok(())
    })?;

    let (w, path) = create(dir, GIMBALS_FILE)?;
    write_csv(w, &path, |c| {
        c.write_record(["t", "robot", "pan", "tilt"])?;
        for (t, round) in log.gimbals.iter().enumerate() {
            for (i, (pan, tilt)) in round.iter().enumerate() {
                c.write_record([t.to_string(), i.to_string(), pan.to_string(), tilt.to_string()])?;
            }
        }
        Ok(())
    })?;

    let samples = attitude_samples(scenario, log);
    let report = build_report(scenario, &log.trajectory, &samples);
    write_report_files(dir, &report)?;
    Ok(report)
}

/// Writes `summary.csv` and `report.csv`.
pub fn write_report_files(dir: &Path, report: &Report) -> Result<(), SimError> {
    let (w, path) = create(dir, SUMMARY_FILE)?;
    write_csv(w, &path, |c| {
        c.write_record(["round", "time", "valid", "initialized", "max_error", "spread", "relative_error"])?;
        for r in &report.rounds {
            c.write_record([
                r.round.to_string(),
                r.time.to_string(),
                r.valid.to_string(),
                r.initialized.to_string(),
                r.max_error.to_string(),
                r.spread.to_string(),
                r.relative_error.to_string(),
            ])?;
        }
        Ok(())
    })?;
    let (w, path) = create(dir, REPORT_FILE)?;
    write_csv(w, &path, |c| {
        c.write_record(["metric", "value"])?;
        for (k, v) in report.metrics() {
            c.write_record([k, v])?;
        }
        Ok(())
    })
}

fn write_csv<W: Write>(
    w: W,
    path: &Path,
    body: impl FnOnce(&mut csv::Writer<W>) -> csv::Result<()>,
) -> Result<(), SimError> {
    let mut c = csv::Writer::from_writer(w);
    body(&mut c).map_err(|e| SimError::Io {
        path: path.to_owned(),
        source: e.into(),
    })?;
    c.flush().map_err(io_err(path))
}

pub fn attitude_samples(scenario: &Scenario, log: &RoundLog) -> Vec<AttitudeSample> {
    log.samples
        .iter()
        .map(|s| AttitudeSample {
            time: s.time,
            robot: s.robot,
            depth: scenario.world.surface - s.state.position.z,
            target_depth: s.target_depth,
            roll: s.state.attitude.x,
            pitch: s.state.attitude.y,
        })
        .collect()
}

fn open(dir: &Path, name: &str) -> Result<(File, PathBuf), SimError> {
    let path = dir.join(name);
    match File::open(&path) {
        Ok(f) => Ok((f, path)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(SimError::MissingLog(path)),
        Err(source) => Err(SimError::Io { path, source }),
    }
}

fn parse_states(file: File, path: &Path) -> Result<Vec<AttitudeSample>, SimError> {
    let bad = |line: u64, reason: String| SimError::Log {
        path: path.to_owned(),
        line,
        reason,
    };
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != STATES_HEADER {
        return Err(bad(1, format!("expected header `{}`", STATES_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| bad(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |k: usize| -> Result<f64, SimError> {
            record[k]
                .parse::<f64>()
                .map_err(|_| bad(line, format!("bad {} {:?}", STATES_HEADER[k], &record[k])))
        };
        out.push(AttitudeSample {
            time: num(0)?,
            robot: record[1].parse().map_err(|_| bad(line, format!("bad robot {:?}", &record[1])))?,
            roll: num(5)?,
            pitch: num(6)?,
            depth: num(8)?,
            target_depth: num(9)?,
        });
    }
    Ok(out)
}

/// Rebuilds the report from a directory written by [`write_logs`].
pub fn read_report(dir: &Path) -> Result<(Scenario, Report), SimError> {
    if !dir.is_dir() {
        return Err(SimError::MissingLog(dir.to_owned()));
    }
    let (_, scenario_path) = open(dir, SCENARIO_FILE)?;
    let scenario = Scenario::load(&scenario_path)?;
    let (file, path) = open(dir, TRAJECTORY_FILE)?;
    let trajectory = read_trajectory(file).map_err(|e| SimError::Log {
        path: path.clone(),
        line: e.line,
        reason: e.reason,
    })?;
    let (file, path) = open(dir, STATES_FILE)?;
    let samples = parse_states(file, &path)?;
    let report = build_report(&scenario, &trajectory, &samples);
    Ok((scenario, report))
}
