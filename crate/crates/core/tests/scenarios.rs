use std::path::{Path, PathBuf};
use uwloc_core::protocol::io::read_trajectory;
use uwloc_core::sim::{
    attitude_samples, build_report, read_report, run_scenario, write_logs, ReplaySpec, Scenario, SimError,
    TRAJECTORY_FILE,
};

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn bundled_scenarios_pass_their_checks() {
    for name in ["threebot.json", "push.json", "depthstep.json"] {
        let s = Scenario::load(&bundled(name)).unwrap();
        let log = run_scenario(&s).unwrap();
        let report = build_report(&s, &log.trajectory, &attitude_samples(&s, &log));
        assert!(!report.checks.is_empty(), "{name} has no checks");
        for c in &report.checks {
            assert!(c.passed, "{name}: {} failed: {}", c.name, c.detail);
        }
    }
}

#[test]
fn report_from_disk_matches_in_memory() {
    let s = Scenario::load(&bundled("threebot.json")).unwrap();
    let log = run_scenario(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_logs(dir.path(), &s, &log).unwrap();
    let (reloaded, report) = read_report(dir.path()).unwrap();
    assert_eq!(reloaded, s);
    assert_eq!(report, written);

    // Join rounds agree with the raw trajectory log.
    let file = std::fs::File::open(dir.path().join(TRAJECTORY_FILE)).unwrap();
    let trajectory = read_trajectory(file).unwrap();
    assert_eq!(trajectory.join_rounds(), report.join_rounds);
}

#[test]
fn scenario_json_round_trips() {
    for name in ["threebot.json", "push.json", "depthstep.json"] {
        let s = Scenario::load(&bundled(name)).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
}

#[test]
fn replay_reproduces_closed_loop_trajectory() {
    // The bundled replay holds the measurements of the three-robot run.
    let s = Scenario::load(&bundled("threebot.json")).unwrap();
    let log = run_scenario(&s).unwrap();
    let (spec, replay) = ReplaySpec::load(&bundled("replay.json")).unwrap();
    let outcome = spec.execute(replay, None).unwrap();
    assert!(outcome.passed);
    assert_eq!(outcome.trajectory, log.trajectory);
}

#[test]
fn seed_changes_the_run() {
    let mut s = Scenario::load(&bundled("threebot.json")).unwrap();
    let a = run_scenario(&s).unwrap();
    s.noise.seed += 1;
    let b = run_scenario(&s).unwrap();
    assert_ne!(a.trajectory.last(), b.trajectory.last());
}

#[test]
fn missing_logs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_report(dir.path()), Err(SimError::MissingLog(_))));
    assert!(matches!(
        read_report(&dir.path().join("absent")),
        Err(SimError::MissingLog(_))
    ));
}

#[test]
fn hover_without_disturbance_recovers_immediately() {
    let mut s = Scenario::load(&bundled("push.json")).unwrap();
    s.disturbances.clear();
    let log = run_scenario(&s).unwrap();
    let report = build_report(&s, &log.trajectory, &attitude_samples(&s, &log));
    let start = &report.events[0];
    assert_eq!(start.recovery, Some(0.0));
}
