use super::{
    aim_gimbal, apply_disturbance, camera_extrinsics, measure, stream_seed, Gimbal, Scenario, SimError,
};
use crate::camera::CameraRig;
use crate::control::{control_step, PIController, PressureArray};
use crate::dynamics::{rk4_step, RigidBodyState, ThrusterCommand};
use crate::exec::{self, Execution};
use crate::protocol::{protocol_round_with, ActiveLinks, Measurement, ProtocolState, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random streams drawn from the master seed.
pub(crate) mod streams {
    pub const PRESSURE: u64 = 1;
    pub const MEASUREMENT: u64 = 2;
    pub const LINK_DROPS: u64 = 0x11;
}

/// One robot at the start of one control step, and what it commanded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSample {
    pub time: f64,
    pub robot: usize,
    pub state: RigidBodyState,
    pub target_depth: f64,
    pub command: ThrusterCommand,
    pub zeta: [f64; 4],
    pub saturated: bool,
}

/// Everything a run produced. Control samples are ordered by time, then
/// robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub trajectory: Trajectory,
    pub measurements: Vec<Vec<Measurement>>,
    pub samples: Vec<ControlSample>,
    /// Camera `(pan, tilt)` per round and robot, at the sensing instant.
    pub gimbals: Vec<Vec<(f64, f64)>>,
    /// Body states after the last round.
    pub final_states: Vec<RigidBodyState>,
}

#[derive(Debug, Clone)]
struct Robot {
    state: RigidBodyState,
    controller: PIController,
    array: PressureArray,
    gimbal: Gimbal,
    rig: CameraRig,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RoundLog, SimError> {
    run_scenario_with(Execution::default(), scenario)
}

/// Runs every round. The output is identical for both execution modes.
pub fn run_scenario_with(exec: Execution, scenario: &Scenario) -> Result<RoundLog, SimError> {
    scenario.validate()?;
    let n = scenario.robots.len();
    let run = &scenario.run;
    let seed = scenario.noise.seed;
    let topology = scenario.topology.build(n)?;
    let steps = run.control_steps_per_round();
    let substeps = run.physics_steps_per_control();

    let mut robots = scenario
        .robots
        .iter()
        .map(|spec| {
            Ok(Robot {
                state: spec.initial_state(),
                controller: PIController::new(spec.gains, spec.target_depth, &spec.params)?,
                array: PressureArray::corners(
                    spec.params.arm_a,
                    spec.params.arm_b,
                    scenario.world.surface,
                    spec.pressure_noise,
                )?,
                gimbal: spec.gimbal,
                rig: spec.camera.rig()?,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let mut state = ProtocolState::empty(n);
    let mut states = vec![state.clone()];
    let mut valid_sets = Vec::new();
    let mut measurements_log = Vec::new();
    let mut gimbals_log = Vec::new();
    let mut samples = Vec::with_capacity((run.rounds * steps) as usize * n);

    for t in 0..run.rounds {
        let in_round = |e: SimError| SimError::InRound {
            round: t,
            source: Box::new(e),
        };

        // (1, 2) Physics and control for one round period, with pushes.
        let advanced = exec::map_indexed(exec, n, |i| advance(scenario, i, &robots[i], t, steps, substeps));
        let mut per_robot = Vec::with_capacity(n);
        for (robot, result) in robots.iter_mut().zip(advanced) {
            let (next, log) = result.map_err(in_round)?;
            *robot = next;
            per_robot.push(log);
        }
        for k in 0..steps as usize {
            samples.extend(per_robot.iter().map(|log| log[k]));
        }

        // (3) Aim cameras at the current estimates.
        let round_end = run.round_period * (t + 1) as f64;
        for (robot, estimate) in robots.iter_mut().zip(&state.estimates) {
            if let Some(x) = estimate {
                robot.gimbal = aim_gimbal(&robot.gimbal, &robot.state, x, run.round_period).map_err(in_round)?;
            }
            robot.rig = robot
                .rig
                .with_extrinsics(camera_extrinsics(&robot.state, &robot.gimbal).map_err(in_round)?);
        }
        gimbals_log.push(robots.iter().map(|r| (r.gimbal.pan, r.gimbal.tilt)).collect());

        // (4, 5) Valid set and measurements.
        let target = scenario.world.target_at(round_end);
        let readings = exec::map_indexed(exec, n, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, t, i as u64, streams::MEASUREMENT));
            measure(&target, &robots[i].rig, &scenario.noise, &mut rng)
        });
        let mut measurements = Vec::with_capacity(n);
        for (i, r) in readings.into_iter().enumerate() {
            measurements.push(match r.map_err(in_round)? {
                Some(x) => Measurement::present(i, x),
                None => Measurement::absent(i),
            });
        }

        // (6) One protocol round.
        let links = if scenario.protocol.drop_probability > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, t, 0, streams::LINK_DROPS));
            ActiveLinks::sample(&topology, scenario.protocol.drop_probability, &mut rng)
        } else {
            ActiveLinks::all(&topology)
        };
        state = protocol_round_with(
            exec,
            &state,
            &topology,
            scenario.protocol.weights,
            scenario.protocol.step,
            &measurements,
            &links,
        )
        .map_err(|e| in_round(e.into()))?;
        valid_sets.push(measurements.iter().map(|m| m.present).collect());
        measurements_log.push(measurements);
        states.push(state.clone());
    }

    Ok(RoundLog {
        trajectory: Trajectory { states, valid_sets },
        measurements: measurements_log,
        samples,
        gimbals: gimbals_log,
        final_states: robots.iter().map(|r| r.state).collect(),
    })
}

/// Integrates robot `i` through round `t`.
fn advance(
    scenario: &Scenario,
    i: usize,
    robot: &Robot,
    t: u64,
    steps: u64,
    substeps: u64,
) -> Result<(Robot, Vec<ControlSample>), SimError> {
    let spec = &scenario.robots[i];
    let run = &scenario.run;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(scenario.noise.seed, t, i as u64, streams::PRESSURE));
    let mut r = robot.clone();
    let mut log = Vec::with_capacity(steps as usize);
    for k in 0..steps {
        let index = t * steps + k;
        let time = run.control_time(index);
        for d in scenario.disturbances.iter().filter(|d| d.robot == i) {
            if run.control_index(d.time) == index {
                r.state = apply_disturbance(&spec.params, &r.state, &d.impulse);
            }
        }
        r.controller.set_target_depth(spec.target_depth_at(time));
        let out = control_step(&mut r.controller, &r.array, &spec.params, &r.state, run.control_period, &mut rng)?;
        log.push(ControlSample {
            time,
            robot: i,
            state: r.state,
            target_depth: r.controller.target_depth(),
            command: out.command,
            zeta: out.zeta,
            saturated: out.saturated,
        });
        for _ in 0..substeps {
            r.state = rk4_step(&spec.params, &r.state, &out.command, run.physics_step)?;
        }
    }
    Ok((r, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_json(text).unwrap()
    }

    const TWO: &str = r#"{
        "world": {"tank": [1.5, 1.2, 0.8], "surface": 0.7, "target": [0.75, 0.6, 0.02]},
        "robots": [
            {"position": [0.3, 0.6, 0.4], "target_depth": 0.3, "gimbal": {"tilt": 0.5}},
            {"position": [1.2, 0.6, 0.4], "target_depth": 0.3, "gimbal": {"pan": 1.5}}
        ],
        "noise": {"sigma": 0.0, "seed": 5},
        "run": {"rounds": 12}
    }"#;

    #[test]
    fn listener_turns_and_joins() {
        let s = scenario(TWO);
        let log = run_scenario(&s).unwrap();
        let joins = log.trajectory.join_rounds();
        assert_eq!(joins[0], Some(0));
        assert!(joins[1].unwrap() > 0, "{joins:?}");
        let target = s.world.target_at(0.0);
        for x in log.trajectory.last().estimates.iter() {
            assert!((x.unwrap() - target).norm() < 1e-12);
        }
        assert_eq!(log.samples.len(), 12 * 50 * 2);
        assert!(log.samples.windows(2).all(|w| (w[0].time, w[0].robot) < (w[1].time, w[1].robot)));
    }

    #[test]
    fn valid_set_matches_field_of_view() {
        let s = scenario(TWO);
        let log = run_scenario(&s).unwrap();
        for (t, m) in log.measurements.iter().enumerate() {
            for (i, mi) in m.iter().enumerate() {
                assert_eq!(mi.present, log.trajectory.valid_sets[t][i]);
            }
        }
    }

    #[test]
    fn blind_team_stays_uninitialized() {
        let text = TWO.replace("\"tilt\": 0.5", "\"tilt\": -1.2").replace("\"pan\": 1.5", "\"tilt\": -1.2");
        let log = run_scenario(&scenario(&text)).unwrap();
        assert!(log.trajectory.last().estimates.iter().all(Option::is_none));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let text = TWO.replace("\"sigma\": 0.0", "\"sigma\": 0.002");
        let s = scenario(&text);
        let a = run_scenario_with(Execution::Sequential, &s).unwrap();
        let b = run_scenario_with(Execution::Parallel, &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, run_scenario(&s).unwrap());
    }

    #[test]
    fn push_lands_on_its_control_step() {
        let text = TWO.replace(
            "\"noise\"",
            r#""disturbances": [{"time": 1.0, "robot": 1, "force": [0.0, 0.0, 0.3]}], "noise""#,
        );
        let log = run_scenario(&scenario(&text)).unwrap();
        let at = |time: f64, robot: usize| {
            log.samples
                .iter()
                .find(|s| (s.time - time).abs() < 1e-9 && s.robot == robot)
                .unwrap()
                .state
                .velocity
                .z
        };
        assert!(at(1.0, 1) - at(0.99, 1) > 0.09);
        assert!((at(1.0, 0) - at(0.99, 0)).abs() < 0.01);
    }
}
