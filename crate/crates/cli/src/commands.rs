use crate::{BadInput, Cli, Command};
use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use uwloc_core::optics::io::{load_calibration_csv, read_stack, write_calibration_csv, write_stack, FormatError};
use uwloc_core::optics::{
    depth_map, fit_ranging_model, simulate_focus_stack, synthetic_calibration_samples, DefocusScene, DepthCell,
    DofParams, GrayImage, OpticsError, RangingFit, RangingModel, ThinLens,
};
use uwloc_core::sim::{
    read_report, run_scenario, write_logs, write_report_files, Checks, Disturbance, Impulse, RecoveryCheck, Report,
    ReplaySpec, RobotSpec, RunSpec, Scenario, SimError, World, SUMMARY_FILE, TRAJECTORY_FILE,
};

const DEFAULT_OUT: &str = "uwloc-out";

/// Reference ranging constants used when no model file is given.
const REFERENCE_MODEL: (f64, f64, f64) = (0.3922, 0.7431, 0.7577);

/// Returns whether every check passed.
pub fn dispatch(cli: &Cli) -> Result<bool> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    match &cli.command {
        Command::Calibrate {
            samples,
            synthetic,
            noise,
            min_r_squared,
        } => calibrate(cli, &out, samples.as_deref(), *synthetic, *noise, *min_r_squared),
        Command::Depthmap {
            stack,
            model,
            block,
            synthetic,
        } => depthmap(cli, &out, stack.as_deref(), model.as_deref(), *block, *synthetic),
        Command::ProtocolRun { spec } => protocol_run(cli, &out, spec),
        Command::Hover {
            depth,
            start_depth,
            seconds,
            push_roll,
            push_time,
        } => hover(cli, &out, *depth, start_depth.unwrap_or(*depth), *seconds, *push_roll, *push_time),
        Command::Scenario { file } => scenario(cli, &out, file),
        Command::Report { dir } => report(cli, cli.out.as_deref().unwrap_or(dir), dir),
    }
}

fn bad(e: impl std::fmt::Display) -> anyhow::Error {
    BadInput(e.to_string()).into()
}

/// Input problems exit with 2, everything else with 1.
fn classify_sim(e: SimError) -> anyhow::Error {
    match e {
        SimError::Schema { .. } | SimError::Config(_) | SimError::MissingLog(_) | SimError::Log { .. } => bad(e),
        SimError::Io { ref path, .. } if !path.exists() => bad(e),
        other => other.into(),
    }
}

fn classify_optics(e: OpticsError) -> anyhow::Error {
    match e {
        OpticsError::TooFewSamples { .. } | OpticsError::DuplicatePositions | OpticsError::InvalidParameter(_) => bad(e),
        other => other.into(),
    }
}

fn classify_format(e: FormatError) -> anyhow::Error {
    match e {
        FormatError::Optics(o) => classify_optics(o),
        other => bad(other),
    }
}

fn reference_model() -> RangingModel {
    let (k, f, c) = REFERENCE_MODEL;
    RangingModel::new(k, f, c).expect("reference constants are valid")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn calibrate(
    cli: &Cli,
    out: &Path,
    samples: Option<&Path>,
    synthetic: bool,
    noise: f64,
    min_r_squared: Option<f64>,
) -> Result<bool> {
    let data = match (samples, synthetic) {
        (Some(path), false) => load_calibration_csv(path).map_err(classify_format)?,
        (None, true) => {
            let depths: Vec<f64> = (1..=12).map(|k| 10.0 * k as f64).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
            let data =
                synthetic_calibration_samples(&reference_model(), &depths, noise, &mut rng).map_err(classify_optics)?;
            create_dir(out)?;
            let path = out.join("samples.csv");
            write_calibration_csv(fs::File::create(&path)?, &data).with_context(|| format!("writing {}", path.display()))?;
            data
        }
        _ => return Err(bad("give either a samples CSV or --synthetic")),
    };
    let fit = match fit_ranging_model(&data) {
        Ok(fit) => fit,
        Err(OpticsError::FitFailed { best, sse, iterations }) => {
            eprintln!("fit did not converge after {iterations} iterations (sse {sse}); best model {best:?}");
            return Ok(false);
        }
        Err(e) => return Err(classify_optics(e)),
    };
    create_dir(out)?;
    let path = out.join("model.json");
    fs::write(&path, serde_json::to_string_pretty(&fit)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    if !cli.quiet {
        println!("samples     {}", data.len());
        println!("kappa       {:.6}", fit.model.kappa);
        println!("focal       {:.6}", fit.model.focal);
        println!("offset      {:.6}", fit.model.offset);
        println!("r_squared   {:.6}", fit.r_squared);
        println!("rmse        {:.6}", fit.rmse);
        println!("iterations  {}", fit.iterations);
        println!("model       {}", path.display());
    }
    Ok(min_r_squared.is_none_or(|m| fit.r_squared >= m))
}

fn load_model(path: &Path) -> Result<RangingModel> {
    let text = fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let model = serde_json::from_str::<RangingFit>(&text)
        .map(|f| f.model)
        .or_else(|_| serde_json::from_str::<RangingModel>(&text))
        .map_err(|e| bad(format!("{}: not a ranging model: {e}", path.display())))?;
    RangingModel::new(model.kappa, model.focal, model.offset).map_err(bad)
}

fn depthmap(
    cli: &Cli,
    out: &Path,
    stack_dir: Option<&Path>,
    model_path: Option<&Path>,
    block: usize,
    synthetic: Option<f64>,
) -> Result<bool> {
    if block < 3 {
        return Err(bad(format!("block size must be at least 3, got {block}")));
    }
    let model = match model_path {
        Some(p) => load_model(p)?,
        None => reference_model(),
    };
    let stack = match (stack_dir, synthetic) {
        (Some(dir), None) => read_stack(dir).map_err(classify_format)?,
        (None, Some(u)) => {
            let near = (u * 0.5).max(model.offset + model.focal * 1.5);
            let far = u * 2.0;
            let lo = model.motor_position(far).map_err(bad)?;
            let hi = model.motor_position(near).map_err(bad)?;
            let positions: Vec<f64> = (0..15).map(|k| lo + (hi - lo) * k as f64 / 14.0).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
            let texture = GrayImage::from_fn(96, 64, |_, _| rng.random::<f64>())?;
            let scene = DefocusScene::uniform(texture, u).map_err(bad)?;
            let stack = simulate_focus_stack(
                &scene,
                ThinLens::new(model.focal)?,
                DofParams::new(2.0, 1e-4)?,
                &model,
                &positions,
                600.0,
            )?;
            write_stack(&out.join("stack"), &stack)?;
            stack
        }
        _ => return Err(bad("give either a stack directory or --synthetic")),
    };
    let map = depth_map(&stack, &model, block);
    create_dir(out)?;
    let mut text = String::from("col,row,x0,y0,width,height,status,depth_cm\n");
    let (mut ranged, mut flat, mut unresolved) = (0, 0, 0);
    for row in 0..map.rows {
        for col in 0..map.cols {
            let r = map.region(col, row, stack.width(), stack.height());
            let (status, depth) = match map.get(col, row) {
                DepthCell::Depth(u) => {
                    ranged += 1;
                    ("depth", u.to_string())
                }
                DepthCell::Flat => {
                    flat += 1;
                    ("flat", String::new())
                }
                DepthCell::Unresolved => {
                    unresolved += 1;
                    ("unresolved", String::new())
                }
            };
            text.push_str(&format!("{col},{row},{},{},{},{},{status},{depth}\n", r.x0, r.y0, r.w, r.h));
        }
    }
    let path = out.join("depthmap.csv");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    if !cli.quiet {
        println!("frames      {}", stack.len());
        println!("cells       {} x {}", map.cols, map.rows);
        println!("ranged      {ranged}");
        println!("flat        {flat}");
        println!("unresolved  {unresolved}");
        let depths: Vec<f64> = map.cells.iter().filter_map(|c| c.depth()).collect();
        if !depths.is_empty() {
            let mean = depths.iter().sum::<f64>() / depths.len() as f64;
            println!("mean depth  {mean:.3} cm");
        }
        println!("map         {}", path.display());
    }
    Ok(true)
}

fn protocol_run(cli: &Cli, out: &Path, spec_path: &Path) -> Result<bool> {
    let (mut spec, replay) = ReplaySpec::load(spec_path).map_err(classify_sim)?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let outcome = spec.execute(replay, cli.rounds).map_err(classify_sim)?;
    spec.write_outputs(out, &outcome).map_err(classify_sim)?;
    if !cli.quiet {
        let last = outcome.trajectory.last();
        println!("rounds      {}", outcome.trajectory.states.len() - 1);
        println!("robots      {}", last.estimates.len());
        for (i, j) in outcome.trajectory.join_rounds().iter().enumerate() {
            println!("join_round.{i}  {}", j.map_or("none".into(), |j| j.to_string()));
        }
        if let Some(e) = outcome.final_max_error {
            println!("final_max_error  {e:.6}");
        }
        println!("trajectory  {}", out.join(TRAJECTORY_FILE).display());
        if spec.target.is_some() {
            println!("summary     {}", out.join(SUMMARY_FILE).display());
        }
        if spec.max_final_error.is_some() {
            println!("{} max_final_error", if outcome.passed { "PASS" } else { "FAIL" });
        }
    }
    Ok(outcome.passed)
}

fn print_report(report: &Report) {
    for (k, v) in report.metrics() {
        println!("{k:<32} {v}");
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn run_and_log(cli: &Cli, out: &Path, scenario: &Scenario) -> Result<bool> {
    let log = run_scenario(scenario).map_err(classify_sim)?;
    let report = write_logs(out, scenario, &log).map_err(classify_sim)?;
    if !cli.quiet {
        print_report(&report);
        println!("logs in {}", out.display());
    }
    Ok(report.passed())
}

fn scenario(cli: &Cli, out: &Path, file: &Path) -> Result<bool> {
    let mut s = Scenario::load(file).map_err(classify_sim)?;
    if let Some(seed) = cli.seed {
        s.noise.seed = seed;
    }
    if let Some(rounds) = cli.rounds {
        s.run.rounds = rounds;
    }
    run_and_log(cli, out, &s)
}

fn hover(
    cli: &Cli,
    out: &Path,
    depth: f64,
    start_depth: f64,
    seconds: f64,
    push_roll: Option<f64>,
    push_time: f64,
) -> Result<bool> {
    let world = World {
        tank: [1.5, 1.2, 0.8],
        surface: 0.7,
        target: [0.75, 0.6, 0.03],
        static_target: true,
        target_velocity: [0.0; 3],
    };
    if !(seconds > 0.0) {
        return Err(bad(format!("--seconds must be positive, got {seconds}")));
    }
    let robot = RobotSpec {
        position: [0.75, 0.6, world.surface - start_depth],
        attitude: [0.0; 3],
        target_depth: depth,
        setpoints: Vec::new(),
        params: Default::default(),
        gains: Default::default(),
        pressure_noise: 0.001,
        gimbal: Default::default(),
        camera: Default::default(),
    };
    let run = RunSpec {
        rounds: cli.rounds.unwrap_or((seconds / 0.5).ceil() as u64),
        round_period: 0.5,
        control_period: 0.01,
        physics_step: 0.001,
        checks: Checks {
            recovery: Some(RecoveryCheck {
                robot: 0,
                depth_band: 0.005,
                attitude_band_deg: 1.0,
                hold: 1.0,
                max_time: 2.0,
            }),
            ..Checks::default()
        },
    };
    let disturbances = push_roll
        .map(|tau| Disturbance {
            time: push_time,
            robot: 0,
            impulse: Impulse {
                force: [0.0; 3],
                torque: [tau, 0.0, 0.0],
            },
        })
        .into_iter()
        .collect();
    let mut s = Scenario {
        world,
        robots: vec![robot],
        topology: Default::default(),
        protocol: Default::default(),
        noise: Default::default(),
        disturbances,
        run,
    };
    s.noise.seed = cli.seed.unwrap_or(0);
    s.validate().map_err(classify_sim)?;
    run_and_log(cli, out, &s)
}

fn report(cli: &Cli, out: &Path, dir: &Path) -> Result<bool> {
    let (_, report) = read_report(dir).map_err(classify_sim)?;
    if out != dir {
        create_dir(out)?;
    }
    write_report_files(out, &report).map_err(classify_sim)?;
    if !cli.quiet {
        print_report(&report);
    }
    Ok(report.passed())
}
