//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs the shipped scenarios headless.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use wbteleop::geometry::{exp_se3, log_se3, Pose, Rotation, Twist};
use wbteleop::robot::{Frame, RobotModel, RobotState};
use wbteleop::tdpa::Task;
use wbteleop::wbc::{decompose, WbcSettings};
use wbteleop_harness::{emit_report, run_scenario, Experiment, ReportFormat, ScenarioConfig};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);

const W_FLOOR: f64 = -1e-12;
const SCENARIO_BUDGET_S: f64 = 60.0;
const SUITE_BUDGET_S: f64 = 300.0;

fn scenario(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"));
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(config: &ScenarioConfig) -> Result<Experiment, String> {
    run_scenario(config).map_err(|e| format!("{}: {e}", config.name))
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Passivity under delay and loss.
fn passivity_under_delay() -> Outcome {
    let mut details = Vec::new();
    for name in ["whole_body_0ms", "whole_body_100ms", "whole_body_300ms", "whole_body_300ms_loss5", "moving_wall_300ms"] {
        let exp = run(&scenario(name))?;
        let r = &exp.report;
        let worst = exp
            .logs
            .iter()
            .flat_map(|l| l.w_master.into_iter().chain(l.w_slave))
            .fold(f64::INFINITY, f64::min);
        check(worst >= W_FLOOR, || format!("{name}: W reached {worst:e} J"))?;
        check(r.runtime_s <= SCENARIO_BUDGET_S, || format!("{name}: {:.1} s runtime", r.runtime_s))?;
        check(r.events.get("task_switch") == Some(&1), || format!("{name}: expected one task switch"))?;
        details.push(format!("{name} min W {worst:.1e} J in {:.1} s", r.runtime_s));
    }
    Ok(details.join("; "))
}

/// Without the controllers the delayed loop generates energy; with them it
/// does not, and they have to work for it.
fn instability_control() -> Outcome {
    let off = run(&scenario("ee_free_300ms_no_pc"))?;
    let on_config = scenario("ee_free_300ms");
    let on = run(&on_config)?;
    let w_off = off.report.min_w.min();
    check(w_off < -1e-3, || format!("controllers off: min W {w_off:e} J, expected < -1e-3"))?;
    let w_on = on.report.min_w.min();
    check(w_on >= W_FLOOR, || format!("controllers on: min W {w_on:e} J"))?;
    let obs_on = on.report.min_w_observed.min();
    check(obs_on < -1e-3, || format!("controllers on never needed to act (observed {obs_on:e} J)"))?;
    let dissipated: f64 = [&on.report.energy.master, &on.report.energy.slave]
        .iter()
        .flat_map(|p| p.tasks.iter().map(|e| e.dissipated))
        .sum();
    // the same script with the controllers on, over the window where the
    // uncontrolled loop is still finite
    let same_window = on.logs.iter().take(off.logs.len()).flat_map(|l| l.w_master.into_iter().chain(l.w_slave));
    let w_on_window = same_window.fold(f64::INFINITY, f64::min);
    check(w_on_window >= W_FLOOR, || format!("controllers on: W {w_on_window:e} J in the shared window"))?;
    Ok(format!(
        "off: min W {w_off:.3} J after {:.1} s; on: min W {w_on:.1e} J over {:.1} s with observer minimum {obs_on:.3} J and {dissipated:.3} J dissipated",
        off.config.duration, on_config.duration
    ))
}

/// Base teleoperation leaves the end effector where it was.
fn null_space_decoupling(wall: &Experiment) -> Outcome {
    let base_ticks = wall.logs.iter().filter(|l| l.routing == Task::Base).count();
    check(base_ticks * 10 >= wall.logs.len() * 9, || format!("only {base_ticks} ticks in base teleoperation"))?;
    let d = wall.report.max_ee_deviation;
    check(d.position <= 1e-3, || format!("end-effector position deviation {:e} m", d.position))?;
    check(d.orientation <= 1e-3, || format!("end-effector orientation deviation {:e} rad", d.orientation))?;
    let worst = wall.logs.iter().map(|l| l.decoupling).fold(0.0, f64::max);
    check(worst <= 1e-8, || format!("‖J M⁻¹ τ_n‖ reached {worst:e}"))?;
    Ok(format!(
        "{base_ticks} ticks: deviation {:.1e} m / {:.1e} rad, projection residual {worst:.1e}",
        d.position, d.orientation
    ))
}

/// Reach limit along +z: the base stalls, the master keeps going and the
/// felt force grows monotonically with the lead.
fn null_space_wall(wall: &Experiment) -> Outcome {
    let w = wall.report.wall.as_ref().ok_or("wall_no_delay has no wall analysis")?;
    check(w.ratio >= 10.0, || {
        format!("contact/free force ratio {:.2} ({:.1} N vs {:.1} N)", w.ratio, w.contact_force, w.free_force)
    })?;
    check(w.force_strictly_increasing, || "force is not strictly increasing in the contact window".into())?;
    check(w.penetration_strictly_increasing, || "penetration is not strictly increasing in the contact window".into())?;
    // saturation: over the last two seconds the base barely moves while
    // the master keeps going
    let end = wall.logs.last().ok_or("empty run")?;
    let start = wall
        .logs
        .iter()
        .find(|l| l.time >= end.time - 2.0)
        .ok_or("run shorter than two seconds")?;
    let ray = Vector3::z();
    let master = (end.master_pose.position - start.master_pose.position).dot(&ray);
    let base = (end.base_pose.position - start.base_pose.position).dot(&ray);
    check(master > 0.1 && base < 0.1 * master, || {
        format!("last 2 s: master advanced {master:.3} m, base {base:.3} m")
    })?;
    Ok(format!(
        "free {:.1} N, contact {:.1} N (×{:.1}), {} samples monotone; last 2 s master +{master:.3} m, base +{base:.4} m",
        w.free_force,
        w.contact_force,
        w.ratio,
        w.samples.len()
    ))
}

/// Removes a quadratic trend, applies a Hann window and returns the
/// one-sided magnitude spectrum with its bin width.
fn spectrum(t: &[f64], x: &[f64], dt: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let t0 = t[n / 2];
    let a = DMatrix::from_fn(n, 3, |i, j| (t[i] - t0).powi(j as i32));
    let y = DVector::from_column_slice(x);
    let coef = a.clone().svd(true, true).solve(&y, 1e-12).expect("least squares");
    let resid = y - a * coef;
    let mut buf: Vec<Complex<f64>> = resid
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            Complex::new(r * hann, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (buf[..n / 2].iter().map(|c| c.norm()).collect(), 1.0 / (n as f64 * dt))
}

fn contact_force_spectrum(exp: &Experiment) -> Result<(Vec<f64>, f64), String> {
    let w = exp.config.analysis.wall.as_ref().ok_or("no contact window")?;
    let dt = exp.config.dt;
    let (t, f): (Vec<f64>, Vec<f64>) = exp
        .logs
        .iter()
        .filter(|l| l.time + 0.5 * dt >= w.contact[0] && l.time + 0.5 * dt < w.contact[1])
        .map(|l| (l.time, l.f_m.force.norm()))
        .unzip();
    check(t.len() > 1000, || "contact window too short".into())?;
    Ok(spectrum(&t, &f, dt))
}

/// The reach limit oscillates with the end effector; the operator feels it
/// and the loop stays passive.
fn moving_wall() -> Outcome {
    let config = scenario("moving_wall_300ms");
    let motion = config.end_effector_motion.clone().ok_or("moving_wall_300ms has no end-effector motion")?;
    let moving = run(&config)?;
    let mut still_config = config.clone();
    still_config.end_effector_motion = None;
    let still = run(&still_config)?;

    let w = moving.report.min_w.min();
    check(w >= W_FLOOR, || format!("min W {w:e} J"))?;
    let (mag, df) = contact_force_spectrum(&moving)?;
    let (still_mag, _) = contact_force_spectrum(&still)?;
    let lo = (0.5 / df).ceil() as usize;
    let peak = (lo..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    let f_peak = peak as f64 * df;
    check((f_peak - motion.frequency_hz).abs() <= df, || {
        format!("force spectrum peaks at {f_peak:.3} Hz, motion at {} Hz", motion.frequency_hz)
    })?;
    let bin = (motion.frequency_hz / df).round() as usize;
    let contrast = mag[bin] / still_mag[bin];
    check(contrast >= 10.0, || format!("only ×{contrast:.1} over the run without motion at {} Hz", motion.frequency_hz))?;
    Ok(format!(
        "peak at {f_peak:.3} Hz (motion {} Hz, bin {df:.3} Hz), ×{contrast:.0} over the still wall; min W {w:.1e} J",
        motion.frequency_hz
    ))
}

fn random_state(model: &RobotModel, rng: &mut ChaCha8Rng) -> RobotState {
    let base = Pose::new(
        Rotation::from_rpy(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-3.0..3.0)),
        Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
    );
    let joints = DVector::from_fn(model.links.len(), |_, _| rng.gen_range(-2.5..2.5));
    let mut s = RobotState::at_rest(base, joints);
    s.velocity = DVector::from_fn(model.dof(), |_, _| rng.gen_range(-1.0..1.0));
    s
}

/// Dynamics and controller identities on random states, plus energy audits.
fn unit_invariants() -> Outcome {
    let model = RobotModel::aerial_manipulator();
    let settings = WbcSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 7];
    for _ in 0..50 {
        let s = random_state(&model, &mut rng);
        let td = decompose(&model, &s, None, &settings).map_err(|e| e.to_string())?;
        let r = td.null_dim();
        worst[0] = worst[0].max((&td.j * td.z.transpose()).amax());
        worst[1] = worst[1].max((&td.n * td.z.transpose() - DMatrix::identity(r, r)).amax());
        worst[2] = worst[2].max(td.lambda.view((0, 6), (6, r)).norm() / td.lambda.norm());

        let dq = model.dynamics_quantities(&s).map_err(|e| e.to_string())?;
        let m = &dq.mass;
        check((m - m.transpose()).amax() <= 1e-12 * m.amax(), || "mass matrix not symmetric".into())?;
        check(m.clone().cholesky().is_some(), || "mass matrix not positive definite".into())?;
        let h = 1e-6;
        let mp = model.dynamics_quantities(&s.displaced(&s.velocity, h)).map_err(|e| e.to_string())?.mass;
        let mm = model.dynamics_quantities(&s.displaced(&s.velocity, -h)).map_err(|e| e.to_string())?.mass;
        let n = (mp - mm) / (2.0 * h) - &dq.coriolis * 2.0;
        worst[3] = worst[3].max((&n + n.transpose()).amax());

        // end-effector body twist against a central difference of poses
        let g = model.forward_kinematics(&s, Frame::EndEffector).map_err(|e| e.to_string())?;
        let fd = |h: f64| {
            let gh = model.forward_kinematics(&s.displaced(&s.velocity, h), Frame::EndEffector).unwrap();
            log_se3(&(g.inverse() * gh)).to_vector()
        };
        let v_fd = (fd(h) - fd(-h)) / (2.0 * h);
        let jac = model.body_jacobian(&s, Frame::EndEffector).map_err(|e| e.to_string())?;
        let v = Vector6::from_column_slice((jac * &s.velocity).as_slice());
        worst[4] = worst[4].max((v - v_fd).amax());

        let xi = Vector6::from_fn(|_, _| rng.gen_range(-1.5..1.5));
        let pose = exp_se3(&Twist::from_vector(&xi), 1.0);
        worst[5] = worst[5].max((log_se3(&pose).to_vector() - xi).amax());
        let back = exp_se3(&log_se3(&s.base), 1.0);
        worst[5] = worst[5].max((back.to_homogeneous() - s.base.to_homogeneous()).amax());
    }
    for (i, (name, tol)) in [
        ("J Zᵀ", 1e-9),
        ("N Zᵀ − I", 1e-8),
        ("Λ_xn relative", 1e-8),
        ("Ṁ − 2C symmetric part", 1e-6),
        ("Jacobian vs finite difference", 1e-6),
        ("exp/log round trip", 1e-8),
    ]
    .into_iter()
    .enumerate()
    {
        check(worst[i] <= tol, || format!("{name}: {:e} > {tol:e}", worst[i]))?;
    }

    // unforced swing: no power goes in, so total energy stays put
    let mut s = random_state(&model, &mut rng);
    let energy = |s: &RobotState| model.kinetic_energy(s) + model.potential_energy(s);
    let e0 = energy(&s);
    let mut scale = model.kinetic_energy(&s);
    let zero = DVector::zeros(model.dof());
    for _ in 0..10_000 {
        s = model.step_dynamics(&s, &zero, 1e-4).map_err(|e| e.to_string())?;
        scale = scale.max(model.kinetic_energy(&s));
    }
    let drift = (energy(&s) - e0).abs() / scale;
    check(drift <= 1e-3, || format!("energy drift {drift:e} of peak kinetic energy"))?;

    // channel ledger against the integrated port powers
    let exp = run(&scenario("whole_body_100ms"))?;
    let dt = exp.config.dt;
    let mut audit = 0.0f64;
    for (port, powers) in [
        (&exp.report.energy.master, exp.logs.iter().map(|l| l.p_master).collect::<Vec<_>>()),
        (&exp.report.energy.slave, exp.logs.iter().map(|l| l.p_slave + l.p_drift).collect()),
    ] {
        let input: f64 = powers.iter().filter(|p| **p < 0.0).map(|p| -p * dt).sum();
        let output: f64 = powers.iter().filter(|p| **p > 0.0).map(|p| p * dt).sum();
        let li: f64 = port.tasks.iter().map(|e| e.input).sum();
        let lo: f64 = port.tasks.iter().map(|e| e.output).sum();
        audit = audit.max((li - input).abs() / input.max(1e-9)).max((lo - output).abs() / output.max(1e-9));
    }
    check(audit <= 1e-3, || format!("ledger vs integrated power: relative {audit:e}"))?;
    worst[6] = audit;

    Ok(format!(
        "JZᵀ {:.0e}, NZᵀ−I {:.0e}, Λ_xn {:.0e}, Ṁ−2C {:.0e}, Jacobian {:.0e}, exp/log {:.0e}, energy drift {drift:.0e}, ledger {:.0e}",
        worst[0], worst[1], worst[2], worst[3], worst[4], worst[5], worst[6]
    ))
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    files
}

/// Same configuration and seed, same bytes.
fn determinism() -> Outcome {
    let mut config = scenario("whole_body_300ms_loss5");
    config.output.trace_channel = true;
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for i in 0..2 {
        let dir = root.path().join(format!("run{i}"));
        let exp = run(&config)?;
        emit_report(&exp, &dir, ReportFormat::Long).map_err(|e| e.to_string())?;
        runs.push(dir);
    }
    let (a, b) = (csv_files(&runs[0]), csv_files(&runs[1]));
    check(a.len() == 5 && a.len() == b.len(), || format!("expected 5 tables, got {} and {}", a.len(), b.len()))?;
    let mut bytes = 0;
    for (fa, fb) in a.iter().zip(&b) {
        let (x, y) = (std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap());
        check(x == y, || format!("{} differs between runs", fa.file_name().unwrap().to_string_lossy()))?;
        bytes += x.len();
    }
    let lost = std::fs::read_to_string(runs[0].join("channel.csv")).unwrap().matches(",true").count();
    check(lost > 0, || "lossy scenario dropped nothing".into())?;
    Ok(format!("{} tables, {bytes} bytes identical; {lost} samples dropped by the seeded channel", a.len()))
}

fn main() {
    let started = Instant::now();
    let wall = run(&scenario("wall_no_delay"));
    let criteria: Vec<Criterion> = vec![
        ("1 passivity under delay", Box::new(passivity_under_delay)),
        ("2 instability control", Box::new(instability_control)),
        ("3 null-space decoupling", Box::new(|| null_space_decoupling(wall.as_ref().map_err(Clone::clone)?))),
        ("4 null-space wall", Box::new(|| null_space_wall(wall.as_ref().map_err(Clone::clone)?))),
        ("5 moving wall", Box::new(moving_wall)),
        ("6 unit invariants", Box::new(unit_invariants)),
        ("7 determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, criterion) in &criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(criterion))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1} s): {why}");
            }
        }
    }
    let total = started.elapsed().as_secs_f64();
    if total > SUITE_BUDGET_S {
        failed += 1;
        println!("FAIL suite runtime {total:.1} s exceeds {SUITE_BUDGET_S} s");
    } else {
        println!("suite runtime {total:.1} s (budget {SUITE_BUDGET_S} s)");
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
