//! Scenario documents: shipped files, round trips and validation errors.

use std::path::{Path, PathBuf};

use wbteleop::channel::DelayMode;
use wbteleop::teleop::OperatorInput;
use wbteleop_harness::config::{Segment, BUILTIN_MODEL};
use wbteleop_harness::{run_scenario, HarnessError, ScenarioConfig};

fn scenarios() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn parse(text: &str) -> Result<ScenarioConfig, HarnessError> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, text).unwrap();
    ScenarioConfig::load(&path)
}

const MINIMAL: &str = "version = 1\nname = \"m\"\ndt = 0.001\nduration = 0.5\n";

fn config_error(text: &str) -> String {
    match parse(text) {
        Err(HarnessError::Parse { source, .. }) => source.to_string(),
        Err(e) => e.to_string(),
        Ok(_) => panic!("accepted:\n{text}"),
    }
}

#[test]
fn shipped_scenarios_load() {
    let files = scenarios();
    assert!(files.len() >= 9);
    for f in files {
        let c = ScenarioConfig::load(&f).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        assert_eq!(f.file_stem().unwrap().to_str().unwrap(), c.name);
    }
}

#[test]
fn documents_round_trip_through_toml() {
    for f in scenarios() {
        let c = ScenarioConfig::load(&f).unwrap();
        let mut back: ScenarioConfig = toml::from_str(&c.to_toml()).unwrap();
        back.base_dir = c.base_dir.clone();
        assert_eq!(back, c, "{}", f.display());
    }
}

#[test]
fn minimal_document_takes_defaults() {
    let c = parse(MINIMAL).unwrap();
    assert_eq!(c.model, BUILTIN_MODEL);
    assert_eq!(c.ticks(), 500);
    assert!(c.passivity.enabled);
    assert_eq!(c, {
        let mut d = ScenarioConfig::new("m", 0.5);
        d.base_dir = c.base_dir.clone();
        d
    });
}

#[test]
fn invalid_documents_are_rejected_with_a_reason() {
    let cases = [
        (MINIMAL.replace("version = 1", "version = 2"), "schema version"),
        (MINIMAL.replace("0.001", "0.0"), "dt must be positive"),
        (MINIMAL.replace("0.5", "0.5005"), "not a multiple of dt"),
        (format!("{MINIMAL}bogus = 1\n"), "unknown field"),
        (format!("{MINIMAL}model = \"missing.toml\"\n"), "not found"),
        (format!("{MINIMAL}[gains]\nkp_x = {{ rows = 2, cols = 2, data = [1, 0, 0, 1] }}\n"), "gains.kp_x"),
        (
            format!(
                "{MINIMAL}[[timeline]]\nt_start = 0.0\nt_end = 0.3\nns = 0\ntwist = [0,0,0,0,0,0]\n\
                 [[timeline]]\nt_start = 0.2\nt_end = 0.4\nns = 1\ntwist = [0,0,0,0,0,0]\n"
            ),
            "overlap",
        ),
        (format!("{MINIMAL}[[timeline]]\nt_start = 0.0\nt_end = 0.3\nns = 0\n"), "exactly one of twist or force"),
        (format!("{MINIMAL}[[timeline]]\nt_start = 0.0\nt_end = 0.3\nns = 2\ntwist = [0,0,0,0,0,0]\n"), "ns must be 0 or 1"),
        (format!("{MINIMAL}[end_effector_motion]\namplitude = [0,0,0.01,0,0,0]\nfrequency_hz = 0.0\n"), "positive frequency"),
        (format!("{MINIMAL}[serve]\naddr = \"x\"\ndecimation = 0\nrealtime_factor = 1.0\n"), "decimation"),
        (format!("{MINIMAL}[channel.forward]\nmode = \"lossy\"\nbase_ms = 10.0\nloss = 1.5\n"), "loss"),
    ];
    for (text, needle) in cases {
        let e = config_error(&text);
        assert!(e.contains(needle), "expected `{needle}` in `{e}`");
    }
}

#[test]
fn partial_gains_keep_the_other_defaults() {
    let c = parse(&format!("{MINIMAL}[gains]\nwall_scale = 0.5\n")).unwrap();
    let g = c.gains.to_gains().unwrap();
    assert_eq!(g.wall_scale, 0.5);
    assert_eq!(g.kp_x, wbteleop::wbc::ControllerGains::default().kp_x);
}

#[test]
fn wrong_gain_dimensions_are_named() {
    let mut c = ScenarioConfig::new("g", 0.1);
    c.gains.kd_x.rows = 3;
    let e = c.validate().unwrap_err().to_string();
    assert!(e.contains("gains.kd_x"), "{e}");
}

#[test]
fn model_file_matches_builtin_model() {
    let mut builtin = ScenarioConfig::new("b", 0.2);
    builtin.timeline.push(Segment {
        t_start: 0.0,
        t_end: 0.2,
        ns: 0,
        twist: Some([0.05, 0.0, 0.02, 0.0, 0.1, 0.0]),
        force: None,
    });
    let mut file = builtin.clone();
    file.model = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/models/aerial_manipulator.toml")
        .display()
        .to_string();
    let (a, b) = (run_scenario(&builtin).unwrap(), run_scenario(&file).unwrap());
    let last = |e: &wbteleop_harness::Experiment| e.logs.last().unwrap().ee_pose;
    assert!((last(&a).position - last(&b).position).norm() < 1e-12);
}

#[test]
fn timeline_boundaries_land_on_ticks() {
    let mut c = ScenarioConfig::new("t", 1.0);
    c.timeline.push(Segment {
        t_start: 0.1,
        t_end: 0.2,
        ns: 1,
        twist: Some([0.1, 0.0, 0.0, 0.0, 0.0, 0.0]),
        force: None,
    });
    let active = |t: f64| c.operator_at(t, false);
    assert!(matches!(active(0.099).0, OperatorInput::Twist(v) if v.linear.norm() == 0.0));
    // 0.1 computed as 100 · 0.001 is 0.10000000000000001 or just below
    for t in [100.0 * 0.001, 0.1 - 1e-12, 199.0 * 0.001] {
        let (input, ns) = active(t);
        assert!(ns, "t = {t}");
        assert!(matches!(input, OperatorInput::Twist(v) if v.linear.x == 0.1), "t = {t}");
    }
    // after the segment the hand rests and the flag holds
    let (input, ns) = c.operator_at(0.2, true);
    assert!(ns);
    assert!(matches!(input, OperatorInput::Twist(v) if v.linear.norm() == 0.0));
}

#[test]
fn round_trip_delay_splits_evenly() {
    let mut c = ScenarioConfig::new("d", 0.1);
    c.channel.backward.mode = DelayMode::Variable;
    c.channel.backward.jitter_ms = 5.0;
    c.set_round_trip_delay(300.0);
    assert_eq!(c.channel.forward.base_ms, 150.0);
    assert_eq!(c.channel.backward.base_ms, 150.0);
    assert_eq!(c.channel.backward.jitter_ms, 5.0);
    c.validate().unwrap();
}

#[test]
fn readme_example_is_valid() {
    let readme = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    let start = readme.find("```toml\n").unwrap() + "```toml\n".len();
    let end = start + readme[start..].find("```").unwrap();
    let c = parse(&readme[start..end]).unwrap();
    assert_eq!(c.channel.forward.loss, 0.05);
    assert_eq!(c.passivity.drift_gain, Some(5.0));
}
