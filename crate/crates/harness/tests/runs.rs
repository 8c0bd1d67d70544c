//! Batch runs, result tables and the command line.

use std::path::Path;
use std::process::Command;

use wbteleop::channel::DelayMode;
use wbteleop_harness::config::Segment;
use wbteleop_harness::output::{audit_header, trajectory_header};
use wbteleop_harness::{emit_report, run_scenario, ReportFormat, ScenarioConfig};

fn lossy(seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::new("lossy", 0.5);
    c.seed = seed;
    c.output.trace_channel = true;
    for link in [&mut c.channel.forward, &mut c.channel.backward] {
        link.mode = DelayMode::Lossy;
        link.base_ms = 20.0;
        link.jitter_ms = 5.0;
        link.loss = 0.2;
    }
    c.timeline.push(Segment {
        t_start: 0.0,
        t_end: 0.5,
        ns: 0,
        twist: Some([0.05, 0.0, 0.0, 0.0, 0.0, 0.0]),
        force: None,
    });
    c
}

#[test]
fn empty_run_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let exp = run_scenario(&ScenarioConfig::new("empty", 0.0)).unwrap();
    assert!(exp.logs.is_empty());
    let files = emit_report(&exp, dir.path(), ReportFormat::Long).unwrap();
    assert_eq!(files.len(), 6);
    let first_line = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
    assert_eq!(first_line("trajectory.csv"), trajectory_header().join(",") + "\n");
    assert_eq!(first_line("audit.csv"), audit_header().join(",") + "\n");
    assert_eq!(first_line("channel.csv"), "tick,direction,send_index,delay_ms,dropped\n");
    assert_eq!(first_line("events.csv"), "tick,kind,message\n");
    assert_eq!(first_line("long.csv"), "tick,time,panel,series,value\n");
    let summary: serde_json::Value = serde_json::from_str(&first_line("summary.json")).unwrap();
    assert_eq!(summary["ticks"], 0);
}

#[test]
fn rows_match_headers() {
    let dir = tempfile::tempdir().unwrap();
    let exp = run_scenario(&lossy(1)).unwrap();
    emit_report(&exp, dir.path(), ReportFormat::Csv).unwrap();
    for (file, width) in [("trajectory.csv", trajectory_header().len()), ("audit.csv", audit_header().len())] {
        let mut reader = csv::Reader::from_path(dir.path().join(file)).unwrap();
        let mut rows = 0;
        for r in reader.records() {
            assert_eq!(r.unwrap().len(), width, "{file}");
            rows += 1;
        }
        assert_eq!(rows, 500, "{file}");
    }
}

#[test]
fn seed_selects_the_channel_realization() {
    let trace = |seed| {
        let exp = run_scenario(&lossy(seed)).unwrap();
        exp.channel_trace.iter().map(|r| (r.delay_ms, r.dropped)).collect::<Vec<_>>()
    };
    assert_eq!(trace(4), trace(4));
    assert_ne!(trace(4), trace(5));
}

#[test]
fn summary_reports_the_ledger() {
    let exp = run_scenario(&lossy(2)).unwrap();
    let r = &exp.report;
    assert_eq!(r.ticks, 500);
    assert_eq!(r.energy, exp.logs.last().unwrap().ledger);
    assert!(r.forward.lost > 0 && r.backward.lost > 0);
    assert!(r.min_w.min() >= -1e-12);
    assert!(r.wall.is_none());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wbteleop"))
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
        .display()
        .to_string()
}

#[test]
fn cli_validates_and_runs() {
    let out = cli().args(["validate", &scenario("wall_no_delay")]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "wall_no_delay: ok (12000 ticks)\n");

    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("short.toml");
    std::fs::write(
        &doc,
        "version = 1\nname = \"short\"\ndt = 0.001\nduration = 0.2\n\
         [[timeline]]\nt_start = 0.0\nt_end = 0.2\nns = 1\ntwist = [0, 0, 0.1, 0, 0, 0]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = cli()
        .args(["run", doc.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--delay", "40", "--seed", "9"])
        .args(["--format", "long"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "audit.csv", "channel.csv", "events.csv", "long.csv", "summary.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["ticks"], 200);
    // 20 ms each way: the slave sees nothing for the first 20 ticks
    let audit = std::fs::read_to_string(out_dir.join("audit.csv")).unwrap();
    let row = audit.lines().nth(1).unwrap();
    assert!(row.ends_with(",,"), "ages should be empty before the first arrival: {row}");
}

#[test]
fn cli_reports_errors() {
    let out = cli().args(["validate", "/nonexistent/s.toml"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let out = cli().args(["run", &scenario("session")]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("serve mode"));
}
