//! Result files. Column sets are fixed; numbers use the shortest decimal
//! representation that round-trips, so equal runs give equal bytes.
//!
//! `trajectory.csv`: `tick, time, ns, routing`, then poses as
//! `<name>_{x,y,z,qw,qx,qy,qz}` for `master, hand, base, base_des, ee,
//! ee_des` (world frame, quaternion scalar first), then twists as
//! `<name>_{vx,vy,vz,wx,wy,wz}` for `v_m, v_sd` and wrenches as
//! `<name>_{fx,fy,fz,tx,ty,tz}` for `f_x, f_b, f_s, f_m` (body frames).
//!
//! `audit.csv`: per-tick powers (W), cumulative energies (J) per port and
//! task, passivity values before (`obs_`) and after (`w_`) the controllers,
//! controller gains, decoupling residual and sample ages (ticks).
//!
//! `channel.csv`: per-sample fate when channel tracing is on.
//! `events.csv`: warnings and task switches. `summary.json`: the report.
//! `long.csv` (long format only): `tick, time, panel, series, value`.

use std::path::{Path, PathBuf};

use csv::Writer;
use wbteleop::geometry::Pose;
use wbteleop::teleop::TickLog;

use crate::error::HarnessError;
use crate::experiment::Experiment;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    /// Wide per-tick tables.
    #[default]
    Csv,
    /// Wide tables plus a long-format table for plotting.
    Long,
}

const POSES: [&str; 6] = ["master", "hand", "base", "base_des", "ee", "ee_des"];
const TWISTS: [&str; 2] = ["v_m", "v_sd"];
const WRENCHES: [&str; 4] = ["f_x", "f_b", "f_s", "f_m"];

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn pose_cells(p: &Pose) -> [f64; 7] {
    let q = p.rotation.to_quaternion();
    [
        p.position.x,
        p.position.y,
        p.position.z,
        q.eta,
        q.eps.x,
        q.eps.y,
        q.eps.z,
    ]
}

pub fn trajectory_header() -> Vec<String> {
    let mut h: Vec<String> = ["tick", "time", "ns", "routing"].map(String::from).to_vec();
    for p in POSES {
        h.extend(["x", "y", "z", "qw", "qx", "qy", "qz"].map(|c| format!("{p}_{c}")));
    }
    for t in TWISTS {
        h.extend(["vx", "vy", "vz", "wx", "wy", "wz"].map(|c| format!("{t}_{c}")));
    }
    for w in WRENCHES {
        h.extend(["fx", "fy", "fz", "tx", "ty", "tz"].map(|c| format!("{w}_{c}")));
    }
    h
}

pub fn trajectory_row(l: &TickLog) -> Vec<String> {
    let mut r = vec![
        l.tick.to_string(),
        fmt(l.time),
        u8::from(l.ns).to_string(),
        l.routing.suffix().to_string(),
    ];
    for p in [&l.master_pose, &l.hand_pose, &l.base_pose, &l.b_des, &l.ee_pose, &l.x_des] {
        r.extend(pose_cells(p).map(fmt));
    }
    for t in [&l.v_m, &l.v_sd] {
        r.extend(t.to_vector().iter().map(|x| fmt(*x)));
    }
    for w in [&l.f_x, &l.f_b, &l.f_s, &l.f_m] {
        r.extend(w.to_vector().iter().map(|x| fmt(*x)));
    }
    r
}

pub fn audit_header() -> Vec<String> {
    let mut h: Vec<String> = ["tick", "time", "ns", "routing", "p_master", "p_slave", "p_drift"]
        .map(String::from)
        .to_vec();
    for port in ["master", "slave"] {
        for task in ["x", "b"] {
            h.extend(["in", "out", "dissipated"].map(|c| format!("{port}_{task}_{c}")));
        }
    }
    for prefix in ["obs", "w"] {
        for port in ["master", "slave"] {
            h.extend(["x", "b"].map(|t| format!("{prefix}_{port}_{t}")));
        }
    }
    h.extend(["d_f", "d_v", "decoupling", "forward_age", "backward_age"].map(String::from));
    h
}

pub fn audit_row(l: &TickLog) -> Vec<String> {
    let mut r = vec![
        l.tick.to_string(),
        fmt(l.time),
        u8::from(l.ns).to_string(),
        l.routing.suffix().to_string(),
        fmt(l.p_master),
        fmt(l.p_slave),
        fmt(l.p_drift),
    ];
    for port in [&l.ledger.master, &l.ledger.slave] {
        for e in &port.tasks {
            r.extend([e.input, e.output, e.dissipated].map(fmt));
        }
    }
    for port in [&l.ledger.master, &l.ledger.slave] {
        r.extend(port.tasks.iter().map(|e| fmt(e.observed)));
    }
    for w in [l.w_master, l.w_slave] {
        r.extend(w.map(fmt));
    }
    let age = |a: Option<u64>| a.map_or_else(String::new, |a| a.to_string());
    r.extend([fmt(l.d_f), fmt(l.d_v), fmt(l.decoupling), age(l.forward_age), age(l.backward_age)]);
    r
}

fn long_rows(l: &TickLog) -> Vec<[String; 5]> {
    let mut rows = Vec::new();
    let mut push = |panel: &str, series: String, v: f64| {
        rows.push([l.tick.to_string(), fmt(l.time), panel.to_string(), series, fmt(v)]);
    };
    let axes = ["x", "y", "z"];
    for (i, a) in axes.iter().enumerate() {
        push("position", format!("master_{a}"), l.master_pose.position[i]);
        push("position", format!("base_{a}"), l.base_pose.position[i]);
        push("position", format!("base_des_{a}"), l.b_des.position[i]);
        push("position", format!("ee_{a}"), l.ee_pose.position[i]);
        push("position", format!("ee_des_{a}"), l.x_des.position[i]);
        push("velocity", format!("v_m_{a}"), l.v_m.linear[i]);
        push("velocity", format!("v_sd_{a}"), l.v_sd.linear[i]);
        push("force", format!("f_m_{a}"), l.f_m.force[i]);
        push("force", format!("f_x_{a}"), l.f_x.force[i]);
        push("force", format!("f_b_{a}"), l.f_b.force[i]);
    }
    push("passivity", "w_master_x".into(), l.w_master[0]);
    push("passivity", "w_master_b".into(), l.w_master[1]);
    push("passivity", "w_slave_x".into(), l.w_slave[0]);
    push("passivity", "w_slave_b".into(), l.w_slave[1]);
    push("switch", "ns".into(), f64::from(u8::from(l.ns)));
    rows
}

struct Table {
    path: PathBuf,
    writer: Writer<std::fs::File>,
}

impl Table {
    fn create(path: PathBuf, header: &[String]) -> Result<Table, HarnessError> {
        let writer = Writer::from_path(&path).map_err(|source| HarnessError::Csv {
            path: path.clone(),
            source,
        })?;
        let mut t = Table { path, writer };
        t.row(header)?;
        Ok(t)
    }

    fn row<S: AsRef<[u8]>>(&mut self, cells: &[S]) -> Result<(), HarnessError> {
        self.writer.write_record(cells).map_err(|source| HarnessError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    fn close(mut self) -> Result<PathBuf, HarnessError> {
        self.writer.flush().map_err(HarnessError::io(&self.path))?;
        Ok(self.path)
    }
}

/// Writes all result files into `dir` (created if needed) and returns
/// their paths.
pub fn emit_report(exp: &Experiment, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let mut files = Vec::new();

    let mut t = Table::create(dir.join("trajectory.csv"), &trajectory_header())?;
    for l in &exp.logs {
        t.row(&trajectory_row(l))?;
    }
    files.push(t.close()?);

    let mut t = Table::create(dir.join("audit.csv"), &audit_header())?;
    for l in &exp.logs {
        t.row(&audit_row(l))?;
    }
    files.push(t.close()?);

    let header = ["tick", "direction", "send_index", "delay_ms", "dropped"].map(String::from);
    let mut t = Table::create(dir.join("channel.csv"), &header)?;
    for r in &exp.channel_trace {
        t.row(&[
            r.tick.to_string(),
            format!("{:?}", r.direction).to_lowercase(),
            r.send_index.to_string(),
            r.delay_ms.map_or_else(String::new, fmt),
            r.dropped.to_string(),
        ])?;
    }
    files.push(t.close()?);

    let header = ["tick", "kind", "message"].map(String::from);
    let mut t = Table::create(dir.join("events.csv"), &header)?;
    for e in exp.events() {
        let kind = serde_json::to_value(e.kind).map_err(|e| HarnessError::Config(e.to_string()))?;
        t.row(&[e.tick.to_string(), kind.as_str().unwrap_or_default().to_string(), e.message.clone()])?;
    }
    files.push(t.close()?);

    if format == ReportFormat::Long {
        let header = ["tick", "time", "panel", "series", "value"].map(String::from);
        let mut t = Table::create(dir.join("long.csv"), &header)?;
        for l in &exp.logs {
            for r in long_rows(l) {
                t.row(&r)?;
            }
        }
        files.push(t.close()?);
    }

    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&exp.report).expect("report serializes");
    std::fs::write(&path, json + "\n").map_err(HarnessError::io(&path))?;
    files.push(path);
    Ok(files)
}
