//! Running scenarios: the tick driver shared by batch, serve and replay,
//! and the summary report.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use wbteleop::channel::{StreamStats, TraceRow};
use wbteleop::geometry::{pose_error, Pose, Twist};
use wbteleop::tdpa::{EnergyLedger, Task};
use wbteleop::teleop::{Event, OperatorInput, Teleop, TickLog};

use crate::config::{ScenarioConfig, WallWindows};
use crate::error::HarnessError;

/// Live operator command; also the record format of the inbound session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    /// Hand twist in the master frame (m/s, rad/s), held until replaced.
    Twist { linear: [f64; 3], angular: [f64; 3] },
    TaskSwitch { ns: bool },
    GainsScale { wall_scale: f64 },
    /// Client went away: the hand stops (safety hold).
    Disconnect,
}

/// Owns the simulation and the currently held operator input.
pub struct Driver {
    teleop: Teleop,
    input: OperatorInput,
    logs: Vec<TickLog>,
}

impl Driver {
    pub fn new(config: &ScenarioConfig) -> Result<Driver, HarnessError> {
        let model = config.robot_model()?;
        let slave = model.home_state(Pose::identity());
        let teleop = Teleop::initialize(model, slave, config.teleop_config()?)?;
        Ok(Driver {
            teleop,
            input: OperatorInput::default(),
            logs: Vec::new(),
        })
    }

    pub fn teleop(&self) -> &Teleop {
        &self.teleop
    }

    pub fn logs(&self) -> &[TickLog] {
        &self.logs
    }

    pub fn apply(&mut self, command: &Command) -> Result<(), HarnessError> {
        match command {
            Command::Twist { linear, angular } => {
                self.input = OperatorInput::Twist(Twist::body(Vector3::from(*linear), Vector3::from(*angular)));
            }
            Command::TaskSwitch { ns } => self.teleop.set_task_switch(*ns),
            Command::GainsScale { wall_scale } => self.teleop.set_wall_scale(*wall_scale)?,
            Command::Disconnect => self.input = OperatorInput::default(),
        }
        Ok(())
    }

    pub fn set_input(&mut self, input: OperatorInput) {
        self.input = input;
    }

    pub fn step(&mut self) -> Result<&TickLog, HarnessError> {
        let log = self.teleop.tick(&self.input)?;
        self.logs.push(log);
        Ok(self.logs.last().unwrap())
    }

    pub fn finish(self, config: &ScenarioConfig, started: Instant) -> Experiment {
        let report = ExperimentReport::build(config, &self.teleop, &self.logs, started.elapsed().as_secs_f64());
        Experiment {
            config: config.clone(),
            channel_trace: self.teleop.channel_trace(),
            logs: self.logs,
            report,
        }
    }
}

/// Everything a finished run produced.
pub struct Experiment {
    pub config: ScenarioConfig,
    pub report: ExperimentReport,
    pub logs: Vec<TickLog>,
    pub channel_trace: Vec<TraceRow>,
}

impl Experiment {
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.logs.iter().flat_map(|l| l.events.iter())
    }
}

/// Runs the scripted timeline for the full duration.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Experiment, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let mut driver = Driver::new(config)?;
    let mut ns = false;
    for k in 0..config.ticks() {
        let (input, flag) = config.operator_at(k as f64 * config.dt, ns);
        ns = flag;
        driver.teleop.set_task_switch(ns);
        driver.set_input(input);
        driver.step()?;
    }
    Ok(driver.finish(config, started))
}

/// Minimum over the run of the four per-task passivity values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PassivityMinima {
    pub master_x: f64,
    pub master_b: f64,
    pub slave_x: f64,
    pub slave_b: f64,
}

impl PassivityMinima {
    fn new() -> Self {
        PassivityMinima {
            master_x: 0.0,
            master_b: 0.0,
            slave_x: 0.0,
            slave_b: 0.0,
        }
    }

    fn update(&mut self, master: [f64; 2], slave: [f64; 2]) {
        self.master_x = self.master_x.min(master[0]);
        self.master_b = self.master_b.min(master[1]);
        self.slave_x = self.slave_x.min(slave[0]);
        self.slave_b = self.slave_b.min(slave[1]);
    }

    pub fn min(&self) -> f64 {
        self.master_x.min(self.master_b).min(self.slave_x).min(self.slave_b)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Deviation {
    pub position: f64,
    pub orientation: f64,
}

/// Rotation angle of a pose error, from its quaternion.
pub fn rotation_angle(g_des: &Pose, g: &Pose) -> (f64, f64) {
    let (e, q) = pose_error(g_des, g);
    (e.position.norm(), 2.0 * q.eps.norm().atan2(q.eta.abs()))
}

/// Contact characterization along a fixed commanded ray.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WallAnalysis {
    /// Largest ‖F_m‖ (force part) in the free-motion window.
    pub free_force: f64,
    /// Largest ‖F_m‖ in the contact window.
    pub contact_force: f64,
    pub ratio: f64,
    /// Progress along the ray across the contact window.
    pub master_progress: f64,
    pub base_progress: f64,
    /// 50 Hz samples of (time, penetration, ‖F_m‖) in the contact window;
    /// penetration is the base target's lead over the base along the ray.
    pub samples: Vec<[f64; 3]>,
    pub force_strictly_increasing: bool,
    pub penetration_strictly_increasing: bool,
}

impl WallAnalysis {
    pub fn compute(w: &WallWindows, logs: &[TickLog], dt: f64) -> Option<WallAnalysis> {
        let ray = Vector3::from(w.ray).normalize();
        let window = |[a, b]: [f64; 2]| logs.iter().filter(move |l| l.time + 0.5 * dt >= a && l.time + 0.5 * dt < b);
        let force = |l: &TickLog| l.f_m.force.norm();
        let free_force = window(w.free).map(force).fold(0.0, f64::max);
        let contact: Vec<&TickLog> = window(w.contact).collect();
        let (first, last) = (contact.first()?, contact.last()?);
        let step = ((0.02 / dt).round() as usize).max(1);
        let samples: Vec<[f64; 3]> = contact
            .iter()
            .step_by(step)
            .map(|l| [l.time, (l.b_des.position - l.base_pose.position).dot(&ray), force(l)])
            .collect();
        let increasing = |i: usize| samples.windows(2).all(|s| s[1][i] > s[0][i]);
        let contact_force = contact.iter().map(|l| force(l)).fold(0.0, f64::max);
        Some(WallAnalysis {
            free_force,
            contact_force,
            ratio: contact_force / free_force,
            master_progress: (last.master_pose.position - first.master_pose.position).dot(&ray),
            base_progress: (last.base_pose.position - first.base_pose.position).dot(&ray),
            force_strictly_increasing: increasing(2),
            penetration_strictly_increasing: increasing(1),
            samples,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub dt: f64,
    pub ticks: u64,
    /// Passivity values after the controllers acted.
    pub min_w: PassivityMinima,
    /// Observer values before the controllers acted.
    pub min_w_observed: PassivityMinima,
    /// Largest force felt at the master while the base is teleoperated.
    pub max_wall_force: f64,
    /// Largest end-effector pose error while the base is teleoperated.
    pub max_ee_deviation: Deviation,
    /// Largest `‖J M⁻¹ τ_n‖`.
    pub max_decoupling: f64,
    pub energy: EnergyLedger,
    pub events: BTreeMap<String, u64>,
    pub forward: StreamStats,
    pub backward: StreamStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall: Option<WallAnalysis>,
    pub runtime_s: f64,
}

impl ExperimentReport {
    fn build(config: &ScenarioConfig, teleop: &Teleop, logs: &[TickLog], runtime_s: f64) -> Self {
        let mut min_w = PassivityMinima::new();
        let mut min_obs = PassivityMinima::new();
        let mut max_wall_force = 0.0f64;
        let mut dev = Deviation::default();
        let mut max_decoupling = 0.0f64;
        let mut events = BTreeMap::new();
        for l in logs {
            min_w.update(l.w_master, l.w_slave);
            let obs = |p: &wbteleop::tdpa::PortLedger| [p.tasks[0].observed, p.tasks[1].observed];
            min_obs.update(obs(&l.ledger.master), obs(&l.ledger.slave));
            if l.routing == Task::Base {
                max_wall_force = max_wall_force.max(l.f_m.force.norm());
                let (p, o) = rotation_angle(&l.x_des, &l.ee_pose);
                dev.position = dev.position.max(p);
                dev.orientation = dev.orientation.max(o);
            }
            max_decoupling = max_decoupling.max(l.decoupling);
            for e in &l.events {
                let kind = serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(String::from));
                *events.entry(kind.unwrap_or_default()).or_insert(0) += 1;
            }
        }
        let channel = teleop.channel();
        ExperimentReport {
            name: config.name.clone(),
            seed: config.seed,
            dt: config.dt,
            ticks: logs.len() as u64,
            min_w,
            min_w_observed: min_obs,
            max_wall_force,
            max_ee_deviation: dev,
            max_decoupling,
            energy: teleop.ledger(),
            events,
            forward: channel.forward.stats(),
            backward: channel.backward.stats(),
            wall: config
                .analysis
                .wall
                .as_ref()
                .and_then(|w| WallAnalysis::compute(w, logs, config.dt)),
            runtime_s,
        }
    }
}
