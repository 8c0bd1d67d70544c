//! Whole-body bilateral teleoperation loop: master device, delayed
//! two-port, passivity layer, task switch and hierarchical slave control.
//!
//! Per tick `k` the pipeline runs in this order:
//!
//! 1. Master: pair the current master twist `V_m(k)` with the held
//!    feedback `F̂_m`, book `P^M`, send `V_m(k)` forward together with the
//!    master's cumulative input energies and the operator's task flag.
//! 2. Slave: receive `V̂_sd`; the task flag on the sample selects the
//!    routing. Book `P^S = V̂_sdᵀ F_s`, observe, apply the admittance
//!    controller and (optionally) drift compensation to get `V_sd`.
//! 3. Slave: apply the torques of the decomposition computed at the start
//!    of the tick, integrate the selected desired pose, step the dynamics.
//! 4. Slave: decompose at the new state, compute `F_x`, `F_b` and the port
//!    wrench of the selected task, send it backward with the slave's
//!    cumulative input energies.
//! 5. Master: receive, observe, apply the impedance controller to get
//!    `F_m`, step the master device under the operator and `F_m`.
//!
//! Forces are computed one step ahead so that with zero delay both ports
//! see the same `(V, F)` pair in the same tick and the observers read
//! exactly zero on a lossless exchange.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};
use serde::Serialize;

use crate::channel::{Channel, ChannelSample, DelayProfile, TraceRow};
use crate::error::{ControlError, TeleopError};
use crate::geometry::{Pose, Twist, Wrench};
use crate::robot::{master_device_step, MasterDevice, RobotModel, RobotState};
use crate::tdpa::{admittance_pc, impedance_pc, DriftCompensator, EnergyLedger, PcWeights, PortLedger, Task};
use crate::wbc::{
    control_torques, decompose, error_twist, task_acceleration, wrench_pd, ControllerGains, TaskDecomposition,
    WbcSettings,
};

/// Impedance of the operator's hand holding the master device.
#[derive(Clone, Debug, PartialEq)]
pub struct HandModel {
    pub stiffness: f64,
    pub rotational_stiffness: f64,
    pub damping: f64,
    pub rotational_damping: f64,
}

impl Default for HandModel {
    fn default() -> Self {
        HandModel {
            stiffness: 2000.0,
            rotational_stiffness: 20.0,
            damping: 100.0,
            rotational_damping: 3.0,
        }
    }
}

/// Operator action on the master for one tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum OperatorInput {
    /// Velocity of the hand; the hand drags the master through
    /// [`HandModel`].
    Twist(Twist),
    /// Wrench applied straight to the master.
    Force(Wrench),
}

impl Default for OperatorInput {
    fn default() -> Self {
        OperatorInput::Twist(Twist::zero())
    }
}

/// Sinusoidal end-effector motion executed by the slave on its own while
/// the base is teleoperated: `offset(t) = a sin(2π f t)` per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct EndEffectorMotion {
    pub amplitude: Vector6<f64>,
    pub frequency_hz: f64,
}

impl EndEffectorMotion {
    pub fn velocity(&self, t: f64) -> Twist {
        let w = 2.0 * std::f64::consts::PI * self.frequency_hz;
        Twist::from_vector(&(self.amplitude * (w * (w * t).cos())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeleopConfig {
    pub dt: f64,
    pub gains: ControllerGains,
    pub wbc: WbcSettings,
    pub weights: PcWeights,
    /// Passivity controllers on both ports.
    pub passivity_control: bool,
    /// Drift-compensation gain `k_d` [1/s]; `None` disables it.
    pub drift_gain: Option<f64>,
    pub forward: DelayProfile,
    pub backward: DelayProfile,
    /// Master velocity → channel.
    pub velocity_scale: f64,
    /// Channel force → master.
    pub force_scale: f64,
    pub master: MasterDevice,
    pub hand: HandModel,
    pub end_effector_motion: Option<EndEffectorMotion>,
    /// Twist/wrench axes `(v, ω)` carried by the channel, per task. The
    /// other axes are neither commanded nor fed back; their desired pose
    /// components hold and the slave's PD acts on them locally.
    pub channel_axes: [[bool; 6]; 2],
    pub trace_channel: bool,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        TeleopConfig {
            dt: 1e-3,
            gains: ControllerGains::default(),
            wbc: WbcSettings::default(),
            weights: PcWeights::default(),
            passivity_control: true,
            drift_gain: None,
            forward: DelayProfile::default(),
            backward: DelayProfile::default(),
            velocity_scale: 1.0,
            force_scale: 1.0,
            master: MasterDevice::default(),
            hand: HandModel::default(),
            end_effector_motion: None,
            channel_axes: [[true; 6]; 2],
            trace_channel: false,
        }
    }
}

impl TeleopConfig {
    pub fn validate(&self) -> Result<(), TeleopError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(TeleopError::Config("tick period must be positive".into()));
        }
        self.gains.validate()?;
        self.weights.validate()?;
        self.forward.validate()?;
        self.backward.validate()?;
        for (name, v) in [("velocity_scale", self.velocity_scale), ("force_scale", self.force_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TeleopError::Config(format!("{name} must be positive")));
            }
        }
        if let Some(k) = self.drift_gain {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(TeleopError::Config("drift gain must be non-negative".into()));
            }
        }
        if self.channel_axes.iter().any(|a| !a.contains(&true)) {
            return Err(TeleopError::Config("each task needs at least one channel axis".into()));
        }
        let h = &self.hand;
        if [h.stiffness, h.rotational_stiffness, h.damping, h.rotational_damping]
            .iter()
            .any(|x| !(*x >= 0.0 && x.is_finite()))
        {
            return Err(TeleopError::Config("hand impedance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Decomposition failed; the slave holds gravity compensation.
    Singular,
    Conditioning,
    /// The damped solve replaced the LU solve of the extended Jacobian.
    DampedSolve,
    TaskSwitch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub tick: u64,
    pub kind: EventKind,
    pub message: String,
}

/// Everything observable about one tick.
#[derive(Clone, Debug)]
pub struct TickLog {
    pub tick: u64,
    pub time: f64,
    /// Operator-side task flag.
    pub ns: bool,
    /// Task the slave routed this tick.
    pub routing: Task,
    pub master_pose: Pose,
    pub hand_pose: Pose,
    pub f_operator: Wrench,
    pub v_m: Twist,
    pub f_hat_m: Wrench,
    pub f_m: Wrench,
    pub v_hat_sd: Twist,
    pub v_sd: Twist,
    pub v_ad: Twist,
    pub v_x_des: Twist,
    pub v_b_des: Twist,
    /// Slave poses after the step.
    pub ee_pose: Pose,
    pub base_pose: Pose,
    pub x_des: Pose,
    pub b_des: Pose,
    /// Wrenches applied during the tick.
    pub f_x: Wrench,
    pub f_b: Wrench,
    /// Slave port wrench of this tick (`F_s` in `P^S`).
    pub f_s: Wrench,
    pub p_master: f64,
    pub p_slave: f64,
    pub p_drift: f64,
    pub ledger: EnergyLedger,
    /// Observer values after the passivity controllers, `[x, b]`.
    pub w_master: [f64; 2],
    pub w_slave: [f64; 2],
    pub d_f: f64,
    pub d_v: f64,
    pub tau: DVector<f64>,
    /// `‖J M⁻¹ τ_n‖`, the end-effector acceleration caused by the base task.
    pub decoupling: f64,
    pub forward_age: Option<u64>,
    pub backward_age: Option<u64>,
    pub events: Vec<Event>,
}

/// `(P^M, P^S) = (V_mᵀ F̂_m, V̂_sdᵀ F_s)`.
pub fn power_variables(v_m: &Twist, f_hat_m: &Wrench, v_hat_sd: &Twist, f_s: &Wrench) -> (f64, f64) {
    (
        v_m.to_vector().dot(&f_hat_m.to_vector()),
        v_hat_sd.to_vector().dot(&f_s.to_vector()),
    )
}

fn twist_scaled(t: &Twist, s: f64) -> Twist {
    Twist::from_vector(&(t.to_vector() * s))
}

fn select(v: Vector6<f64>, axes: &[bool; 6]) -> Vector6<f64> {
    Vector6::from_fn(|i, _| if axes[i] { v[i] } else { 0.0 })
}

/// Simulation state of the full teleoperation system. Cloning it yields a
/// checkpoint that continues bit-identically.
#[derive(Clone, Debug)]
pub struct Teleop {
    config: TeleopConfig,
    model: RobotModel,
    slave: RobotState,
    master: RobotState,
    hand: Pose,
    ns: bool,
    routing: bool,
    x_des: Pose,
    b_des: Pose,
    v_x_des: Twist,
    v_b_des: Twist,
    channel: Channel,
    master_ledger: PortLedger,
    slave_ledger: PortLedger,
    drift: Option<DriftCompensator>,
    feedback: Option<ChannelSample>,
    decomposition: Option<TaskDecomposition>,
    z_prev: Option<DMatrix<f64>>,
    f_x: Wrench,
    f_b: Wrench,
    port: [Wrench; 2],
    f_m: Wrench,
    tick: u64,
    pending: Vec<Event>,
}

impl Teleop {
    /// Starts with the desired poses at the slave's current poses, empty
    /// ledgers and `NS = 0`. The slave must be at rest.
    pub fn initialize(model: RobotModel, slave: RobotState, config: TeleopConfig) -> Result<Teleop, TeleopError> {
        config.validate()?;
        model.validate()?;
        if !model.is_redundant() {
            return Err(TeleopError::Config("slave model must be kinematically redundant".into()));
        }
        if slave.velocity.len() != model.dof() || slave.joints.len() != model.links.len() {
            return Err(TeleopError::Model(crate::error::ModelError::Dimension {
                expected: model.dof(),
                got: slave.velocity.len(),
            }));
        }
        if slave.velocity.iter().any(|v| *v != 0.0) {
            return Err(TeleopError::Config("slave must start at rest".into()));
        }
        let mut channel = Channel::new(config.forward.clone(), config.backward.clone(), config.dt)?;
        if config.trace_channel {
            channel = channel.with_trace();
        }
        let master = config.master.rest_state();
        let td = decompose(&model, &slave, None, &config.wbc)?;
        let x_des = td.ee_pose;
        let b_des = td.base_pose;
        let mut t = Teleop {
            drift: config.drift_gain.map(DriftCompensator::new),
            config,
            model,
            slave,
            hand: master.base,
            master,
            ns: false,
            routing: false,
            x_des,
            b_des,
            v_x_des: Twist::zero(),
            v_b_des: Twist::zero(),
            channel,
            master_ledger: PortLedger::default(),
            slave_ledger: PortLedger::default(),
            feedback: None,
            decomposition: None,
            z_prev: None,
            f_x: Wrench::zero(),
            f_b: Wrench::zero(),
            port: [Wrench::zero(); 2],
            f_m: Wrench::zero(),
            tick: 0,
            pending: Vec::new(),
        };
        let mut events = Vec::new();
        t.refresh_control(&mut events);
        t.pending = events;
        Ok(t)
    }

    /// Selects the teleoperated task (`false`: end effector, `true`: base).
    /// The flag travels with the next forward sample; the slave switches
    /// routing when it arrives. The deselected desired pose holds.
    pub fn set_task_switch(&mut self, ns: bool) {
        if ns != self.ns {
            self.pending.push(Event {
                tick: self.tick,
                kind: EventKind::TaskSwitch,
                message: format!("NS {} -> {}", u8::from(self.ns), u8::from(ns)),
            });
        }
        self.ns = ns;
    }

    pub fn ns(&self) -> bool {
        self.ns
    }

    pub fn routing(&self) -> Task {
        Task::from_ns(self.routing)
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn config(&self) -> &TeleopConfig {
        &self.config
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn slave(&self) -> &RobotState {
        &self.slave
    }

    pub fn master(&self) -> &RobotState {
        &self.master
    }

    pub fn desired_poses(&self) -> (Pose, Pose) {
        (self.x_des, self.b_des)
    }

    pub fn ledger(&self) -> EnergyLedger {
        EnergyLedger {
            master: self.master_ledger.clone(),
            slave: self.slave_ledger.clone(),
        }
    }

    pub fn decomposition(&self) -> Option<&TaskDecomposition> {
        self.decomposition.as_ref()
    }

    pub fn channel_trace(&self) -> Vec<TraceRow> {
        self.channel.trace()
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    /// Scales the wall stiffness in the fed-back base wrench from the next
    /// tick on.
    pub fn set_wall_scale(&mut self, s: f64) -> Result<(), TeleopError> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(ControlError::Dimension("wall scale must be non-negative".into()).into());
        }
        self.config.gains.wall_scale = s;
        Ok(())
    }

    /// Operator wrench on the master for this tick.
    fn operator_wrench(&self, input: &OperatorInput) -> Wrench {
        match input {
            OperatorInput::Force(w) => *w,
            OperatorInput::Twist(v_ref) => {
                let h = &self.config.hand;
                let g = self.master.base;
                let g_e = self.hand.inverse() * g;
                let v_e = error_twist(&g_e, &self.master.base_twist(), v_ref);
                let mut kd = Matrix6::zeros();
                for i in 0..3 {
                    kd[(i, i)] = h.damping;
                    kd[(i + 3, i + 3)] = h.rotational_damping;
                }
                wrench_pd(
                    &self.hand,
                    &g,
                    &v_e,
                    &(Matrix3::identity() * h.stiffness),
                    &(Matrix3::identity() * h.rotational_stiffness),
                    &kd,
                )
            }
        }
    }

    /// Decomposes at the current slave state and computes the task wrenches
    /// applied during the next tick.
    fn refresh_control(&mut self, events: &mut Vec<Event>) {
        let gains = &self.config.gains;
        match decompose(&self.model, &self.slave, self.z_prev.as_ref(), &self.config.wbc) {
            Ok(td) => {
                if td.damped {
                    events.push(Event {
                        tick: self.tick,
                        kind: EventKind::DampedSolve,
                        message: format!("extended Jacobian condition {:e}", td.condition),
                    });
                }
                let g_x = td.ee_pose;
                let g_b = td.base_pose;
                let v_ex = error_twist(&(self.x_des.inverse() * g_x), &td.vx(), &self.v_x_des);
                let v_eb = error_twist(&(self.b_des.inverse() * g_b), &td.base_twist(&self.slave), &self.v_b_des);
                self.f_x = wrench_pd(&self.x_des, &g_x, &v_ex, &gains.kp_x, &gains.ko_x, &gains.kd_x);
                self.f_b = wrench_pd(&self.b_des, &g_b, &v_eb, &gains.kp_b, &gains.ko_b, &gains.kd_b);
                let s = gains.wall_scale;
                let wall = wrench_pd(&self.b_des, &g_b, &v_eb, &(gains.kp_b * s), &(gains.ko_b * s), &gains.kd_b);
                let axes = &self.config.channel_axes;
                self.port = [
                    Wrench::from_vector(&select(self.f_x.to_vector(), &axes[0])),
                    Wrench::from_vector(&select(wall.to_vector(), &axes[1])),
                ];
                self.z_prev = Some(td.z.clone());
                self.decomposition = Some(td);
            }
            Err(e) => {
                let kind = match e {
                    ControlError::Conditioning { .. } => EventKind::Conditioning,
                    _ => EventKind::Singular,
                };
                events.push(Event {
                    tick: self.tick,
                    kind,
                    message: e.to_string(),
                });
                self.decomposition = None;
                self.f_x = Wrench::zero();
                self.f_b = Wrench::zero();
                self.port = [Wrench::zero(); 2];
            }
        }
    }

    /// Advances the whole system by one tick.
    pub fn tick(&mut self, input: &OperatorInput) -> Result<TickLog, TeleopError> {
        let k = self.tick;
        let dt = self.config.dt;
        let time = k as f64 * dt;
        let mut events = std::mem::take(&mut self.pending);

        // 1. master, forward half
        let v_m = Twist::from_vector(&select(
            twist_scaled(&self.master.base_twist(), self.config.velocity_scale).to_vector(),
            &self.config.channel_axes[Task::from_ns(self.ns).index()],
        ));
        let master_tag = self.feedback.as_ref().map(|s| s.ns);
        let f_hat_m = self
            .feedback
            .as_ref()
            .map_or_else(Wrench::zero, |s| Wrench::from_vector(&-s.payload));
        let p_master = v_m.to_vector().dot(&f_hat_m.to_vector());
        if let Some(ns) = master_tag {
            self.master_ledger.accumulate(ns, p_master, dt);
        }
        self.channel.forward.send(ChannelSample::new(
            v_m.to_vector(),
            k,
            self.ns,
            self.master_ledger.input_energies(),
        ))?;
        let f_operator = self.operator_wrench(input);

        // 2. slave, passivity layer
        let delivery = self.channel.forward.receive(k);
        if let Some(ns) = delivery.ns() {
            self.routing = ns;
        }
        let task = Task::from_ns(self.routing);
        let v_hat_sd = Twist::from_vector(&delivery.payload());
        let peer_in = delivery.energy();
        let f_s = self.port[task.index()];
        let p_slave = v_hat_sd.to_vector().dot(&f_s.to_vector());
        self.slave_ledger.accumulate(self.routing, p_slave, dt);
        for t in Task::ALL {
            self.slave_ledger.observe(t, peer_in[t.index()]);
        }
        let mut d_f = 0.0;
        let mut v_sd = v_hat_sd;
        if self.config.passivity_control {
            let pc = admittance_pc(
                self.slave_ledger.task(task).observed,
                &f_s,
                &v_hat_sd,
                &self.config.weights.gamma,
                dt,
            );
            self.slave_ledger.dissipate(task, pc.dissipated);
            d_f = pc.gain;
            v_sd = pc.value;
        }
        let mut v_ad = Twist::zero();
        let mut p_drift = 0.0;
        if let Some(drift) = &mut self.drift {
            let removed = Twist::from_vector(&(v_hat_sd.to_vector() - v_sd.to_vector()));
            drift.record(task, &removed, dt);
            let budget = self.slave_ledger.task(task).passivity(peer_in[task.index()]);
            let out = drift.compensate(task, &f_s, budget, dt);
            self.slave_ledger.accumulate(self.routing, out.power, dt);
            v_ad = out.velocity;
            p_drift = out.power;
            v_sd = Twist::from_vector(&(v_sd.to_vector() + v_ad.to_vector()));
        }

        // 3. slave control and dynamics
        let (v_x_des, v_b_des) = match task {
            Task::EndEffector => (v_sd, Twist::zero()),
            Task::Base => (
                self.config
                    .end_effector_motion
                    .as_ref()
                    .map_or_else(Twist::zero, |m| m.velocity(time)),
                v_sd,
            ),
        };
        let f_x = self.f_x;
        let f_b = self.f_b;
        let (tau, decoupling) = match &self.decomposition {
            Some(td) => {
                let torques = control_torques(td, &f_x, &f_b, &td.gravity);
                let decoupling = task_acceleration(td, &torques.tau_n).norm();
                (torques.tau, decoupling)
            }
            None => (self.model.dynamics_quantities(&self.slave)?.gravity, 0.0),
        };
        self.x_des = self.x_des.integrate(&v_x_des, dt);
        self.b_des = self.b_des.integrate(&v_b_des, dt);
        self.v_x_des = v_x_des;
        self.v_b_des = v_b_des;
        self.slave = self.model.step_dynamics(&self.slave, &tau, dt)?;

        // 4. slave, backward half
        self.tick = k + 1;
        self.refresh_control(&mut events);
        self.tick = k;
        self.channel.backward.send(ChannelSample::new(
            self.port[task.index()].to_vector(),
            k,
            self.routing,
            self.slave_ledger.input_energies(),
        ))?;

        // 5. master, feedback half
        let back = self.channel.backward.receive(k);
        if back.sample.is_some() {
            self.feedback = back.sample.clone();
        }
        let peer_in = self.feedback.as_ref().map_or([0.0; 2], |s| s.energy);
        for t in Task::ALL {
            self.master_ledger.observe(t, peer_in[t.index()]);
        }
        let mut d_v = 0.0;
        let mut f_m = f_hat_m;
        if let (Some(ns), true) = (master_tag, self.config.passivity_control) {
            let t = Task::from_ns(ns);
            let pc = impedance_pc(
                self.master_ledger.task(t).observed,
                &f_hat_m,
                &v_m,
                &self.config.weights.psi,
                dt,
            );
            self.master_ledger.dissipate(t, pc.dissipated);
            d_v = pc.gain;
            f_m = pc.value;
        }
        self.f_m = f_m;
        let feedback = f_m.to_vector() * self.config.force_scale;
        let (master, _) = master_device_step(
            &self.config.master,
            &self.master,
            &f_operator.to_vector(),
            &feedback,
            dt,
        )?;
        self.master = master;
        match input {
            OperatorInput::Twist(v) => self.hand = self.hand.integrate(v, dt),
            OperatorInput::Force(_) => self.hand = self.master.base,
        }
        self.tick = k + 1;

        let w = |l: &PortLedger, peer: [f64; 2]| {
            [
                l.tasks[0].passivity(peer[0]),
                l.tasks[1].passivity(peer[1]),
            ]
        };
        let (ee_pose, base_pose) = match &self.decomposition {
            Some(td) => (td.ee_pose, td.base_pose),
            None => (
                self.model.forward_kinematics(&self.slave, crate::robot::Frame::EndEffector)?,
                self.slave.base,
            ),
        };
        Ok(TickLog {
            tick: k,
            time,
            ns: self.ns,
            routing: task,
            master_pose: self.master.base,
            hand_pose: self.hand,
            f_operator,
            v_m,
            f_hat_m,
            f_m,
            v_hat_sd,
            v_sd,
            v_ad,
            v_x_des,
            v_b_des,
            ee_pose,
            base_pose,
            x_des: self.x_des,
            b_des: self.b_des,
            f_x,
            f_b,
            f_s,
            p_master,
            p_slave,
            p_drift,
            w_master: w(&self.master_ledger, peer_in),
            w_slave: w(&self.slave_ledger, delivery.energy()),
            ledger: self.ledger(),
            d_f,
            d_v,
            tau,
            decoupling,
            forward_age: delivery.age,
            backward_age: back.age,
            events,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn setup(config: TeleopConfig) -> Teleop {
        let model = RobotModel::aerial_manipulator();
        let slave = model.home_state(Pose::identity());
        Teleop::initialize(model, slave, config).unwrap()
    }

    #[test]
    fn initial_desired_poses_match_forward_kinematics() {
        let t = setup(TeleopConfig::default());
        let fk = t
            .model()
            .forward_kinematics(t.slave(), crate::robot::Frame::EndEffector)
            .unwrap();
        assert_eq!(t.desired_poses().0, fk);
        assert_eq!(t.desired_poses().1, t.slave().base);
        assert_eq!(t.f_x, Wrench::zero());
        assert_eq!(t.f_b, Wrench::zero());
    }

    #[test]
    fn idle_loop_holds_pose_and_energy() {
        let mut t = setup(TeleopConfig::default());
        let x0 = t.desired_poses().0;
        for _ in 0..200 {
            let log = t.tick(&OperatorInput::default()).unwrap();
            assert_eq!(log.p_master, 0.0);
            assert_eq!(log.p_slave, 0.0);
        }
        let ee = t
            .model()
            .forward_kinematics(t.slave(), crate::robot::Frame::EndEffector)
            .unwrap();
        assert!((ee.position - x0.position).norm() < 1e-9);
        assert_eq!(t.ledger(), EnergyLedger::default());
    }

    #[test]
    fn power_variable_examples() {
        let v = Twist::body(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros());
        let f = Wrench::new(Vector3::new(2.0, 0.0, 0.0), Vector3::zeros());
        let f_orth = Wrench::new(Vector3::new(0.0, 3.0, 0.0), Vector3::zeros());
        assert_eq!(power_variables(&v, &f, &v, &f_orth), (2.0, 0.0));
    }

    #[test]
    fn double_toggle_last_write_wins() {
        let mut t = setup(TeleopConfig::default());
        t.set_task_switch(true);
        t.set_task_switch(false);
        let log = t.tick(&OperatorInput::default()).unwrap();
        assert!(!log.ns);
        assert_eq!(log.routing, Task::EndEffector);
        assert_eq!(log.events.iter().filter(|e| e.kind == EventKind::TaskSwitch).count(), 2);
    }

    #[test]
    fn moving_slave_is_rejected_at_start() {
        let model = RobotModel::aerial_manipulator();
        let mut slave = model.home_state(Pose::identity());
        slave.velocity[0] = 0.1;
        assert!(Teleop::initialize(model, slave, TeleopConfig::default()).is_err());
    }
}
