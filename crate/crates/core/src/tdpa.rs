//! Time-domain passivity: per-task energy ledgers on both ports of the
//! delayed channel, passivity observers, admittance/impedance passivity
//! controllers and a drift compensator.
//!
//! Sign convention: the power at a port is positive when energy leaves the
//! channel through that port. At the master `P = V_mᵀ F̂_m` with `F̂_m` the
//! force applied to the master device; at the slave `P = V̂_sdᵀ F_s` with
//! `F_s` the task wrench acting on the robot. Both passivity controllers
//! reduce exactly these products, so negative power is booked as "in" and
//! positive power as "out".

use nalgebra::{Matrix6, Vector6};
use serde::Serialize;

use crate::error::ControlError;
use crate::geometry::{Twist, Wrench};

/// Teleoperated task: 0 end effector, 1 base (null space).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Task {
    EndEffector = 0,
    Base = 1,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::EndEffector, Task::Base];

    /// `NS = 0` selects the end effector, `NS = 1` the base.
    pub fn from_ns(ns: bool) -> Task {
        if ns {
            Task::Base
        } else {
            Task::EndEffector
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Task::EndEffector => "x",
            Task::Base => "b",
        }
    }
}

/// Energies of one task at one port, in joules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TaskEnergy {
    pub input: f64,
    pub output: f64,
    /// Total dissipated by this port's passivity controller.
    pub dissipated: f64,
    /// Observer value before the controller acted this tick.
    pub observed: f64,
}

impl TaskEnergy {
    /// Observer value including this tick's dissipation.
    pub fn passivity(&self, peer_input: f64) -> f64 {
        peer_input - self.output + self.dissipated
    }
}

/// The energies one side of the channel can know about.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PortLedger {
    pub tasks: [TaskEnergy; 2],
}

impl PortLedger {
    pub fn task(&self, task: Task) -> &TaskEnergy {
        &self.tasks[task.index()]
    }

    /// Books `power · dt` on the task selected by `ns`; the other task holds.
    pub fn accumulate(&mut self, ns: bool, power: f64, dt: f64) {
        let e = &mut self.tasks[Task::from_ns(ns).index()];
        if power > 0.0 {
            e.output += power * dt;
        } else if power < 0.0 {
            e.input += -power * dt;
        }
    }

    /// `W = E^peer_in(delayed) − E_out(k) + E_PC(k−1)`.
    pub fn observe(&mut self, task: Task, peer_input: f64) -> f64 {
        let e = &mut self.tasks[task.index()];
        e.observed = e.passivity(peer_input);
        e.observed
    }

    pub fn dissipate(&mut self, task: Task, energy: f64) {
        debug_assert!(energy >= 0.0);
        self.tasks[task.index()].dissipated += energy;
    }

    /// Cumulative input energies, transmitted in-band to the peer.
    pub fn input_energies(&self) -> [f64; 2] {
        [self.tasks[0].input, self.tasks[1].input]
    }
}

/// Both ports, for reporting.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub master: PortLedger,
    pub slave: PortLedger,
}

/// Passivity-controller weighting matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PcWeights {
    /// Admittance side.
    pub gamma: Matrix6<f64>,
    /// Impedance side.
    pub psi: Matrix6<f64>,
}

impl Default for PcWeights {
    fn default() -> Self {
        PcWeights {
            gamma: Matrix6::identity(),
            psi: Matrix6::identity(),
        }
    }
}

impl PcWeights {
    pub fn validate(&self) -> Result<(), ControlError> {
        for (name, m) in [("gamma", &self.gamma), ("psi", &self.psi)] {
            let symmetric = (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
            if !symmetric || m.cholesky().is_none() {
                return Err(ControlError::Dimension(format!(
                    "passivity weight {name} must be symmetric positive definite"
                )));
            }
        }
        Ok(())
    }
}

/// Output of a passivity controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcResult<T> {
    pub value: T,
    /// Energy removed this tick.
    pub dissipated: f64,
    /// Adaptive damping `d_f` or `d_v`.
    pub gain: f64,
}

/// Admittance-type controller on the slave side:
/// `V_sd = V̂_sd − d_f Γ F_s` with `d_f = −W_S / (ΔT ‖F_s‖²_Γ)` when
/// `W_S < 0`. With `F_s = 0` nothing can be dissipated this tick and the
/// deficit stays in the ledger.
pub fn admittance_pc(w_s: f64, f_s: &Wrench, v_hat: &Twist, gamma: &Matrix6<f64>, dt: f64) -> PcResult<Twist> {
    let f = f_s.to_vector();
    let weighted = gamma * f;
    let norm2 = f.dot(&weighted);
    match damping_gain(w_s, norm2, dt) {
        Some(d) => {
            let correction = weighted * d;
            PcResult {
                value: Twist {
                    frame: v_hat.frame,
                    ..Twist::from_vector(&(v_hat.to_vector() - correction))
                },
                dissipated: dt * f.dot(&correction),
                gain: d,
            }
        }
        None => PcResult {
            value: *v_hat,
            dissipated: 0.0,
            gain: 0.0,
        },
    }
}

/// Impedance-type controller on the master side:
/// `F_m = F̂_m − d_v Ψ V_m` with `d_v = −W_M / (ΔT ‖V_m‖²_Ψ)` when `W_M < 0`.
pub fn impedance_pc(w_m: f64, f_hat: &Wrench, v_m: &Twist, psi: &Matrix6<f64>, dt: f64) -> PcResult<Wrench> {
    let v = v_m.to_vector();
    let weighted = psi * v;
    let norm2 = v.dot(&weighted);
    match damping_gain(w_m, norm2, dt) {
        Some(d) => {
            let correction = weighted * d;
            PcResult {
                value: Wrench::from_vector(&(f_hat.to_vector() - correction)),
                dissipated: dt * v.dot(&correction),
                gain: d,
            }
        }
        None => PcResult {
            value: *f_hat,
            dissipated: 0.0,
            gain: 0.0,
        },
    }
}

fn damping_gain(w: f64, norm2: f64, dt: f64) -> Option<f64> {
    if w >= 0.0 || norm2 <= 0.0 {
        return None;
    }
    let d = -w / (dt * norm2);
    d.is_finite().then_some(d)
}

/// Proportional drift compensator.
///
/// Tracks the displacement `∫ V_pc dt` the admittance controller removed
/// from each task and emits `V_ad = k_d · drift`, scaled down so the energy
/// it sends out through the slave port stays within the observer's budget.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftCompensator {
    pub gain: f64,
    drift: [Vector6<f64>; 2],
}

/// One compensator step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftOutput {
    pub velocity: Twist,
    /// `V_adᵀ F_s`, booked on the slave port like any other power.
    pub power: f64,
}

impl DriftCompensator {
    pub fn new(gain: f64) -> Self {
        DriftCompensator {
            gain,
            drift: [Vector6::zeros(); 2],
        }
    }

    pub fn drift(&self, task: Task) -> Vector6<f64> {
        self.drift[task.index()]
    }

    /// Records the velocity removed by the admittance controller.
    pub fn record(&mut self, task: Task, removed: &Twist, dt: f64) {
        self.drift[task.index()] += removed.to_vector() * dt;
    }

    /// Recovery velocity for `task`, given the port wrench and the energy
    /// budget `W_S` left after the passivity controller.
    pub fn compensate(&mut self, task: Task, f_s: &Wrench, budget: f64, dt: f64) -> DriftOutput {
        let drift = &mut self.drift[task.index()];
        let mut v = *drift * self.gain;
        let mut power = v.dot(&f_s.to_vector());
        if power > 0.0 && power * dt > budget {
            // shave a few ulps so rounding never overdraws the budget
            let scale = (budget.max(0.0) / (power * dt)).min(1.0) * (1.0 - 1e-12);
            v *= scale;
            power = v.dot(&f_s.to_vector());
            if power * dt > budget.max(0.0) {
                v = Vector6::zeros();
                power = 0.0;
            }
        }
        *drift -= v * dt;
        DriftOutput {
            velocity: Twist::from_vector(&v),
            power,
        }
    }
}
