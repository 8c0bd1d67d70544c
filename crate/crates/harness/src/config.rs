//! Scenario documents (TOML, schema version 1).
//!
//! Matrices are written row-major with explicit dimensions:
//! `kp_x = { rows = 3, cols = 3, data = [500, 0, 0, 0, 500, 0, 0, 0, 500] }`.
//! Relative paths are resolved against the directory of the document.

use std::path::{Path, PathBuf};

use nalgebra::{SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use wbteleop::channel::{DelayMode, DelayProfile};
use wbteleop::geometry::{Twist, Wrench};
use wbteleop::robot::{MasterDevice, RobotModel};
use wbteleop::tdpa::PcWeights;
use wbteleop::teleop::{EndEffectorMotion, HandModel, OperatorInput, TeleopConfig};
use wbteleop::wbc::ControllerGains;

use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;
pub const BUILTIN_MODEL: &str = "builtin:aerial-manipulator";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixSpec {
    pub fn from_matrix<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> Self {
        MatrixSpec {
            rows: R,
            cols: C,
            data: (0..R).flat_map(|i| (0..C).map(move |j| m[(i, j)])).collect(),
        }
    }

    pub fn to_matrix<const R: usize, const C: usize>(&self, name: &str) -> Result<SMatrix<f64, R, C>, HarnessError> {
        if self.rows != R || self.cols != C || self.data.len() != R * C {
            return Err(HarnessError::Config(format!(
                "{name}: expected {R}×{C} with {} entries, got {}×{} with {}",
                R * C,
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(HarnessError::Config(format!("{name}: non-finite entry")));
        }
        Ok(SMatrix::from_row_slice(&self.data))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Batch,
    Serve,
}

/// Missing entries take the library defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub kp_x: MatrixSpec,
    pub ko_x: MatrixSpec,
    pub kd_x: MatrixSpec,
    pub kp_b: MatrixSpec,
    pub ko_b: MatrixSpec,
    pub kd_b: MatrixSpec,
    pub wall_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for GainsConfig {
    fn default() -> Self {
        let g = ControllerGains::default();
        GainsConfig {
            kp_x: MatrixSpec::from_matrix(&g.kp_x),
            ko_x: MatrixSpec::from_matrix(&g.ko_x),
            kd_x: MatrixSpec::from_matrix(&g.kd_x),
            kp_b: MatrixSpec::from_matrix(&g.kp_b),
            ko_b: MatrixSpec::from_matrix(&g.ko_b),
            kd_b: MatrixSpec::from_matrix(&g.kd_b),
            wall_scale: g.wall_scale,
        }
    }
}

impl GainsConfig {
    pub fn to_gains(&self) -> Result<ControllerGains, HarnessError> {
        let gains = ControllerGains {
            kp_x: self.kp_x.to_matrix::<3, 3>("gains.kp_x")?,
            ko_x: self.ko_x.to_matrix::<3, 3>("gains.ko_x")?,
            kd_x: self.kd_x.to_matrix::<6, 6>("gains.kd_x")?,
            kp_b: self.kp_b.to_matrix::<3, 3>("gains.kp_b")?,
            ko_b: self.ko_b.to_matrix::<3, 3>("gains.ko_b")?,
            kd_b: self.kd_b.to_matrix::<6, 6>("gains.kd_b")?,
            wall_scale: self.wall_scale,
        };
        gains.validate().map_err(|e| HarnessError::Config(format!("gains: {e}")))?;
        Ok(gains)
    }
}

/// One direction of the channel. The seed comes from the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub mode: DelayMode,
    pub base_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub loss: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            mode: DelayMode::Constant,
            base_ms: 0.0,
            jitter_ms: 0.0,
            loss: 0.0,
        }
    }
}

impl LinkConfig {
    pub fn profile(&self, seed: u64) -> DelayProfile {
        DelayProfile {
            mode: self.mode,
            base_ms: self.base_ms,
            jitter_ms: self.jitter_ms,
            loss: self.loss,
            seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub forward: LinkConfig,
    #[serde(default)]
    pub backward: LinkConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassivityConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Drift-compensation gain [1/s]; absent disables it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<MatrixSpec>,
}

fn yes() -> bool {
    true
}

impl Default for PassivityConfig {
    fn default() -> Self {
        PassivityConfig {
            enabled: true,
            drift_gain: None,
            gamma: None,
            psi: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandConfig {
    pub stiffness: f64,
    pub rotational_stiffness: f64,
    pub damping: f64,
    pub rotational_damping: f64,
}

impl Default for HandConfig {
    fn default() -> Self {
        let h = HandModel::default();
        HandConfig {
            stiffness: h.stiffness,
            rotational_stiffness: h.rotational_stiffness,
            damping: h.damping,
            rotational_damping: h.rotational_damping,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MasterConfig {
    pub mass: f64,
    pub rotational_inertia: f64,
    pub linear_damping: f64,
    pub angular_damping: f64,
}

impl Default for MasterConfig {
    fn default() -> Self {
        MasterConfig {
            mass: 2.0,
            rotational_inertia: 0.2,
            linear_damping: 4.0,
            angular_damping: 0.4,
        }
    }
}

/// Axes `(vx, vy, vz, wx, wy, wz)` carried by the channel per task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxesConfig {
    pub end_effector: [bool; 6],
    pub base: [bool; 6],
}

impl Default for AxesConfig {
    fn default() -> Self {
        AxesConfig {
            end_effector: [true; 6],
            base: [true; 6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    #[serde(default)]
    pub hand: HandConfig,
    #[serde(default)]
    pub master: MasterConfig,
    #[serde(default = "one")]
    pub velocity_scale: f64,
    #[serde(default = "one")]
    pub force_scale: f64,
    #[serde(default)]
    pub channel_axes: AxesConfig,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            hand: HandConfig::default(),
            master: MasterConfig::default(),
            velocity_scale: 1.0,
            force_scale: 1.0,
            channel_axes: AxesConfig::default(),
        }
    }
}

/// `[t_start, t_end)` with the task flag and either the hand twist
/// (m/s, rad/s) or a wrench applied straight to the master (N, N·m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub ns: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twist: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<[f64; 6]>,
}

impl Segment {
    pub fn input(&self) -> OperatorInput {
        match (&self.twist, &self.force) {
            (Some(v), _) => OperatorInput::Twist(Twist::from_vector(&Vector6::from_column_slice(v))),
            (None, Some(f)) => OperatorInput::Force(Wrench::from_vector(&Vector6::from_column_slice(f))),
            (None, None) => OperatorInput::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    /// Displacement amplitude per axis (m, rad), end-effector body frame.
    pub amplitude: [f64; 6],
    pub frequency_hz: f64,
}

/// Windows used to characterize a wall contact along a commanded ray.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallWindows {
    pub ray: [f64; 3],
    pub free: [f64; 2],
    pub contact: [f64; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall: Option<WallWindows>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub trace_channel: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub addr: String,
    /// Simulation ticks per telemetry frame.
    pub decimation: u64,
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    pub realtime_factor: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            addr: "127.0.0.1:8765".into(),
            decimation: 20,
            realtime_factor: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    #[serde(default = "builtin")]
    pub model: String,
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub gains: GainsConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub passivity: PassivityConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_effector_motion: Option<MotionConfig>,
    #[serde(default)]
    pub timeline: Vec<Segment>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub serve: ServeConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn builtin() -> String {
    BUILTIN_MODEL.into()
}

impl ScenarioConfig {
    /// A minimal valid scenario with default gains and an ideal channel.
    pub fn new(name: &str, duration: f64) -> Self {
        ScenarioConfig {
            version: SCHEMA_VERSION,
            name: name.into(),
            model: builtin(),
            dt: 1e-3,
            duration,
            seed: 0,
            mode: Mode::Batch,
            gains: GainsConfig::default(),
            channel: ChannelConfig::default(),
            passivity: PassivityConfig::default(),
            operator: OperatorConfig::default(),
            end_effector_motion: None,
            timeline: Vec::new(),
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
            serve: ServeConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut config: ScenarioConfig = toml::from_str(&text).map_err(|source| HarnessError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Sets both directions to a constant delay with the given round trip.
    pub fn set_round_trip_delay(&mut self, ms: f64) {
        for link in [&mut self.channel.forward, &mut self.channel.backward] {
            link.base_ms = ms / 2.0;
            if link.mode == DelayMode::Constant {
                link.jitter_ms = 0.0;
            }
        }
    }

    // negated comparisons so that NaN fails every check
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.version != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive".into());
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad("duration must be non-negative".into());
        }
        let n = self.duration / self.dt;
        if (n - n.round()).abs() > 1e-6 {
            return bad(format!("duration {} is not a multiple of dt {}", self.duration, self.dt));
        }
        if self.model != BUILTIN_MODEL && !self.resolve(Path::new(&self.model)).is_file() {
            return bad(format!("model file {} not found", self.resolve(Path::new(&self.model)).display()));
        }
        for (i, s) in self.timeline.iter().enumerate() {
            if !(s.t_start >= 0.0 && s.t_end > s.t_start && s.t_end.is_finite()) {
                return bad(format!("timeline[{i}]: need 0 ≤ t_start < t_end"));
            }
            if s.ns > 1 {
                return bad(format!("timeline[{i}]: ns must be 0 or 1"));
            }
            if s.twist.is_some() == s.force.is_some() {
                return bad(format!("timeline[{i}]: give exactly one of twist or force"));
            }
            let v = s.twist.or(s.force).unwrap();
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("timeline[{i}]: non-finite input"));
            }
        }
        let mut sorted: Vec<&Segment> = self.timeline.iter().collect();
        sorted.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        if sorted.windows(2).any(|w| w[1].t_start < w[0].t_end) {
            return bad("timeline segments overlap".into());
        }
        if let Some(m) = &self.end_effector_motion {
            if !(m.frequency_hz > 0.0 && m.frequency_hz.is_finite()) || m.amplitude.iter().any(|a| !a.is_finite()) {
                return bad("end_effector_motion needs finite amplitudes and a positive frequency".into());
            }
        }
        if let Some(w) = &self.analysis.wall {
            let ray = Vector3::from(w.ray);
            if !(ray.norm() > 0.0) || !(w.free[0] < w.free[1]) || !(w.contact[0] < w.contact[1]) {
                return bad("analysis.wall needs a nonzero ray and increasing windows".into());
            }
        }
        if self.serve.decimation == 0 || !(self.serve.realtime_factor >= 0.0) {
            return bad("serve: decimation ≥ 1 and realtime_factor ≥ 0".into());
        }
        self.teleop_config()?;
        Ok(())
    }

    pub fn robot_model(&self) -> Result<RobotModel, HarnessError> {
        if self.model == BUILTIN_MODEL {
            Ok(RobotModel::aerial_manipulator())
        } else {
            Ok(RobotModel::load(self.resolve(Path::new(&self.model))).map_err(wbteleop::TeleopError::from)?)
        }
    }

    pub fn teleop_config(&self) -> Result<TeleopConfig, HarnessError> {
        let mut weights = PcWeights::default();
        if let Some(g) = &self.passivity.gamma {
            weights.gamma = g.to_matrix::<6, 6>("passivity.gamma")?;
        }
        if let Some(p) = &self.passivity.psi {
            weights.psi = p.to_matrix::<6, 6>("passivity.psi")?;
        }
        let op = &self.operator;
        let m = &op.master;
        let config = TeleopConfig {
            dt: self.dt,
            gains: self.gains.to_gains()?,
            weights,
            passivity_control: self.passivity.enabled,
            drift_gain: self.passivity.drift_gain,
            forward: self.channel.forward.profile(self.seed),
            backward: self.channel.backward.profile(self.seed),
            velocity_scale: op.velocity_scale,
            force_scale: op.force_scale,
            master: MasterDevice::new(m.mass, m.rotational_inertia, m.linear_damping, m.angular_damping),
            hand: HandModel {
                stiffness: op.hand.stiffness,
                rotational_stiffness: op.hand.rotational_stiffness,
                damping: op.hand.damping,
                rotational_damping: op.hand.rotational_damping,
            },
            end_effector_motion: self.end_effector_motion.as_ref().map(|m| EndEffectorMotion {
                amplitude: Vector6::from_column_slice(&m.amplitude),
                frequency_hz: m.frequency_hz,
            }),
            channel_axes: [op.channel_axes.end_effector, op.channel_axes.base],
            trace_channel: self.output.trace_channel,
            ..TeleopConfig::default()
        };
        config.validate()?;
        if !(m.mass > 0.0 && m.rotational_inertia > 0.0 && m.linear_damping >= 0.0 && m.angular_damping >= 0.0) {
            return Err(HarnessError::Config("operator.master: positive inertia, non-negative damping".into()));
        }
        Ok(config)
    }

    /// Operator input and task flag at tick time `t`. Between segments the
    /// hand rests and the flag keeps its last scripted value.
    pub fn operator_at(&self, t: f64, ns: bool) -> (OperatorInput, bool) {
        // half-tick guard so boundaries land on the intended tick
        let eps = 0.5 * self.dt;
        match self.timeline.iter().find(|s| t + eps >= s.t_start && t + eps < s.t_end) {
            Some(s) => (s.input(), s.ns == 1),
            None => (OperatorInput::default(), ns),
        }
    }
}
