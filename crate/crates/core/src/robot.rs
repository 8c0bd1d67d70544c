//! Floating-base serial manipulator: model, kinematics, dynamics and
//! forward simulation.
//!
//! The generalized velocity is `ν = (V_b, θ̇)` with `V_b` the body twist of the
//! base and `θ̇` the joint rates, so `n = 6 + links`. The configuration keeps
//! the base pose on SE(3) directly instead of a minimal chart.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{DynamicsError, ModelError};
use crate::geometry::{ad, exp_se3, Pose, Rotation, Twist};

pub const MODEL_SCHEMA: &str = "wbteleop.robot/1";

/// Dimension of the Cartesian task.
pub const TASK_DIM: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct BodyInertia {
    pub mass: f64,
    /// Center of mass in the body frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, body axes.
    pub inertia: Matrix3<f64>,
}

impl BodyInertia {
    pub fn new(mass: f64, com: Vector3<f64>, inertia: Matrix3<f64>) -> Self {
        BodyInertia { mass, com, inertia }
    }

    /// Solid cube of side `side` centered on the frame origin.
    pub fn cube(mass: f64, side: f64) -> Self {
        let j = mass * side * side / 6.0;
        BodyInertia::new(mass, Vector3::zeros(), Matrix3::identity() * j)
    }

    /// Slender cylinder of length `length` and radius `radius` whose axis is
    /// the body-frame direction `axis`, with its center at `com`.
    pub fn rod(mass: f64, length: f64, radius: f64, axis: &Vector3<f64>, com: Vector3<f64>) -> Self {
        let a = axis.normalize();
        let j_axial = 0.5 * mass * radius * radius;
        let j_perp = mass * (3.0 * radius * radius + length * length) / 12.0;
        let inertia = Matrix3::identity() * j_perp + a * a.transpose() * (j_axial - j_perp);
        BodyInertia::new(mass, com, inertia)
    }

    /// 6×6 spatial inertia about the body frame origin, `(v, ω)` ordering.
    pub fn spatial(&self) -> Matrix6<f64> {
        let m = self.mass;
        let c = crate::geometry::hat(&self.com);
        let mut out = Matrix6::zeros();
        out.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(Matrix3::identity() * m));
        out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-c * m));
        out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(c * m));
        out.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(self.inertia - c * c * m));
        out
    }

    fn validate(&self, what: &str) -> Result<(), ModelError> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(ModelError::Invalid(format!("{what}: mass must be positive")));
        }
        if (self.inertia - self.inertia.transpose()).norm() > 1e-12 * self.inertia.norm() {
            return Err(ModelError::Invalid(format!("{what}: inertia is not symmetric")));
        }
        if self.inertia.symmetric_eigenvalues().min() <= 0.0 {
            return Err(ModelError::Invalid(format!(
                "{what}: inertia is not positive definite"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Prismatic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub name: String,
    pub joint: JointType,
    /// Unit joint axis in the joint frame.
    pub axis: Vector3<f64>,
    /// Parent frame to joint frame at zero joint position.
    pub origin: Pose,
    pub inertia: BodyInertia,
}

impl Link {
    /// Joint twist in the link frame.
    pub fn twist(&self) -> Vector6<f64> {
        let mut xi = Vector6::zeros();
        match self.joint {
            JointType::Revolute => xi.fixed_rows_mut::<3>(3).copy_from(&self.axis),
            JointType::Prismatic => xi.fixed_rows_mut::<3>(0).copy_from(&self.axis),
        }
        xi
    }

    /// Parent-to-link transform at joint position `theta`.
    pub fn transform(&self, theta: f64) -> Pose {
        self.origin * exp_se3(&Twist::from_vector(&self.twist()), theta)
    }
}

/// Named frames of a [`RobotModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    Base,
    Camera,
    Link(usize),
    EndEffector,
}

impl std::str::FromStr for Frame {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Frame::Base),
            "camera" => Ok(Frame::Camera),
            "end_effector" | "ee" => Ok(Frame::EndEffector),
            other => other
                .strip_prefix("link")
                .and_then(|i| i.parse().ok())
                .map(Frame::Link)
                .ok_or_else(|| ModelError::UnknownFrame(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub base: BodyInertia,
    pub links: Vec<Link>,
    /// Last link frame (or base, without links) to end-effector frame.
    pub end_effector: Pose,
    /// Base frame to camera frame.
    pub camera: Pose,
    pub gravity: Vector3<f64>,
}

impl RobotModel {
    /// Default desk-scale aerial manipulator: an 80 kg base and a
    /// yaw-pitch-pitch arm hanging below it (`n = 9`).
    pub fn aerial_manipulator() -> Self {
        let r = 0.03;
        let links = vec![
            Link {
                name: "shoulder_yaw".into(),
                joint: JointType::Revolute,
                axis: Vector3::z(),
                origin: Pose::from_translation(0.0, 0.0, -0.2),
                inertia: BodyInertia::rod(4.0, 0.6, r, &Vector3::z(), Vector3::new(0.0, 0.0, -0.3)),
            },
            Link {
                name: "shoulder_pitch".into(),
                joint: JointType::Revolute,
                axis: Vector3::y(),
                origin: Pose::from_translation(0.0, 0.0, -0.6),
                inertia: BodyInertia::rod(3.0, 0.5, r, &Vector3::x(), Vector3::new(0.25, 0.0, 0.0)),
            },
            Link {
                name: "elbow_pitch".into(),
                joint: JointType::Revolute,
                axis: Vector3::y(),
                origin: Pose::from_translation(0.5, 0.0, 0.0),
                // forearm plus gripper; the lumped inertia keeps the end-effector
                // operational-space inertia well above K_D·ΔT in every direction
                inertia: BodyInertia::new(2.0, Vector3::new(0.0, 0.0, -0.15), Matrix3::identity() * 0.1),
            },
        ];
        RobotModel {
            name: "aerial-manipulator".into(),
            base: BodyInertia::cube(80.0, 1.5),
            links,
            end_effector: Pose::from_translation(0.0, 0.0, -0.3),
            camera: Pose::new(Rotation::from_rpy(0.0, 0.6, 0.0), Vector3::new(0.4, 0.0, -0.2)),
            gravity: Vector3::new(0.0, 0.0, -9.81),
        }
    }

    /// A single free rigid body without gravity, used for the master device.
    pub fn rigid_body(inertia: BodyInertia) -> Self {
        RobotModel {
            name: "rigid-body".into(),
            base: inertia,
            links: Vec::new(),
            end_effector: Pose::identity(),
            camera: Pose::identity(),
            gravity: Vector3::zeros(),
        }
    }

    /// Generalized velocity dimension.
    pub fn dof(&self) -> usize {
        6 + self.links.len()
    }

    pub fn is_redundant(&self) -> bool {
        self.dof() > TASK_DIM
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.base.validate("base")?;
        for link in &self.links {
            link.inertia.validate(&link.name)?;
            if (link.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(ModelError::Invalid(format!("{}: axis must be unit length", link.name)));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument = toml::from_str(text)?;
        doc.into_model()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&ModelDocument::from_model(self)).expect("model serializes")
    }

    /// Home state: base at `base`, joints at zero, at rest.
    pub fn home_state(&self, base: Pose) -> RobotState {
        RobotState::at_rest(base, DVector::zeros(self.links.len()))
    }

    fn check_state(&self, state: &RobotState) -> Result<(), ModelError> {
        if state.joints.len() != self.links.len() {
            return Err(ModelError::Dimension {
                expected: self.links.len(),
                got: state.joints.len(),
            });
        }
        if state.velocity.len() != self.dof() {
            return Err(ModelError::Dimension {
                expected: self.dof(),
                got: state.velocity.len(),
            });
        }
        Ok(())
    }

    /// Poses, body Jacobians and (optionally) Jacobian rates of every body.
    pub fn kinematics(&self, state: &RobotState, with_rates: bool) -> Kinematics {
        let n = self.dof();
        let nb = self.links.len() + 1;
        let mut poses = Vec::with_capacity(nb);
        let mut jacobians = Vec::with_capacity(nb);
        let mut rates = Vec::with_capacity(if with_rates { nb } else { 0 });

        let mut jb = DMatrix::zeros(6, n);
        jb.view_mut((0, 0), (6, 6)).fill_with_identity();
        poses.push(state.base);
        jacobians.push(jb);
        if with_rates {
            rates.push(DMatrix::zeros(6, n));
        }

        for (k, link) in self.links.iter().enumerate() {
            let x = link.transform(state.joints[k]);
            let ad_inv = to_dyn(&x.inverse().adjoint());
            let xi = link.twist();
            let parent_j = &jacobians[k];
            let mut j = &ad_inv * parent_j;
            j.view_mut((0, 6 + k), (6, 1)).copy_from(&xi);
            if with_rates {
                let ad_xi = to_dyn(&ad(&(xi * state.velocity[6 + k])));
                let transported = &ad_inv * parent_j;
                let jd = -ad_xi * transported + &ad_inv * &rates[k];
                rates.push(jd);
            }
            poses.push(poses[k] * x);
            jacobians.push(j);
        }
        Kinematics {
            poses,
            jacobians,
            rates,
        }
    }

    fn frame_offset(&self, frame: Frame) -> Result<(usize, Pose), ModelError> {
        match frame {
            Frame::Base => Ok((0, Pose::identity())),
            Frame::Camera => Ok((0, self.camera)),
            Frame::Link(i) if i < self.links.len() => Ok((i + 1, Pose::identity())),
            Frame::Link(i) => Err(ModelError::UnknownFrame(format!("link{i}"))),
            Frame::EndEffector => Ok((self.links.len(), self.end_effector)),
        }
    }

    pub fn forward_kinematics(&self, state: &RobotState, frame: Frame) -> Result<Pose, ModelError> {
        self.check_state(state)?;
        let (body, offset) = self.frame_offset(frame)?;
        let kin = self.kinematics(state, false);
        Ok(kin.poses[body] * offset)
    }

    /// Body Jacobian of `frame`: `J·ν` is the frame's body twist.
    pub fn body_jacobian(&self, state: &RobotState, frame: Frame) -> Result<DMatrix<f64>, ModelError> {
        self.check_state(state)?;
        let (body, offset) = self.frame_offset(frame)?;
        let kin = self.kinematics(state, false);
        Ok(to_dyn(&offset.inverse().adjoint()) * &kin.jacobians[body])
    }

    /// Body Jacobian of `frame` and its time derivative along the state's
    /// velocity.
    pub fn body_jacobian_with_rate(
        &self,
        state: &RobotState,
        frame: Frame,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
        self.check_state(state)?;
        let (body, offset) = self.frame_offset(frame)?;
        let kin = self.kinematics(state, true);
        let ad = to_dyn(&offset.inverse().adjoint());
        Ok((&ad * &kin.jacobians[body], &ad * &kin.rates[body]))
    }

    fn bodies(&self) -> impl Iterator<Item = &BodyInertia> {
        std::iter::once(&self.base).chain(self.links.iter().map(|l| &l.inertia))
    }

    /// `M`, `C`, `C·ν` and `G` of `M ν̇ + C ν + G = τ + τ_ext`.
    ///
    /// `C = Σ Jᵢᵀ (Iᵢ J̇ᵢ + (Iᵢ ad_{Vᵢ} − ad_{Vᵢ}ᵀ Iᵢ) Jᵢ)`, which keeps
    /// `Ṁ − 2C` skew-symmetric.
    pub fn dynamics_quantities(&self, state: &RobotState) -> Result<DynamicsQuantities, ModelError> {
        self.check_state(state)?;
        let n = self.dof();
        let kin = self.kinematics(state, true);
        let mut mass = DMatrix::zeros(n, n);
        let mut coriolis = DMatrix::zeros(n, n);
        let mut gravity = DVector::zeros(n);
        for (i, body) in self.bodies().enumerate() {
            let inertia = body.spatial();
            let j = &kin.jacobians[i];
            let jd = &kin.rates[i];
            let v = j * &state.velocity;
            let v6 = Vector6::from_column_slice(v.as_slice());
            let adv = ad(&v6);
            let skew = inertia * adv - adv.transpose() * inertia;
            let jt = j.transpose();
            mass += &jt * inertia * j;
            coriolis += &jt * (inertia * jd + skew * j);

            let f = kin.poses[i].r().transpose() * self.gravity * body.mass;
            let mut w = Vector6::zeros();
            w.fixed_rows_mut::<3>(0).copy_from(&f);
            w.fixed_rows_mut::<3>(3).copy_from(&body.com.cross(&f));
            gravity -= jt * w;
        }
        // exact symmetry
        let mass = (&mass + mass.transpose()) * 0.5;
        let coriolis_force = &coriolis * &state.velocity;
        Ok(DynamicsQuantities {
            mass,
            coriolis,
            coriolis_force,
            gravity,
        })
    }

    /// `½ νᵀ M ν`.
    pub fn kinetic_energy(&self, state: &RobotState) -> f64 {
        let kin = self.kinematics(state, false);
        self.bodies()
            .enumerate()
            .map(|(i, b)| {
                let v = Vector6::from_column_slice((&kin.jacobians[i] * &state.velocity).as_slice());
                0.5 * v.dot(&(b.spatial() * v))
            })
            .sum()
    }

    /// Gravitational potential energy with `G = ∂U/∂q`.
    pub fn potential_energy(&self, state: &RobotState) -> f64 {
        let kin = self.kinematics(state, false);
        self.bodies()
            .enumerate()
            .map(|(i, b)| -b.mass * self.gravity.dot(&kin.poses[i].transform_point(&b.com)))
            .sum()
    }

    /// One semi-implicit Euler step: `ν` first, then the configuration with
    /// the updated velocity.
    pub fn step_dynamics(
        &self,
        state: &RobotState,
        tau: &DVector<f64>,
        dt: f64,
    ) -> Result<RobotState, StepError> {
        let dq = self.dynamics_quantities(state)?;
        let rhs = tau + &state.tau_ext - &dq.coriolis_force - &dq.gravity;
        let acc = solve_spd(&dq.mass, &rhs)?;
        let velocity = &state.velocity + acc * dt;
        let next = self.advance_configuration(state, &velocity, dt);
        if !next.is_finite() {
            return Err(DynamicsError::NonFinite.into());
        }
        Ok(next)
    }

    /// Moves the configuration along `velocity` for `dt`, keeping the base on
    /// SE(3).
    pub fn advance_configuration(&self, state: &RobotState, velocity: &DVector<f64>, dt: f64) -> RobotState {
        let base_twist = Twist::from_vector(&Vector6::from_column_slice(&velocity.as_slice()[..6]));
        let joints = &state.joints + velocity.rows(6, self.links.len()) * dt;
        RobotState {
            base: state.base.integrate(&base_twist, dt),
            joints,
            velocity: velocity.clone(),
            tau_ext: state.tau_ext.clone(),
        }
    }
}

/// Error of [`RobotModel::step_dynamics`].
#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Dynamic copy of a 6×6 matrix.
pub fn to_dyn(m: &Matrix6<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(6, 6, m.as_slice())
}

/// Cholesky solve with a condition-number report on failure.
pub fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.solve(rhs)),
        None => {
            let eig = m.clone().symmetric_eigenvalues();
            let (lo, hi) = (eig.amin(), eig.amax());
            Err(DynamicsError::MassMatrix {
                condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
            })
        }
    }
}

/// Per-body kinematic quantities; index 0 is the base, `i + 1` is link `i`.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub poses: Vec<Pose>,
    pub jacobians: Vec<DMatrix<f64>>,
    pub rates: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct DynamicsQuantities {
    pub mass: DMatrix<f64>,
    pub coriolis: DMatrix<f64>,
    pub coriolis_force: DVector<f64>,
    pub gravity: DVector<f64>,
}

/// Generalized state of a floating-base robot.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub base: Pose,
    pub joints: DVector<f64>,
    /// `ν = (V_b, θ̇)`.
    pub velocity: DVector<f64>,
    pub tau_ext: DVector<f64>,
}

impl RobotState {
    pub fn at_rest(base: Pose, joints: DVector<f64>) -> Self {
        let n = 6 + joints.len();
        RobotState {
            base,
            joints,
            velocity: DVector::zeros(n),
            tau_ext: DVector::zeros(n),
        }
    }

    pub fn base_twist(&self) -> Twist {
        Twist::from_vector(&Vector6::from_column_slice(&self.velocity.as_slice()[..6]))
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.base.position.iter().all(|x| x.is_finite())
            && self.base.r().iter().all(|x| x.is_finite())
    }

    /// Configuration displaced along `direction` (a generalized velocity) for
    /// time `h`; velocity and external torque are kept.
    pub fn displaced(&self, direction: &DVector<f64>, h: f64) -> RobotState {
        let base_twist = Twist::from_vector(&Vector6::from_column_slice(&direction.as_slice()[..6]));
        let nj = self.joints.len();
        RobotState {
            base: self.base * exp_se3(&base_twist, h),
            joints: &self.joints + direction.rows(6, nj) * h,
            velocity: self.velocity.clone(),
            tau_ext: self.tau_ext.clone(),
        }
    }
}

/// Master haptic device: a damped free rigid body.
#[derive(Clone, Debug, PartialEq)]
pub struct MasterDevice {
    pub model: RobotModel,
    /// Viscous damping on the body twist.
    pub damping: Matrix6<f64>,
}

impl MasterDevice {
    pub fn new(mass: f64, rotational_inertia: f64, linear_damping: f64, angular_damping: f64) -> Self {
        let inertia = BodyInertia::new(mass, Vector3::zeros(), Matrix3::identity() * rotational_inertia);
        let mut damping = Matrix6::zeros();
        for i in 0..3 {
            damping[(i, i)] = linear_damping;
            damping[(i + 3, i + 3)] = angular_damping;
        }
        MasterDevice {
            model: RobotModel::rigid_body(inertia),
            damping,
        }
    }

    pub fn rest_state(&self) -> RobotState {
        self.model.home_state(Pose::identity())
    }
}

impl Default for MasterDevice {
    fn default() -> Self {
        MasterDevice::new(2.0, 0.2, 4.0, 0.4)
    }
}

/// Advances the master under the operator wrench and the applied feedback
/// wrench (both body-frame) and returns the new state and body twist.
pub fn master_device_step(
    master: &MasterDevice,
    state: &RobotState,
    operator: &Vector6<f64>,
    feedback: &Vector6<f64>,
    dt: f64,
) -> Result<(RobotState, Twist), StepError> {
    let v = Vector6::from_column_slice(&state.velocity.as_slice()[..6]);
    let ext = operator + feedback - master.damping * v;
    let mut s = state.clone();
    s.tau_ext = DVector::from_column_slice(ext.as_slice());
    let zero = DVector::zeros(6);
    let mut next = master.model.step_dynamics(&s, &zero, dt)?;
    next.tau_ext = DVector::zeros(6);
    let twist = next.base_twist();
    Ok((next, twist))
}

#[derive(Serialize, Deserialize)]
struct PoseDocument {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

impl PoseDocument {
    fn to_pose(&self) -> Pose {
        Pose::new(
            Rotation::from_rpy(self.rpy[0], self.rpy[1], self.rpy[2]),
            Vector3::from(self.xyz),
        )
    }

    fn from_pose(p: &Pose) -> Self {
        let (r, pi, y) = nalgebra::Rotation3::from_matrix_unchecked(*p.r()).euler_angles();
        PoseDocument {
            xyz: p.position.into(),
            rpy: [r, pi, y],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct InertiaDocument {
    mass: f64,
    #[serde(default)]
    com: [f64; 3],
    inertia: [[f64; 3]; 3],
}

impl InertiaDocument {
    fn to_inertia(&self) -> BodyInertia {
        let i = &self.inertia;
        BodyInertia::new(
            self.mass,
            Vector3::from(self.com),
            Matrix3::new(i[0][0], i[0][1], i[0][2], i[1][0], i[1][1], i[1][2], i[2][0], i[2][1], i[2][2]),
        )
    }

    fn from_inertia(b: &BodyInertia) -> Self {
        let m = &b.inertia;
        InertiaDocument {
            mass: b.mass,
            com: b.com.into(),
            inertia: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LinkDocument {
    name: String,
    joint: JointType,
    axis: [f64; 3],
    origin: PoseDocument,
    #[serde(flatten)]
    inertia: InertiaDocument,
}

/// On-disk robot model, see `README.md` for the schema.
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema: String,
    name: String,
    gravity: [f64; 3],
    base: InertiaDocument,
    camera: PoseDocument,
    end_effector: PoseDocument,
    #[serde(default)]
    links: Vec<LinkDocument>,
}

impl ModelDocument {
    fn into_model(self) -> Result<RobotModel, ModelError> {
        if self.schema != MODEL_SCHEMA {
            return Err(ModelError::Schema(self.schema));
        }
        let model = RobotModel {
            name: self.name,
            base: self.base.to_inertia(),
            links: self
                .links
                .iter()
                .map(|l| Link {
                    name: l.name.clone(),
                    joint: l.joint,
                    axis: Vector3::from(l.axis),
                    origin: l.origin.to_pose(),
                    inertia: l.inertia.to_inertia(),
                })
                .collect(),
            end_effector: self.end_effector.to_pose(),
            camera: self.camera.to_pose(),
            gravity: Vector3::from(self.gravity),
        };
        model.validate()?;
        Ok(model)
    }

    fn from_model(m: &RobotModel) -> Self {
        ModelDocument {
            schema: MODEL_SCHEMA.into(),
            name: m.name.clone(),
            gravity: m.gravity.into(),
            base: InertiaDocument::from_inertia(&m.base),
            camera: PoseDocument::from_pose(&m.camera),
            end_effector: PoseDocument::from_pose(&m.end_effector),
            links: m
                .links
                .iter()
                .map(|l| LinkDocument {
                    name: l.name.clone(),
                    joint: l.joint,
                    axis: l.axis.into(),
                    origin: PoseDocument::from_pose(&l.origin),
                    inertia: InertiaDocument::from_inertia(&l.inertia),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn home_pose_by_construction() {
        let model = RobotModel::aerial_manipulator();
        let s = model.home_state(Pose::identity());
        let ee = model.forward_kinematics(&s, Frame::EndEffector).unwrap();
        assert_relative_eq!(ee.position, Vector3::new(0.5, 0.0, -1.1), epsilon = 1e-15);
        assert_eq!(*ee.r(), Matrix3::identity());

        let moved = model.home_state(Pose::from_translation(1.0, 2.0, 3.0));
        let ee2 = model.forward_kinematics(&moved, Frame::EndEffector).unwrap();
        assert_relative_eq!(ee2.position, ee.position + Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-14);
    }

    #[test]
    fn unknown_frame_is_rejected() {
        let model = RobotModel::aerial_manipulator();
        let s = model.home_state(Pose::identity());
        assert!(matches!(
            model.forward_kinematics(&s, Frame::Link(7)),
            Err(ModelError::UnknownFrame(_))
        ));
        assert!("link9x".parse::<Frame>().is_err());
        assert_eq!("link2".parse::<Frame>().unwrap(), Frame::Link(2));
    }

    #[test]
    fn base_jacobian_is_identity_block() {
        let model = RobotModel::aerial_manipulator();
        let mut s = model.home_state(Pose::identity());
        s.joints = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let jb = model.body_jacobian(&s, Frame::Base).unwrap();
        assert_eq!(jb.view((0, 0), (6, 6)).clone_owned(), DMatrix::identity(6, 6));
        assert_eq!(jb.view((0, 6), (6, 3)).norm(), 0.0);
    }

    #[test]
    fn rest_state_has_no_coriolis() {
        let model = RobotModel::aerial_manipulator();
        let mut s = model.home_state(Pose::identity());
        s.joints = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let dq = model.dynamics_quantities(&s).unwrap();
        assert_eq!(dq.coriolis_force.norm(), 0.0);
    }

    #[test]
    fn gravity_compensation_holds_still() {
        let model = RobotModel::aerial_manipulator();
        let mut s = model.home_state(Pose::from_translation(0.0, 0.0, 2.0));
        s.joints = DVector::from_vec(vec![0.4, 0.3, -0.9]);
        for _ in 0..100 {
            let g = model.dynamics_quantities(&s).unwrap().gravity;
            s = model.step_dynamics(&s, &g, 1e-3).unwrap();
        }
        assert!(s.velocity.amax() < 1e-10, "{}", s.velocity.amax());
    }

    #[test]
    fn mass_matrix_solve_failure_reports_condition() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = solve_spd(&m, &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, DynamicsError::MassMatrix { .. }));
    }

    #[test]
    fn model_document_roundtrip() {
        let model = RobotModel::aerial_manipulator();
        let text = model.to_toml();
        let back = RobotModel::from_toml(&text).unwrap();
        assert_eq!(back.links.len(), 3);
        assert_relative_eq!(back.base.inertia, model.base.inertia);
        assert_relative_eq!(back.links[1].origin.position, model.links[1].origin.position);
        assert_relative_eq!(*back.camera.r(), *model.camera.r(), epsilon = 1e-12);
    }

    #[test]
    fn model_document_rejects_bad_input() {
        let model = RobotModel::aerial_manipulator();
        let text = model.to_toml().replace(MODEL_SCHEMA, "other/9");
        assert!(matches!(RobotModel::from_toml(&text), Err(ModelError::Schema(_))));
        let text = model.to_toml().replacen("mass = 80.0", "mass = -1.0", 1);
        assert!(matches!(RobotModel::from_toml(&text), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn master_examples() {
        let master = MasterDevice::default();
        let s = master.rest_state();
        let (s1, v) = master_device_step(&master, &s, &Vector6::zeros(), &Vector6::zeros(), 1e-3).unwrap();
        assert_eq!(v.to_vector(), Vector6::zeros());
        assert_eq!(s1.base, Pose::identity());
    }
}
