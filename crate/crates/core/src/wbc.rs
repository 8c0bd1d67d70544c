//! Hierarchical whole-body control: the end-effector pose is the primary task
//! and the base pose acts in its dynamically consistent null space.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};

use crate::error::ControlError;
use crate::geometry::{e_matrix, pose_error, Pose, Twist, Wrench};
use crate::robot::{Frame, RobotModel, RobotState, TASK_DIM};

/// Numerical settings of the decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct WbcSettings {
    /// Smallest admissible singular value of the task Jacobian.
    pub min_singular_value: f64,
    /// Largest admissible condition number of `Z M Zᵀ`.
    pub max_condition: f64,
    /// Above this condition number of `J̄` the damped solve is used.
    pub damping_threshold: f64,
    /// Damping factor of the fallback solve.
    pub damping: f64,
    /// Time step of the central differences for `Ṅ`.
    pub fd_step: f64,
}

impl Default for WbcSettings {
    fn default() -> Self {
        WbcSettings {
            min_singular_value: 1e-6,
            max_condition: 1e10,
            damping_threshold: 1e10,
            damping: 1e-6,
            fd_step: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerGains {
    pub kp_x: Matrix3<f64>,
    pub ko_x: Matrix3<f64>,
    pub kd_x: Matrix6<f64>,
    pub kp_b: Matrix3<f64>,
    pub ko_b: Matrix3<f64>,
    pub kd_b: Matrix6<f64>,
    /// Scale on `K_Pb`/`K_Ob` in the wrench fed back to the operator.
    pub wall_scale: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            kp_x: Matrix3::identity() * 500.0,
            ko_x: Matrix3::identity() * 50.0,
            kd_x: Matrix6::identity() * 50.0,
            kp_b: Matrix3::identity() * 200.0,
            ko_b: Matrix3::identity() * 20.0,
            kd_b: Matrix6::identity() * 40.0,
            wall_scale: 1.0,
        }
    }
}

fn is_spd<const D: usize>(m: &nalgebra::SMatrix<f64, D, D>) -> bool
where
    nalgebra::Const<D>: nalgebra::DimMin<nalgebra::Const<D>, Output = nalgebra::Const<D>>,
{
    (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0) && m.cholesky().is_some()
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let ok = is_spd(&self.kp_x)
            && is_spd(&self.ko_x)
            && is_spd(&self.kd_x)
            && is_spd(&self.kp_b)
            && is_spd(&self.ko_b)
            && is_spd(&self.kd_b);
        if !ok {
            return Err(ControlError::Dimension(
                "gain matrices must be symmetric positive definite".into(),
            ));
        }
        if !(self.wall_scale >= 0.0 && self.wall_scale.is_finite()) {
            return Err(ControlError::Dimension("wall scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Orthonormal null-space basis `Z` of `J` (rows span `ker J`).
///
/// The raw SVD basis is rotated onto `reference` by orthogonal Procrustes so
/// that consecutive control steps see a continuous basis. Without a
/// reference, the basis is aligned with the trailing coordinate axes.
pub fn null_space_base(
    j: &DMatrix<f64>,
    reference: Option<&DMatrix<f64>>,
    min_singular_value: f64,
) -> Result<DMatrix<f64>, ControlError> {
    let (m, n) = j.shape();
    if m >= n {
        return Err(ControlError::Dimension(format!("Jacobian {m}×{n} has no null space")));
    }
    let r = n - m;
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (m, n)).copy_from(j);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let task_sv: Vec<f64> = order[..m].iter().map(|&i| svd.singular_values[i]).collect();
    if task_sv.last().copied().unwrap_or(0.0) <= min_singular_value {
        return Err(ControlError::Singular {
            singular_values: task_sv,
        });
    }
    let mut raw = DMatrix::zeros(r, n);
    for (row, &i) in order[m..].iter().enumerate() {
        raw.row_mut(row).copy_from(&v_t.row(i));
    }

    let fallback;
    let target = match reference {
        Some(z) if z.shape() == (r, n) => z,
        _ => {
            let mut e = DMatrix::zeros(r, n);
            e.view_mut((0, m), (r, r)).fill_with_identity();
            fallback = e;
            &fallback
        }
    };
    // min ‖Q·raw − target‖ over orthogonal Q: Q = U Vᵀ with target·rawᵀ = U S Vᵀ
    let cross = target * raw.transpose();
    let svd = cross.svd(true, true);
    let q = svd.u.expect("u") * svd.v_t.expect("v_t");
    Ok(q * raw)
}

/// `N = (Z M Zᵀ)⁻¹ Z M`.
pub fn null_space_velocity_map(
    z: &DMatrix<f64>,
    mass: &DMatrix<f64>,
    max_condition: f64,
) -> Result<DMatrix<f64>, ControlError> {
    let zm = z * mass;
    let lambda_n = &zm * z.transpose();
    let eig = lambda_n.clone().symmetric_eigenvalues();
    let condition = if eig.min() > 0.0 {
        eig.max() / eig.min()
    } else {
        f64::INFINITY
    };
    if condition > max_condition {
        return Err(ControlError::Conditioning { condition });
    }
    let chol = lambda_n
        .cholesky()
        .ok_or(ControlError::Conditioning { condition })?;
    Ok(chol.solve(&zm))
}

/// Everything the controller needs at one control tick.
#[derive(Clone, Debug)]
pub struct TaskDecomposition {
    pub j: DMatrix<f64>,
    pub j_dot: DMatrix<f64>,
    pub jb: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub n_dot: DMatrix<f64>,
    pub jbar: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub mu: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub coriolis: DMatrix<f64>,
    pub gravity: DVector<f64>,
    /// `J̄ ν`.
    pub velocity: DVector<f64>,
    pub ee_pose: Pose,
    pub base_pose: Pose,
    pub condition: f64,
    /// The damped fallback solve was used.
    pub damped: bool,
}

impl TaskDecomposition {
    pub fn dof(&self) -> usize {
        self.j.ncols()
    }

    pub fn null_dim(&self) -> usize {
        self.dof() - TASK_DIM
    }

    pub fn lambda_x(&self) -> DMatrix<f64> {
        self.lambda.view((0, 0), (TASK_DIM, TASK_DIM)).clone_owned()
    }

    pub fn lambda_n(&self) -> DMatrix<f64> {
        let r = self.null_dim();
        self.lambda.view((TASK_DIM, TASK_DIM), (r, r)).clone_owned()
    }

    pub fn mu_x(&self) -> DMatrix<f64> {
        self.mu.view((0, 0), (TASK_DIM, TASK_DIM)).clone_owned()
    }

    pub fn mu_xn(&self) -> DMatrix<f64> {
        self.mu.view((0, TASK_DIM), (TASK_DIM, self.null_dim())).clone_owned()
    }

    pub fn mu_nx(&self) -> DMatrix<f64> {
        self.mu.view((TASK_DIM, 0), (self.null_dim(), TASK_DIM)).clone_owned()
    }

    pub fn mu_n(&self) -> DMatrix<f64> {
        let r = self.null_dim();
        self.mu.view((TASK_DIM, TASK_DIM), (r, r)).clone_owned()
    }

    /// End-effector body twist `V_x`.
    pub fn vx(&self) -> Twist {
        Twist::from_vector(&Vector6::from_column_slice(&self.velocity.as_slice()[..TASK_DIM]))
    }

    /// Null-space velocity `V_n`.
    pub fn vn(&self) -> DVector<f64> {
        self.velocity.rows(TASK_DIM, self.null_dim()).clone_owned()
    }

    /// Base body twist `J_b ν`.
    pub fn base_twist(&self, state: &RobotState) -> Twist {
        Twist::from_vector(&Vector6::from_column_slice((&self.jb * &state.velocity).as_slice()))
    }
}

/// Solver for `J̄ x = b` and `J̄ᵀ x = b` with a damped fallback.
struct ExtendedSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    damped: Option<(DMatrix<f64>, f64)>,
}

impl ExtendedSolver {
    fn new(jbar: &DMatrix<f64>, settings: &WbcSettings) -> (Self, f64) {
        let sv = jbar.clone().singular_values();
        let condition = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
        let damped = (condition > settings.damping_threshold).then(|| (jbar.clone(), settings.damping));
        (
            ExtendedSolver {
                lu: jbar.clone().lu(),
                lu_t: jbar.transpose().lu(),
                damped,
            },
            condition,
        )
    }

    /// `J̄⁻¹ b`.
    fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.damped {
            Some((a, l)) => damped_solve(a, b, *l),
            None => self.lu.solve(b).expect("J̄ is invertible"),
        }
    }

    /// `J̄⁻ᵀ b`.
    fn solve_t(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.damped {
            Some((a, l)) => damped_solve(&a.transpose(), b, *l),
            None => self.lu_t.solve(b).expect("J̄ᵀ is invertible"),
        }
    }
}

fn damped_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = a.ncols();
    let lhs = a.transpose() * a + DMatrix::identity(n, n) * (lambda * lambda);
    lhs.cholesky().expect("damped system is SPD").solve(&(a.transpose() * b))
}

fn extended_jacobian(j: &DMatrix<f64>, n: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = j.ncols();
    let mut jbar = DMatrix::zeros(cols, cols);
    jbar.view_mut((0, 0), (j.nrows(), cols)).copy_from(j);
    jbar.view_mut((j.nrows(), 0), (n.nrows(), cols)).copy_from(n);
    jbar
}

/// Null-space basis and velocity map at `state`.
fn null_space_at(
    model: &RobotModel,
    state: &RobotState,
    reference: Option<&DMatrix<f64>>,
    settings: &WbcSettings,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ControlError> {
    let j = model
        .body_jacobian(state, Frame::EndEffector)
        .map_err(|e| ControlError::Dimension(e.to_string()))?;
    let mass = model
        .dynamics_quantities(state)
        .map_err(|e| ControlError::Dimension(e.to_string()))?
        .mass;
    let z = null_space_base(&j, reference, settings.min_singular_value)?;
    let n = null_space_velocity_map(&z, &mass, settings.max_condition)?;
    Ok((z, n))
}

/// Block-decoupled task-space dynamics at `state`.
///
/// `previous_z` is the basis used on the previous tick; the new basis is
/// aligned to it.
pub fn decompose(
    model: &RobotModel,
    state: &RobotState,
    previous_z: Option<&DMatrix<f64>>,
    settings: &WbcSettings,
) -> Result<TaskDecomposition, ControlError> {
    let dim_err = |e: crate::error::ModelError| ControlError::Dimension(e.to_string());
    if !model.is_redundant() {
        return Err(ControlError::Dimension("model is not kinematically redundant".into()));
    }
    let dq = model.dynamics_quantities(state).map_err(dim_err)?;
    let kin = model.kinematics(state, true);
    let ee_offset = model.end_effector.inverse().adjoint();
    let ee_ad = crate::robot::to_dyn(&ee_offset);
    let last = model.links.len();
    let j = &ee_ad * &kin.jacobians[last];
    let j_dot = &ee_ad * &kin.rates[last];
    let jb = kin.jacobians[0].clone();
    let ee_pose = kin.poses[last] * model.end_effector;
    let base_pose = kin.poses[0];

    let z = null_space_base(&j, previous_z, settings.min_singular_value)?;
    let n = null_space_velocity_map(&z, &dq.mass, settings.max_condition)?;

    let h = settings.fd_step;
    let (_, n_plus) = null_space_at(model, &state.displaced(&state.velocity, h), Some(&z), settings)?;
    let (_, n_minus) = null_space_at(model, &state.displaced(&state.velocity, -h), Some(&z), settings)?;
    let n_dot = (n_plus - n_minus) / (2.0 * h);

    let jbar = extended_jacobian(&j, &n);
    let jbar_dot = extended_jacobian(&j_dot, &n_dot);
    let (solver, condition) = ExtendedSolver::new(&jbar, settings);

    // Λ = J̄⁻ᵀ M J̄⁻¹
    let m_jinv = solver.solve_t(&dq.mass).transpose();
    let lambda = solver.solve_t(&m_jinv);
    let lambda = (&lambda + lambda.transpose()) * 0.5;
    // μ = J̄⁻ᵀ (C − M J̄⁻¹ J̄̇) J̄⁻¹
    let p = &dq.coriolis - &dq.mass * solver.solve(&jbar_dot);
    let p_jinv = solver.solve_t(&p.transpose()).transpose();
    let mu = solver.solve_t(&p_jinv);

    let velocity = &jbar * &state.velocity;
    Ok(TaskDecomposition {
        j,
        j_dot,
        jb,
        z,
        n,
        n_dot,
        jbar,
        lambda,
        mu,
        mass: dq.mass,
        coriolis: dq.coriolis,
        gravity: dq.gravity,
        velocity,
        ee_pose,
        base_pose,
        condition,
        damped: solver.damped.is_some(),
    })
}

/// Body velocity of `g_E = g_des⁻¹ g`: `V_E = V − Ad_{g_E⁻¹} V_des`.
pub fn error_twist(g_e: &Pose, v: &Twist, v_des: &Twist) -> Twist {
    let vd = g_e.inverse().adjoint() * v_des.to_vector();
    Twist::from_vector(&(v.to_vector() - vd))
}

/// Pose PD law in the body frame of `g`:
/// `[−R_Eᵀ K_P p_E ; −2 R_Eᵀ E(η, ε)ᵀ K_O ε] − K_D V_E`.
///
/// `v_e` is the body velocity of the error `g_E` (see [`error_twist`]), so
/// the damping term dissipates.
pub fn wrench_pd(
    g_des: &Pose,
    g: &Pose,
    v_e: &Twist,
    kp: &Matrix3<f64>,
    ko: &Matrix3<f64>,
    kd: &Matrix6<f64>,
) -> Wrench {
    let (e, q) = pose_error(g_des, g);
    let rt = e.r().transpose();
    let force = -(rt * kp * e.position);
    let torque = -(rt * e_matrix(&q).transpose() * ko * q.eps) * 2.0;
    let damping = kd * v_e.to_vector();
    Wrench::new(
        force - damping.fixed_rows::<3>(0),
        torque - damping.fixed_rows::<3>(3),
    )
}

/// Stiffness-only part of [`wrench_pd`] with scaled gains.
pub fn wrench_stiffness(g_des: &Pose, g: &Pose, kp: &Matrix3<f64>, ko: &Matrix3<f64>) -> Wrench {
    wrench_pd(g_des, g, &Twist::zero(), kp, ko, &Matrix6::zeros())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlTorques {
    pub tau: DVector<f64>,
    pub tau_x: DVector<f64>,
    pub tau_n: DVector<f64>,
    pub tau_mu: DVector<f64>,
}

/// `τ = Jᵀ F_x + Nᵀ Z J_bᵀ F_b + J̄ᵀ [0 μ_xn; μ_nx 0] (V_x, V_n) + G`.
pub fn control_torques(td: &TaskDecomposition, f_x: &Wrench, f_b: &Wrench, gravity: &DVector<f64>) -> ControlTorques {
    let fx = DVector::from_column_slice(f_x.to_vector().as_slice());
    let fb = DVector::from_column_slice(f_b.to_vector().as_slice());
    let tau_x = td.j.transpose() * fx;
    let tau_n = td.n.transpose() * (&td.z * (td.jb.transpose() * fb));
    let mut cross = td.mu.clone();
    let m = TASK_DIM;
    let r = td.null_dim();
    cross.view_mut((0, 0), (m, m)).fill(0.0);
    cross.view_mut((m, m), (r, r)).fill(0.0);
    let tau_mu = td.jbar.transpose() * (cross * &td.velocity);
    let tau = &tau_x + &tau_n + &tau_mu + gravity;
    ControlTorques {
        tau,
        tau_x,
        tau_n,
        tau_mu,
    }
}

/// Task-space acceleration of the end effector caused by `tau` alone,
/// `J M⁻¹ τ`.
pub fn task_acceleration(td: &TaskDecomposition, tau: &DVector<f64>) -> DVector<f64> {
    let acc = td.mass.clone().cholesky().expect("M is SPD").solve(tau);
    &td.j * acc
}
