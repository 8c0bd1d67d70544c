//! Rigid-body geometry on SO(3) and SE(3).
//!
//! Twists and wrenches are stored linear-part first: a twist is `(v, ω)` and a
//! wrench is `(f, τ)`. All controller quantities are body-frame unless a
//! [`TwistFrame::Spatial`] tag says otherwise.

use nalgebra::{Matrix3, Matrix4, Matrix6, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Below this rotation angle (rad) the exponential coefficients switch to
/// their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-5;

/// Skew-symmetry tolerance accepted by [`vee`].
pub const SKEW_TOLERANCE: f64 = 1e-9;

/// Maps `w` to the skew matrix with `hat(w) * u == w.cross(u)`.
#[rustfmt::skip]
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
         0.0, -w.z,  w.y,
         w.z,  0.0, -w.x,
        -w.y,  w.x,  0.0,
    )
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds
/// [`SKEW_TOLERANCE`].
pub fn vee(s: &Matrix3<f64>) -> Result<Vector3<f64>, GeometryError> {
    let asym = (s + s.transpose()).norm();
    if asym > SKEW_TOLERANCE {
        return Err(GeometryError::NotSkew(asym));
    }
    Ok(Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// Projects a near-rotation matrix onto SO(3) (polar decomposition).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

/// Element of SO(3) stored as an orthonormal matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps `m` after projecting it onto SO(3).
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        Rotation(orthonormalize(&m))
    }

    /// Wraps `m` without projection. The caller guarantees orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Rotation(exp_so3(&(axis * (angle / n))))
    }

    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Rotation(*Rotation3::from_euler_angles(roll, pitch, yaw).matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Rotation vector `θ·axis` with `θ ∈ [0, π]`.
    pub fn log(&self) -> Vector3<f64> {
        log_so3(&self.0)
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.0,
        ));
        UnitQuaternion::new(q.w, Vector3::new(q.i, q.j, q.k))
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Rigid transform `(R, p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    pub position: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Rotation, position: Vector3<f64>) -> Self {
        Pose { rotation, position }
    }

    pub fn identity() -> Self {
        Pose::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(Rotation::identity(), Vector3::new(x, y, z))
    }

    pub fn r(&self) -> &Matrix3<f64> {
        self.rotation.matrix()
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt.matrix() * self.position))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r() * p + self.position
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.r());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// Adjoint map `Ad_g` acting on `(v, ω)` twists.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.r();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        ad.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(hat(&self.position) * r));
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        ad
    }

    /// One step of `ġ = g·[V]^` (body twist) or `ġ = [V]^·g` (spatial twist),
    /// followed by re-orthonormalization.
    pub fn integrate(&self, twist: &Twist, dt: f64) -> Pose {
        let step = exp_se3(twist, dt);
        let mut g = match twist.frame {
            TwistFrame::Body => *self * step,
            TwistFrame::Spatial => step * *self,
        };
        g.rotation = Rotation::from_matrix(*g.r());
        g
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            Rotation::from_matrix_unchecked(self.r() * rhs.r()),
            self.r() * rhs.position + self.position,
        )
    }
}

/// Free function form of [`Pose::integrate`].
pub fn integrate_pose(g: &Pose, twist: &Twist, dt: f64) -> Pose {
    g.integrate(twist, dt)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwistFrame {
    #[default]
    Body,
    Spatial,
}

/// Rigid-body velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
    pub frame: TwistFrame,
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn body(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Twist {
            linear,
            angular,
            frame: TwistFrame::Body,
        }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist::body(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.linear);
        v.fixed_rows_mut::<3>(3).copy_from(&self.angular);
        v
    }

    /// 4×4 matrix form `[V]^`.
    pub fn hat(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&self.angular));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.linear);
        m
    }
}

/// Body force-torque pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Wrench { force, torque }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Wrench::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.force);
        v.fixed_rows_mut::<3>(3).copy_from(&self.torque);
        v
    }
}

/// Lie bracket matrix `ad_V` for `(v, ω)` ordering.
pub fn ad(v: &Vector6<f64>) -> Matrix6<f64> {
    let lin = hat(&v.fixed_rows::<3>(0).into());
    let ang = hat(&v.fixed_rows::<3>(3).into());
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&ang);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&lin);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&ang);
    m
}

/// Coefficients `(sinθ/θ, (1−cosθ)/θ², (θ−sinθ)/θ³)`.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (1.0 - c) / (theta * theta), (theta - s) / (theta * theta * theta))
    }
}

/// Rodrigues formula for `exp(ŵ)`.
pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, _) = exp_coefficients(w.norm());
    let wh = hat(w);
    Matrix3::identity() + wh * a + wh * wh * b
}

/// Inverse of [`exp_so3`], accurate for small angles and near a half turn.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    // 2 sinθ · axis
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let c = 0.5 * (r.trace() - 1.0);
    let sin = s.norm();
    let theta = sin.atan2(c);
    if theta < SMALL_ANGLE {
        return s * (1.0 + theta * theta / 6.0);
    }
    if std::f64::consts::PI - theta > 1e-4 {
        return s * (theta / sin);
    }
    // near π the antisymmetric part vanishes; recover the axis from R + I
    let b = (r + Matrix3::identity()) * 0.5;
    let k = (0..3).max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)])).unwrap_or(0);
    let mut axis: Vector3<f64> = b.column(k).into();
    axis /= axis.norm();
    if axis.dot(&s) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// `exp([V]^·dt)` in closed form.
pub fn exp_se3(twist: &Twist, dt: f64) -> Pose {
    let w = twist.angular * dt;
    let u = twist.linear * dt;
    let (a, b, c) = exp_coefficients(w.norm());
    let wh = hat(&w);
    let wh2 = wh * wh;
    let r = Matrix3::identity() + wh * a + wh2 * b;
    let left_jacobian = Matrix3::identity() + wh * b + wh2 * c;
    Pose::new(Rotation::from_matrix_unchecked(r), left_jacobian * u)
}

/// Inverse of `exp_se3(·, 1)` for rotation angles below π.
pub fn log_se3(g: &Pose) -> Twist {
    let w = g.rotation.log();
    let theta = w.norm();
    let wh = hat(&w);
    let coeff = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let (s, c) = theta.sin_cos();
        (1.0 - theta * s / (2.0 * (1.0 - c))) / (theta * theta)
    };
    let inv_left = Matrix3::identity() - wh * 0.5 + wh * wh * coeff;
    Twist::body(inv_left * g.position, w)
}

/// Unit quaternion `(η, ε)` with the canonical sign used for error signals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    pub eta: f64,
    pub eps: Vector3<f64>,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        UnitQuaternion {
            eta: 1.0,
            eps: Vector3::zeros(),
        }
    }

    /// Normalizes and canonicalizes: `η ≥ 0`, and for `η == 0` the first
    /// nonzero component of `ε` is positive.
    pub fn new(eta: f64, eps: Vector3<f64>) -> Self {
        let norm = (eta * eta + eps.norm_squared()).sqrt();
        let (mut eta, mut eps) = (eta / norm, eps / norm);
        let flip = if eta < 0.0 {
            true
        } else if eta == 0.0 {
            eps.iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0)
        } else {
            false
        };
        if flip {
            eta = -eta;
            eps = -eps;
        }
        // avoid -0.0 in logs
        UnitQuaternion { eta: eta + 0.0, eps }
    }

    pub fn norm_error(&self) -> f64 {
        (self.eta * self.eta + self.eps.norm_squared() - 1.0).abs()
    }

    pub fn to_rotation(&self) -> Rotation {
        let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            self.eta, self.eps.x, self.eps.y, self.eps.z,
        ));
        Rotation::from_matrix_unchecked(*q.to_rotation_matrix().matrix())
    }
}

/// `g_E = g_des⁻¹·g` together with the canonical quaternion of `R_E`.
pub fn pose_error(g_des: &Pose, g: &Pose) -> (Pose, UnitQuaternion) {
    let e = g_des.inverse() * *g;
    let q = e.rotation.to_quaternion();
    (e, q)
}

/// `E(η, ε) = η·I₃ − ε̂`.
pub fn e_matrix(q: &UnitQuaternion) -> Matrix3<f64> {
    Matrix3::identity() * q.eta - hat(&q.eps)
}
