//! Rigid-body rotational dynamics and quaternion kinematics.
//!
//! Quaternions are scalar-last, `q = (q1, q2, q3, q4)` with `q4 = cos(θ/2)`.
//! The attitude matrix maps inertial-frame vectors into the body frame.
//! Euler angles follow the aerospace 3-2-1 (yaw, pitch, roll) sequence and are
//! expressed in degrees.

use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3, Vector4};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance on the unit-norm invariant of [`Quaternion`].
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Pitch magnitude (deg) beyond which Euler extraction is treated as gimbal-locked.
pub const GIMBAL_LOCK_PITCH_DEG: f64 = 89.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("inertia moments must be strictly positive and finite, got ({0}, {1}, {2})")]
    InvalidInertia(f64, f64, f64),
    #[error("quaternion has zero or non-finite norm")]
    DegenerateQuaternion,
    #[error("integration diverged: state is no longer finite")]
    Diverged,
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

/// Unit attitude quaternion, scalar last.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Quaternion {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { q1: 0.0, q2: 0.0, q3: 0.0, q4: 1.0 };

    /// Builds a quaternion from raw components and normalizes it.
    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Result<Self, DynamicsError> {
        Quaternion { q1, q2, q3, q4 }.normalized()
    }

    /// Raw components, no normalization. Callers are responsible for the norm.
    pub const fn from_components(q1: f64, q2: f64, q3: f64, q4: f64) -> Self {
        Quaternion { q1, q2, q3, q4 }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self, DynamicsError> {
        let n = axis.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(DynamicsError::DegenerateQuaternion);
        }
        let s = libm::sin(0.5 * angle) / n;
        Quaternion::new(axis.x * s, axis.y * s, axis.z * s, libm::cos(0.5 * angle))
    }

    pub fn from_vector4(v: &Vector4<f64>) -> Self {
        Quaternion { q1: v[0], q2: v[1], q3: v[2], q4: v[3] }
    }

    pub fn to_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.q1, self.q2, self.q3, self.q4)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.q1, self.q2, self.q3, self.q4]
    }

    /// Vector part `(q1, q2, q3)`.
    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.q1, self.q2, self.q3)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.q1 * other.q1 + self.q2 * other.q2 + self.q3 * other.q3 + self.q4 * other.q4
    }

    pub fn normalized(&self) -> Result<Self, DynamicsError> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(DynamicsError::DegenerateQuaternion);
        }
        Ok(Quaternion { q1: self.q1 / n, q2: self.q2 / n, q3: self.q3 / n, q4: self.q4 / n })
    }

    pub fn conjugate(&self) -> Self {
        Quaternion { q1: -self.q1, q2: -self.q2, q3: -self.q3, q4: self.q4 }
    }

    /// Representative of `±q` with a non-negative scalar part.
    pub fn canonical(&self) -> Self {
        if self.q4 < 0.0 {
            -*self
        } else {
            *self
        }
    }

    /// Composition in the attitude-matrix sense: `C(a.compose(b)) = C(a) · C(b)`.
    pub fn compose(&self, b: &Quaternion) -> Quaternion {
        // Successive rotation: first b, then self.
        let a = self;
        Quaternion {
            q1: a.q4 * b.q1 + b.q4 * a.q1 - (a.q2 * b.q3 - a.q3 * b.q2),
            q2: a.q4 * b.q2 + b.q4 * a.q2 - (a.q3 * b.q1 - a.q1 * b.q3),
            q3: a.q4 * b.q3 + b.q4 * a.q3 - (a.q1 * b.q2 - a.q2 * b.q1),
            q4: a.q4 * b.q4 - (a.q1 * b.q1 + a.q2 * b.q2 + a.q3 * b.q3),
        }
    }

    /// Principal rotation angle in radians, in `[0, π]`; sign-independent.
    pub fn angle(&self) -> f64 {
        let c = libm::fabs(self.q4).min(1.0);
        2.0 * libm::atan2(self.vector().norm(), c)
    }

    pub fn is_finite(&self) -> bool {
        self.q1.is_finite() && self.q2.is_finite() && self.q3.is_finite() && self.q4.is_finite()
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Quaternion::IDENTITY
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion { q1: -self.q1, q2: -self.q2, q3: -self.q3, q4: -self.q4 }
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.q1, self.q2, self.q3, self.q4)
    }
}

macro_rules! body_vector {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, PartialEq, Default)]
        #[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
        pub struct $name(pub Vec3);

        impl $name {
            pub const ZERO: $name = $name(Vector3::new(0.0, 0.0, 0.0));

            pub const fn new(x: f64, y: f64, z: f64) -> Self {
                $name(Vector3::new(x, y, z))
            }

            pub fn from_array(v: [f64; 3]) -> Self {
                $name(Vec3::new(v[0], v[1], v[2]))
            }

            pub fn to_array(&self) -> [f64; 3] {
                [self.0.x, self.0.y, self.0.z]
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = $name;
            fn mul(self, rhs: f64) -> $name {
                $name(self.0 * rhs)
            }
        }
    };
}

body_vector!(
    /// Body-frame angular velocity, rad/s.
    AngularVelocity
);
body_vector!(
    /// Body-frame moment, N·m.
    Torque
);

/// Principal moments of inertia, kg·m².
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InertiaTensor {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl InertiaTensor {
    pub fn new(i1: f64, i2: f64, i3: f64) -> Result<Self, DynamicsError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(i1) && ok(i2) && ok(i3)) {
            return Err(DynamicsError::InvalidInertia(i1, i2, i3));
        }
        let inertia = InertiaTensor { i1, i2, i3 };
        if !inertia.satisfies_triangle_inequality() {
            log::warn!("inertia ({i1}, {i2}, {i3}) violates the triangle inequality");
        }
        Ok(inertia)
    }

    pub fn from_array(v: [f64; 3]) -> Result<Self, DynamicsError> {
        InertiaTensor::new(v[0], v[1], v[2])
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.i1, self.i2, self.i3]
    }

    pub fn satisfies_triangle_inequality(&self) -> bool {
        let (a, b, c) = (self.i1, self.i2, self.i3);
        a + b >= c && b + c >= a && a + c >= b
    }

    pub fn as_vector(&self) -> Vec3 {
        Vec3::new(self.i1, self.i2, self.i3)
    }

    /// Body angular momentum `Iω`.
    pub fn momentum(&self, omega: &AngularVelocity) -> Vec3 {
        self.as_vector().component_mul(&omega.0)
    }

    /// Rotational kinetic energy `½ ωᵀ I ω`.
    pub fn kinetic_energy(&self, omega: &AngularVelocity) -> f64 {
        0.5 * omega.0.dot(&self.momentum(omega))
    }
}

/// Attitude and body rate, the simulated plant state.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BodyState {
    pub q: Quaternion,
    pub omega: AngularVelocity,
}

impl BodyState {
    pub fn new(q: Quaternion, omega: AngularVelocity) -> Self {
        BodyState { q, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.omega.is_finite()
    }
}

/// 3-2-1 Euler angles in degrees: roll `phi`, pitch `theta`, yaw `psi`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EulerAngles {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAngles {
    pub const fn new(phi: f64, theta: f64, psi: f64) -> Self {
        EulerAngles { phi, theta, psi }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        EulerAngles::new(v[0], v[1], v[2])
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.phi, self.theta, self.psi]
    }
}

/// Result of extracting Euler angles from a quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerSolution {
    pub angles: EulerAngles,
    /// Set when `|theta|` exceeds [`GIMBAL_LOCK_PITCH_DEG`]; `psi` is then pinned to zero.
    pub gimbal_lock: bool,
}

/// Wraps an angle in degrees to `(-180, 180]`.
pub fn wrap_deg(angle: f64) -> f64 {
    let mut a = libm::fmod(angle, 360.0);
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Euler's rotational equations: body angular acceleration in rad/s².
pub fn dynamics_rhs(state: &BodyState, inertia: &InertiaTensor, mc: &Torque, md: &Torque) -> Vec3 {
    let w = &state.omega.0;
    let (i1, i2, i3) = (inertia.i1, inertia.i2, inertia.i3);
    Vec3::new(
        (mc.0.x + md.0.x - (i3 - i2) * w.y * w.z) / i1,
        (mc.0.y + md.0.y - (i1 - i3) * w.x * w.z) / i2,
        (mc.0.z + md.0.z - (i2 - i1) * w.y * w.x) / i3,
    )
}

/// Quaternion kinematics `q̇ = ½ Ω(ω) q`, returned in `(q1, q2, q3, q4)` order.
pub fn kinematics_rhs(q: &Quaternion, omega: &AngularVelocity) -> Vector4<f64> {
    let (w1, w2, w3) = (omega.0.x, omega.0.y, omega.0.z);
    let (q1, q2, q3, q4) = (q.q1, q.q2, q.q3, q.q4);
    Vector4::new(
        0.5 * (w3 * q2 - w2 * q3 + w1 * q4),
        0.5 * (-w3 * q1 + w1 * q3 + w2 * q4),
        0.5 * (w2 * q1 - w1 * q2 + w3 * q4),
        0.5 * (-w1 * q1 - w2 * q2 - w3 * q3),
    )
}

#[derive(Clone, Copy)]
struct Derivative {
    dq: Vector4<f64>,
    dw: Vec3,
}

fn derivative(q: &Vector4<f64>, w: &Vec3, inertia: &InertiaTensor, mc: &Torque, md: &Torque) -> Derivative {
    let quat = Quaternion::from_vector4(q);
    let omega = AngularVelocity(*w);
    let state = BodyState::new(quat, omega);
    Derivative { dq: kinematics_rhs(&quat, &omega), dw: dynamics_rhs(&state, inertia, mc, md) }
}

/// One classical RK4 step of the coupled attitude/rate equations, torques held
/// constant over the step, followed by quaternion renormalization.
pub fn integrate_step(
    state: &BodyState,
    inertia: &InertiaTensor,
    mc: &Torque,
    md: &Torque,
    dt: f64,
) -> Result<BodyState, DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::InvalidStep(dt));
    }
    if !state.is_finite() {
        return Err(DynamicsError::Diverged);
    }
    let q0 = state.q.to_vector4();
    let w0 = state.omega.0;

    let k1 = derivative(&q0, &w0, inertia, mc, md);
    let k2 = derivative(&(q0 + k1.dq * (0.5 * dt)), &(w0 + k1.dw * (0.5 * dt)), inertia, mc, md);
    let k3 = derivative(&(q0 + k2.dq * (0.5 * dt)), &(w0 + k2.dw * (0.5 * dt)), inertia, mc, md);
    let k4 = derivative(&(q0 + k3.dq * dt), &(w0 + k3.dw * dt), inertia, mc, md);

    let q = q0 + (k1.dq + k2.dq * 2.0 + k3.dq * 2.0 + k4.dq) * (dt / 6.0);
    let w = w0 + (k1.dw + k2.dw * 2.0 + k3.dw * 2.0 + k4.dw) * (dt / 6.0);

    let next = BodyState::new(Quaternion::from_vector4(&q), AngularVelocity(w));
    if !next.is_finite() {
        return Err(DynamicsError::Diverged);
    }
    let q = next.q.normalized().map_err(|_| DynamicsError::Diverged)?;
    Ok(BodyState::new(q, next.omega))
}

/// Attitude matrix `C_I^B` (inertial to body) for a unit quaternion.
pub fn quat_to_dcm(q: &Quaternion) -> Matrix3<f64> {
    let (q1, q2, q3, q4) = (q.q1, q.q2, q.q3, q.q4);
    Matrix3::new(
        1.0 - 2.0 * (q2 * q2 + q3 * q3),
        2.0 * (q1 * q2 + q3 * q4),
        2.0 * (q1 * q3 - q2 * q4),
        2.0 * (q2 * q1 - q3 * q4),
        1.0 - 2.0 * (q1 * q1 + q3 * q3),
        2.0 * (q2 * q3 + q1 * q4),
        2.0 * (q3 * q1 + q2 * q4),
        2.0 * (q3 * q2 - q1 * q4),
        1.0 - 2.0 * (q1 * q1 + q2 * q2),
    )
}

pub fn euler_to_quat(e: &EulerAngles) -> Quaternion {
    let half = |deg: f64| 0.5 * deg.to_radians();
    let (sp, cp) = libm::sincos(half(e.phi));
    let (st, ct) = libm::sincos(half(e.theta));
    let (ss, cs) = libm::sincos(half(e.psi));
    Quaternion {
        q1: sp * ct * cs - cp * st * ss,
        q2: cp * st * cs + sp * ct * ss,
        q3: cp * ct * ss - sp * st * cs,
        q4: cp * ct * cs + sp * st * ss,
    }
}

pub fn quat_to_euler(q: &Quaternion) -> EulerSolution {
    let c = quat_to_dcm(q);
    let s_theta = (-c[(0, 2)]).clamp(-1.0, 1.0);
    let theta = libm::asin(s_theta).to_degrees();
    if libm::fabs(theta) > GIMBAL_LOCK_PITCH_DEG {
        // Only phi ∓ psi is observable; pin psi to zero.
        let phi = libm::atan2(-c[(2, 1)], c[(1, 1)]).to_degrees();
        return EulerSolution { angles: EulerAngles::new(wrap_deg(phi), theta, 0.0), gimbal_lock: true };
    }
    let phi = libm::atan2(c[(1, 2)], c[(2, 2)]).to_degrees();
    let psi = libm::atan2(c[(0, 1)], c[(0, 0)]).to_degrees();
    EulerSolution { angles: EulerAngles::new(wrap_deg(phi), theta, wrap_deg(psi)), gimbal_lock: false }
}

/// Error quaternion of the current attitude `q` relative to the commanded
/// attitude `qc`, so that `C(q) = C(q_e) · C(qc)`. Coincident attitudes give
/// the identity.
pub fn quaternion_error(q: &Quaternion, qc: &Quaternion) -> Quaternion {
    let e = q.compose(&qc.conjugate());
    e.normalized().unwrap_or(Quaternion::IDENTITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_quat() -> impl Strategy<Value = Quaternion> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-degenerate", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
            .prop_map(|(a, b, c, d)| Quaternion::new(a, b, c, d).unwrap())
    }

    fn rates() -> impl Strategy<Value = AngularVelocity> {
        (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b, c)| AngularVelocity::new(a, b, c))
    }

    #[test]
    fn equilibrium_has_zero_acceleration() {
        let inertia = InertiaTensor::new(1.5, 2.6, 3.0).unwrap();
        let s = BodyState::default();
        assert_eq!(dynamics_rhs(&s, &inertia, &Torque::ZERO, &Torque::ZERO), Vec3::zeros());
    }

    #[test]
    fn gyroscopic_term_nominal_inertia() {
        let inertia = InertiaTensor::new(1.5, 2.6, 3.0).unwrap();
        let s = BodyState::new(Quaternion::IDENTITY, AngularVelocity::new(0.0, 1.0, 1.0));
        let wdot = dynamics_rhs(&s, &inertia, &Torque::ZERO, &Torque::ZERO);
        assert_abs_diff_eq!(wdot.x, -(3.0 - 2.6) / 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(wdot.x, -0.26667, epsilon = 1e-5);
        assert_eq!(wdot.y, 0.0);
        assert_eq!(wdot.z, 0.0);
    }

    #[test]
    fn symmetric_body_has_no_gyroscopic_coupling() {
        let inertia = InertiaTensor::new(2.0, 2.0, 2.0).unwrap();
        let s = BodyState::new(Quaternion::IDENTITY, AngularVelocity::new(0.3, -1.1, 0.7));
        assert_eq!(dynamics_rhs(&s, &inertia, &Torque::ZERO, &Torque::ZERO), Vec3::zeros());
    }

    #[test]
    fn inertia_rejects_non_positive() {
        assert!(InertiaTensor::new(0.0, 1.0, 1.0).is_err());
        assert!(InertiaTensor::new(1.0, -1.0, 1.0).is_err());
        assert!(InertiaTensor::new(1.0, 1.0, f64::NAN).is_err());
        // Triangle violation is only a warning.
        let odd = InertiaTensor::new(1.0, 1.0, 5.0).unwrap();
        assert!(!odd.satisfies_triangle_inequality());
    }

    #[test]
    fn kinematics_at_identity() {
        let w = AngularVelocity::new(0.2, -0.4, 0.6);
        let qd = kinematics_rhs(&Quaternion::IDENTITY, &w);
        assert_eq!(qd, Vector4::new(0.1, -0.2, 0.3, 0.0));
        let zero = kinematics_rhs(&Quaternion::new(0.1, 0.2, 0.3, 0.9).unwrap(), &AngularVelocity::ZERO);
        assert_eq!(zero, Vector4::zeros());
    }

    #[test]
    fn rest_state_is_unchanged_by_integration() {
        let inertia = InertiaTensor::new(1.5, 2.6, 3.0).unwrap();
        let s = BodyState::new(Quaternion::new(0.1, 0.2, -0.3, 0.9).unwrap(), AngularVelocity::ZERO);
        let next = integrate_step(&s, &inertia, &Torque::ZERO, &Torque::ZERO, 0.01).unwrap();
        assert_abs_diff_eq!(next.q.to_vector4(), s.q.to_vector4(), epsilon = 1e-12);
        assert_eq!(next.omega, AngularVelocity::ZERO);
    }

    #[test]
    fn symmetric_spin_preserves_rate_magnitude() {
        let inertia = InertiaTensor::new(2.0, 2.0, 2.0).unwrap();
        let mut s = BodyState::new(Quaternion::IDENTITY, AngularVelocity::new(0.1, 0.0, 0.0));
        for _ in 0..2000 {
            s = integrate_step(&s, &inertia, &Torque::ZERO, &Torque::ZERO, 0.01).unwrap();
        }
        assert_abs_diff_eq!(s.omega.0.norm(), 0.1, epsilon = 1e-9);
    }

    #[test]
    fn single_axis_spin_matches_closed_form() {
        let inertia = InertiaTensor::new(1.5, 2.6, 3.0).unwrap();
        let w = 0.7;
        let dt = 0.01;
        let mut s = BodyState::new(Quaternion::IDENTITY, AngularVelocity::new(0.0, 0.0, w));
        for _ in 0..400 {
            s = integrate_step(&s, &inertia, &Torque::ZERO, &Torque::ZERO, dt).unwrap();
        }
        // Closed form: q = (0, 0, sin(wt/2), cos(wt/2)).
        let t = 400.0 * dt;
        assert_abs_diff_eq!(s.q.q3, libm::sin(0.5 * w * t), epsilon = 1e-10);
        assert_abs_diff_eq!(s.q.q4, libm::cos(0.5 * w * t), epsilon = 1e-10);
        assert_abs_diff_eq!(s.q.angle(), w * t, epsilon = 1e-10);
    }

    #[test]
    fn integrate_rejects_bad_inputs() {
        let inertia = InertiaTensor::new(1.5, 2.6, 3.0).unwrap();
        let s = BodyState::default();
        assert_eq!(
            integrate_step(&s, &inertia, &Torque::ZERO, &Torque::ZERO, 0.0),
            Err(DynamicsError::InvalidStep(0.0))
        );
        let bad = BodyState::new(Quaternion::IDENTITY, AngularVelocity::new(f64::INFINITY, 0.0, 0.0));
        assert_eq!(integrate_step(&bad, &inertia, &Torque::ZERO, &Torque::ZERO, 0.01), Err(DynamicsError::Diverged));
        let huge = Torque::new(1e308, 1e308, 1e308);
        let fast = BodyState::new(Quaternion::IDENTITY, AngularVelocity::new(1e300, 1e300, 1e300));
        assert_eq!(integrate_step(&fast, &inertia, &huge, &huge, 0.01), Err(DynamicsError::Diverged));
    }

    #[test]
    fn dcm_of_identity() {
        assert_eq!(quat_to_dcm(&Quaternion::IDENTITY), Matrix3::identity());
    }

    #[test]
    fn dcm_quarter_turn_about_z() {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let q = Quaternion::new(0.0, 0.0, h, h).unwrap();
        let c = quat_to_dcm(&q);
        // A frame yawed +90°: the inertial x axis is seen along body -y.
        let v = c * Vec3::x();
        assert_abs_diff_eq!(v, -Vec3::y(), epsilon = 1e-15);
        assert_abs_diff_eq!((c * Vec3::new(1.0, 2.0, 3.0)).norm(), 14f64.sqrt(), epsilon = 1e-12);
        // Matches the single-axis 3-rotation matrix.
        let e = euler_to_quat(&EulerAngles::new(0.0, 0.0, 90.0));
        assert_abs_diff_eq!(e.to_vector4(), q.to_vector4(), epsilon = 1e-15);
    }

    #[test]
    fn dcm_matches_euler_sequence_product() {
        // C = R1(phi) R2(theta) R3(psi), the 3-2-1 sequence.
        let (phi, theta, psi) = (10f64.to_radians(), 5f64.to_radians(), 10f64.to_radians());
        let r1 = Matrix3::new(1.0, 0.0, 0.0, 0.0, phi.cos(), phi.sin(), 0.0, -phi.sin(), phi.cos());
        let r2 = Matrix3::new(theta.cos(), 0.0, -theta.sin(), 0.0, 1.0, 0.0, theta.sin(), 0.0, theta.cos());
        let r3 = Matrix3::new(psi.cos(), psi.sin(), 0.0, -psi.sin(), psi.cos(), 0.0, 0.0, 0.0, 1.0);
        let q = euler_to_quat(&EulerAngles::new(10.0, 5.0, 10.0));
        assert_abs_diff_eq!(quat_to_dcm(&q), r1 * r2 * r3, epsilon = 1e-14);
    }

    #[test]
    fn euler_round_trip_table_condition() {
        assert_eq!(euler_to_quat(&EulerAngles::new(0.0, 0.0, 0.0)), Quaternion::IDENTITY);
        let e = EulerAngles::new(10.0, 5.0, 10.0);
        let back = quat_to_euler(&euler_to_quat(&e));
        assert!(!back.gimbal_lock);
        assert_abs_diff_eq!(back.angles.phi, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(back.angles.theta, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(back.angles.psi, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn euler_half_turn_roll() {
        let q = euler_to_quat(&EulerAngles::new(180.0, 0.0, 0.0));
        assert_abs_diff_eq!(q.q4, 0.0, epsilon = 1e-15);
        for candidate in [q, -q] {
            let back = quat_to_euler(&candidate).angles;
            assert_abs_diff_eq!(libm::fabs(back.phi), 180.0, epsilon = 1e-9);
            assert_abs_diff_eq!(back.theta, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(back.psi, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn gimbal_lock_is_flagged() {
        let sol = quat_to_euler(&euler_to_quat(&EulerAngles::new(20.0, 90.0, 30.0)));
        assert!(sol.gimbal_lock);
        assert_eq!(sol.angles.psi, 0.0);
        // The pinned solution still reproduces the attitude.
        let a = quat_to_dcm(&euler_to_quat(&sol.angles));
        let b = quat_to_dcm(&euler_to_quat(&EulerAngles::new(20.0, 90.0, 30.0)));
        assert_abs_diff_eq!(a, b, epsilon = 1e-6);
    }

    #[test]
    fn error_quaternion_cases() {
        let q = Quaternion::new(0.2, -0.1, 0.3, 0.9).unwrap();
        let e = quaternion_error(&q, &q);
        assert_abs_diff_eq!(e.to_vector4(), Quaternion::IDENTITY.to_vector4(), epsilon = 1e-15);
        assert_abs_diff_eq!(quaternion_error(&q, &Quaternion::IDENTITY).to_vector4(), q.to_vector4(), epsilon = 1e-15);
    }

    #[test]
    fn wrap_deg_range() {
        assert_eq!(wrap_deg(180.0), 180.0);
        assert_eq!(wrap_deg(-180.0), 180.0);
        assert_eq!(wrap_deg(190.0), -170.0);
        assert_eq!(wrap_deg(-370.0), -10.0);
    }

    proptest! {
        #[test]
        fn kinematics_is_orthogonal_to_q(q in unit_quat(), w in rates()) {
            let qd = kinematics_rhs(&q, &w);
            prop_assert!(q.to_vector4().dot(&qd).abs() <= 1e-12);
        }

        #[test]
        fn dcm_is_proper_rotation(q in unit_quat()) {
            let c = quat_to_dcm(&q);
            let err = (c.transpose() * c - Matrix3::identity()).abs().max();
            prop_assert!(err <= 1e-9);
            prop_assert!((c.determinant() - 1.0).abs() <= 1e-9);
            // Sign flip gives the same attitude.
            prop_assert!((quat_to_dcm(&-q) - c).abs().max() <= 1e-15);
        }

        #[test]
        fn euler_round_trip(phi in -179.9f64..179.9, theta in -89.0f64..89.0, psi in -179.9f64..179.9) {
            let back = quat_to_euler(&euler_to_quat(&EulerAngles::new(phi, theta, psi)));
            prop_assert!(!back.gimbal_lock);
            prop_assert!((back.angles.phi - phi).abs() <= 1e-9);
            prop_assert!((back.angles.theta - theta).abs() <= 1e-9);
            prop_assert!((back.angles.psi - psi).abs() <= 1e-9);
        }

        #[test]
        fn euler_extraction_is_sign_stable(q in unit_quat()) {
            let a = quat_to_euler(&q).angles;
            let b = quat_to_euler(&-q).angles;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn error_quaternion_is_unit_and_composes(q in unit_quat(), qc in unit_quat()) {
            let e = quaternion_error(&q, &qc);
            prop_assert!((e.norm() - 1.0).abs() <= 1e-12);
            let lhs = quat_to_dcm(&q);
            let rhs = quat_to_dcm(&e) * quat_to_dcm(&qc);
            prop_assert!((lhs - rhs).abs().max() <= 1e-12);
        }

        #[test]
        fn error_quaternion_matches_matrix_form(q in unit_quat(), qc in unit_quat()) {
            // Independent route: the 4x4 commanded-attitude matrix acting on q.
            let m = nalgebra::Matrix4::new(
                qc.q4, qc.q3, -qc.q2, -qc.q1,
                -qc.q3, qc.q4, qc.q1, -qc.q2,
                qc.q2, -qc.q1, qc.q4, -qc.q3,
                qc.q1, qc.q2, qc.q3, qc.q4,
            );
            let expected = m * q.to_vector4();
            let e = quaternion_error(&q, &qc);
            prop_assert!((e.to_vector4() - expected).abs().max() <= 1e-12);
        }

        #[test]
        fn step_keeps_unit_norm(q in unit_quat(), w in rates()) {
            let inertia = InertiaTensor::new(1.5, 2.6, 3.0).unwrap();
            let s = BodyState::new(q, w);
            let next = integrate_step(&s, &inertia, &Torque::new(0.3, -0.2, 0.1), &Torque::ZERO, 0.01).unwrap();
            prop_assert!((next.q.norm() - 1.0).abs() <= 1e-12);
        }
    }
}
