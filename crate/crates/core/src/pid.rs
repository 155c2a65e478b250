//! Integral-augmented quaternion-feedback PID law, torque saturation, the
//! trajectory cost, and derivative-free gain tuning.

use alloc::vec::Vec;

use thiserror::Error;

use crate::dynamics::{AngularVelocity, Torque, Vec3};
use crate::optim::{nelder_mead, NelderMeadConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PidError {
    #[error("saturation bound must be positive and finite, got {0}")]
    InvalidSaturation(f64),
    #[error("gains must be finite")]
    NonFiniteGains,
    #[error("tuning budget must be at least {min}, got {got}")]
    BudgetTooSmall { min: usize, got: usize },
}

/// Diagonal gains of `Mc = Kp q_e + Kd ω + Kq ∫q_e + Kω ∫ω`, plus the torque bound.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct PidGains {
    pub kp: Vec3,
    pub kd: Vec3,
    pub kq: Vec3,
    pub kw: Vec3,
    pub mc_max: f64,
}

impl PidGains {
    pub const STACKED_LEN: usize = 12;

    pub fn new(kp: Vec3, kd: Vec3, kq: Vec3, kw: Vec3, mc_max: f64) -> Result<Self, PidError> {
        let gains = PidGains { kp, kd, kq, kw, mc_max };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<(), PidError> {
        if !(self.mc_max > 0.0) || !self.mc_max.is_finite() {
            return Err(PidError::InvalidSaturation(self.mc_max));
        }
        if !self.stacked().iter().all(|g| g.is_finite()) {
            return Err(PidError::NonFiniteGains);
        }
        Ok(())
    }

    /// Uniform proportional/derivative gains with no integral action.
    pub fn pd(kp: f64, kd: f64, mc_max: f64) -> Self {
        PidGains { kp: Vec3::repeat(kp), kd: Vec3::repeat(kd), kq: Vec3::zeros(), kw: Vec3::zeros(), mc_max }
    }

    /// Starting point for tuning: [`PidGains::default`] with a small integral
    /// action of the same sign as the other terms.
    pub fn tuning_start() -> Self {
        PidGains { kq: Vec3::repeat(-0.05), kw: Vec3::repeat(-0.05), ..PidGains::default() }
    }

    /// Every gain opposes its signal. A positive integral gain can trade a
    /// lower cost over a finite horizon for a slow divergence afterwards.
    pub fn is_negative_feedback(&self) -> bool {
        self.stacked().iter().all(|&g| g <= 0.0)
    }

    /// `[kp, kd, kq, kw]` flattened axis by axis.
    pub fn stacked(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (block, g) in [self.kp, self.kd, self.kq, self.kw].iter().enumerate() {
            out[3 * block..3 * block + 3].copy_from_slice(g.as_slice());
        }
        out
    }

    pub fn from_stacked(v: &[f64], mc_max: f64) -> Self {
        let block = |i: usize| Vec3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
        PidGains { kp: block(0), kd: block(1), kq: block(2), kw: block(3), mc_max }
    }
}

impl Default for PidGains {
    /// A stabilizing starting point for tuning, not a tuned result.
    fn default() -> Self {
        PidGains::pd(-2.0, -3.0, 1.0)
    }
}

/// Integrator accumulators with per-axis anti-windup freeze flags.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PidState {
    pub int_qe: Vec3,
    pub int_omega: Vec3,
    pub frozen: [bool; 3],
}

impl PidState {
    pub fn is_finite(&self) -> bool {
        self.int_qe.iter().chain(self.int_omega.iter()).all(|v| v.is_finite())
    }
}

/// Per-axis clamp to `[-mc_max, mc_max]`.
pub fn saturate(mc: &Torque, mc_max: f64) -> Torque {
    Torque(mc.0.map(|v| v.clamp(-mc_max, mc_max)))
}

fn unsaturated(qe: &Vec3, omega: &AngularVelocity, state: &PidState, gains: &PidGains) -> Vec3 {
    gains.kp.component_mul(qe)
        + gains.kd.component_mul(&omega.0)
        + gains.kq.component_mul(&state.int_qe)
        + gains.kw.component_mul(&state.int_omega)
}

/// Control torque for the error-quaternion vector part `qe` and body rate
/// `omega`, saturated per axis.
pub fn pid_control(qe: &Vec3, omega: &AngularVelocity, state: &PidState, gains: &PidGains) -> Torque {
    saturate(&Torque(unsaturated(qe, omega, state, gains)), gains.mc_max)
}

/// Stateful controller: evaluates the law, then advances the integrators by
/// `dt`, holding any axis whose raw command exceeds the bound.
#[derive(Clone, Debug, PartialEq)]
pub struct PidController {
    pub gains: PidGains,
    pub state: PidState,
}

impl PidController {
    pub fn new(gains: PidGains) -> Self {
        PidController { gains, state: PidState::default() }
    }

    pub fn step(&mut self, qe: &Vec3, omega: &AngularVelocity, dt: f64) -> Torque {
        let raw = unsaturated(qe, omega, &self.state, &self.gains);
        for axis in 0..3 {
            let saturated = libm::fabs(raw[axis]) > self.gains.mc_max;
            self.state.frozen[axis] = saturated;
            if !saturated {
                self.state.int_qe[axis] += qe[axis] * dt;
                self.state.int_omega[axis] += omega.0[axis] * dt;
            }
        }
        saturate(&Torque(raw), self.gains.mc_max)
    }

    pub fn reset(&mut self) {
        self.state = PidState::default();
    }
}

/// Running value of `J = ∫ (Σ|ω_i| + Σ|q_ei|) dt`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostValue(pub f64);

/// Rectangle-rule increment of the cost over one step.
pub fn accumulate_cost(cost: CostValue, qe: &Vec3, omega: &AngularVelocity, dt: f64) -> CostValue {
    let integrand: f64 = omega.0.iter().chain(qe.iter()).map(|v| libm::fabs(*v)).sum();
    CostValue(cost.0 + dt * integrand)
}

/// Minimum tuning budget accepted by [`optimize_gains`].
pub const MIN_TUNING_BUDGET: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct GainTuning {
    pub gains: PidGains,
    pub cost: f64,
    pub initial_cost: f64,
    pub evaluations: usize,
    pub restarts: usize,
    /// Best cost after each evaluation.
    pub history: Vec<f64>,
}

/// Tunes all twelve diagonal gains against `objective` (typically a closed-loop
/// cost). Saturation bound is held fixed. Best-so-far semantics: the returned
/// cost never exceeds the initial one.
pub fn optimize_gains<F>(objective: F, initial: &PidGains, config: &NelderMeadConfig) -> Result<GainTuning, PidError>
where
    F: Fn(&PidGains) -> f64,
{
    initial.validate()?;
    if config.budget < MIN_TUNING_BUDGET {
        return Err(PidError::BudgetTooSmall { min: MIN_TUNING_BUDGET, got: config.budget });
    }
    let mc_max = initial.mc_max;
    let mut f = |x: &[f64]| objective(&PidGains::from_stacked(x, mc_max));
    let m = nelder_mead(&mut f, &initial.stacked(), config);
    Ok(GainTuning {
        gains: PidGains::from_stacked(&m.x, mc_max),
        cost: m.value,
        initial_cost: m.initial_value,
        evaluations: m.evaluations,
        restarts: m.restarts,
        history: m.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_error_gives_zero_torque() {
        let gains = PidGains::default();
        let t = pid_control(&Vec3::zeros(), &AngularVelocity::ZERO, &PidState::default(), &gains);
        assert_eq!(t, Torque::ZERO);
    }

    #[test]
    fn proportional_term_alone() {
        let gains = PidGains::pd(-1.0, 0.0, 1.0);
        let t = pid_control(&Vec3::new(0.1, 0.0, 0.0), &AngularVelocity::ZERO, &PidState::default(), &gains);
        assert_eq!(t, Torque::new(-0.1, 0.0, 0.0));
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(saturate(&Torque::new(2.0, -0.5, 0.0), 1.0), Torque::new(1.0, -0.5, 0.0));
        assert_eq!(saturate(&Torque::new(0.3, -0.2, 0.9), 1.0), Torque::new(0.3, -0.2, 0.9));
        assert_eq!(saturate(&Torque::new(-3.0, -3.0, -3.0), 1.0), Torque::new(-1.0, -1.0, -1.0));
    }

    #[test]
    fn gain_validation() {
        assert_eq!(
            PidGains::new(Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), 0.0),
            Err(PidError::InvalidSaturation(0.0))
        );
        let nan = Vec3::new(f64::NAN, 0.0, 0.0);
        assert_eq!(PidGains::new(nan, Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), 1.0), Err(PidError::NonFiniteGains));
    }

    #[test]
    fn stacked_round_trip() {
        let g = PidGains::new(
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(4.0, 5.0, 6.0),
            Vec3::new(7.0, 8.0, 9.0),
            Vec3::new(10.0, 11.0, 12.0),
            0.5,
        )
        .unwrap();
        let s = g.stacked();
        assert_eq!(s, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        assert_eq!(PidGains::from_stacked(&s, 0.5), g);
    }

    #[test]
    fn anti_windup_freezes_saturated_axes() {
        let mut gains = PidGains::pd(-50.0, 0.0, 1.0);
        gains.kq = Vec3::repeat(-1.0);
        let mut pid = PidController::new(gains);
        // Axis 1 saturated by a large error; axis 2 small error; axis 3 none.
        let qe = Vec3::new(0.5, 0.001, 0.0);
        for _ in 0..1000 {
            let t = pid.step(&qe, &AngularVelocity::ZERO, 0.01);
            assert_eq!(t.0.x, -1.0);
        }
        assert_eq!(pid.state.int_qe.x, 0.0);
        assert!(pid.state.frozen[0]);
        assert!((pid.state.int_qe.y - 0.01).abs() < 1e-12);
        assert!(!pid.state.frozen[1]);
        pid.reset();
        assert_eq!(pid.state, PidState::default());
    }

    #[test]
    fn cost_examples() {
        let mut j = CostValue::default();
        for _ in 0..2000 {
            j = accumulate_cost(j, &Vec3::zeros(), &AngularVelocity::ZERO, 0.01);
        }
        assert_eq!(j.0, 0.0);
        let mut j = CostValue::default();
        for _ in 0..2000 {
            j = accumulate_cost(j, &Vec3::new(0.1, 0.0, 0.0), &AngularVelocity::ZERO, 0.01);
        }
        assert!((j.0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tuning_recovers_synthetic_optimum() {
        // Convex quadratic in the stacked gains with a known minimizer.
        let target = PidGains::new(
            Vec3::new(-1.0, -1.5, -2.0),
            Vec3::new(-3.0, -2.5, -2.0),
            Vec3::new(-0.1, -0.2, -0.3),
            Vec3::new(0.05, 0.0, -0.05),
            1.0,
        )
        .unwrap();
        let t = target.stacked();
        let objective = |g: &PidGains| {
            g.stacked()
                .iter()
                .zip(&t)
                .enumerate()
                .map(|(i, (a, b))| (1.0 + i as f64 * 0.1) * (a - b) * (a - b))
                .sum::<f64>()
        };
        let config = NelderMeadConfig { budget: 20_000, ..NelderMeadConfig::default() };
        let tuned = optimize_gains(objective, &PidGains::default(), &config).unwrap();
        for (a, b) in tuned.gains.stacked().iter().zip(&t) {
            assert!((a - b).abs() < 1e-3, "{:?}", tuned.gains);
        }
        assert!(tuned.cost <= tuned.initial_cost);
        assert!(tuned.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn tuning_treats_non_finite_as_infinite() {
        let objective = |g: &PidGains| if g.kp.x > -1.9 { f64::NAN } else { g.kd.norm() };
        let config = NelderMeadConfig { budget: 100, ..NelderMeadConfig::default() };
        let tuned = optimize_gains(objective, &PidGains::default(), &config).unwrap();
        assert!(tuned.cost.is_finite());
        assert!(tuned.cost <= tuned.initial_cost);
        let small = NelderMeadConfig { budget: 10, ..config };
        assert_eq!(
            optimize_gains(objective, &PidGains::default(), &small),
            Err(PidError::BudgetTooSmall { min: 50, got: 10 })
        );
    }

    proptest! {
        #[test]
        fn output_never_exceeds_bound(
            gains in proptest::array::uniform12(-100.0f64..100.0),
            qe in proptest::array::uniform3(-1.0f64..1.0),
            w in proptest::array::uniform3(-5.0f64..5.0),
            ints in proptest::array::uniform6(-50.0f64..50.0),
            mc_max in 0.01f64..10.0,
        ) {
            let g = PidGains::from_stacked(&gains, mc_max);
            let state = PidState {
                int_qe: Vec3::new(ints[0], ints[1], ints[2]),
                int_omega: Vec3::new(ints[3], ints[4], ints[5]),
                frozen: [false; 3],
            };
            let t = pid_control(&Vec3::from(qe), &AngularVelocity::from_array(w), &state, &g);
            prop_assert!(t.0.iter().all(|v| v.abs() <= mc_max));
        }

        #[test]
        fn cost_is_additive_and_nondecreasing(steps in proptest::collection::vec(proptest::array::uniform6(-1.0f64..1.0), 1..200)) {
            let dt = 0.01;
            let mut j = CostValue::default();
            let mut manual = 0.0;
            for s in &steps {
                let next = accumulate_cost(j, &Vec3::new(s[0], s[1], s[2]), &AngularVelocity::new(s[3], s[4], s[5]), dt);
                prop_assert!(next.0 >= j.0);
                manual += dt * s.iter().map(|v| v.abs()).sum::<f64>();
                j = next;
            }
            prop_assert!((j.0 - manual).abs() <= 1e-12 * manual.max(1.0));
        }
    }

    #[test]
    fn feedback_sign() {
        assert!(PidGains::default().is_negative_feedback());
        assert!(PidGains::tuning_start().is_negative_feedback());
        assert!(!PidGains::pd(1.0, -3.0, 1.0).is_negative_feedback());
        let mut x = PidGains::tuning_start().stacked();
        x[11] = 0.2;
        assert!(!PidGains::from_stacked(&x, 1.0).is_negative_feedback());
    }
}
