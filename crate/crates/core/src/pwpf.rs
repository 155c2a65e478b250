//! Pulse-width pulse-frequency modulation of a continuous torque command into
//! on/off thruster firings, one Schmitt trigger per axis.

use thiserror::Error;

use crate::dynamics::Torque;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PwpfError {
    #[error("PWPF parameters invalid: {0}")]
    InvalidParams(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct PwpfParams {
    /// Gain on the command ahead of the lag.
    pub km: f64,
    /// Lag time constant (s).
    pub tm: f64,
    pub u_on: f64,
    pub u_off: f64,
    /// Torque delivered by one firing thruster pair (N·m).
    pub thrust: f64,
}

impl Default for PwpfParams {
    fn default() -> Self {
        PwpfParams { km: 4.5, tm: 0.15, u_on: 0.45, u_off: 0.15, thrust: 1.0 }
    }
}

impl PwpfParams {
    pub fn new(km: f64, tm: f64, u_on: f64, u_off: f64, thrust: f64) -> Result<Self, PwpfError> {
        let p = PwpfParams { km, tm, u_on, u_off, thrust };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PwpfError> {
        if !(self.km > 0.0 && self.km.is_finite()) {
            return Err(PwpfError::InvalidParams("Km must be positive"));
        }
        if !(self.tm > 0.0 && self.tm.is_finite()) {
            return Err(PwpfError::InvalidParams("Tm must be positive"));
        }
        if !(self.u_off > 0.0 && self.u_off < self.u_on && self.u_on.is_finite()) {
            return Err(PwpfError::InvalidParams("thresholds must satisfy 0 < Uoff < Uon"));
        }
        if !(self.thrust > 0.0 && self.thrust.is_finite()) {
            return Err(PwpfError::InvalidParams("thrust must be positive"));
        }
        Ok(())
    }

    /// Largest step that still resolves the lag.
    pub fn max_step(&self) -> f64 {
        self.tm / 5.0
    }

    /// Smallest constant command magnitude that ever fires from rest.
    pub fn dead_zone(&self) -> f64 {
        self.u_on / self.km
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PwpfState {
    /// Lag output per axis.
    pub f: [f64; 3],
    /// −1, 0 or +1 per axis.
    pub firing: [i8; 3],
}

impl PwpfState {
    pub fn reset() -> Self {
        PwpfState::default()
    }

    pub fn output(&self, params: &PwpfParams) -> Torque {
        Torque::new(
            params.thrust * f64::from(self.firing[0]),
            params.thrust * f64::from(self.firing[1]),
            params.thrust * f64::from(self.firing[2]),
        )
    }
}

/// Advances the modulator by `dt` under a command held constant over the step.
///
/// The lag input `Km·c − thrust·firing` is constant within a step, so the
/// update is the exact exponential solution. Steps longer than `Tm/5` are
/// accepted but logged, since the trigger then misses fast transitions.
pub fn pwpf_step(state: &PwpfState, command: &Torque, dt: f64, params: &PwpfParams) -> (PwpfState, Torque) {
    if dt > params.max_step() * (1.0 + 1e-12) {
        log::warn!("PWPF step {dt} s exceeds Tm/5 = {} s", params.max_step());
    }
    let decay = libm::exp(-dt / params.tm);
    let mut next = *state;
    for axis in 0..3 {
        let firing = f64::from(state.firing[axis]);
        let e = params.km * command.0[axis] - params.thrust * firing;
        let f = e + (state.f[axis] - e) * decay;
        next.f[axis] = f;
        next.firing[axis] = if state.firing[axis] == 0 {
            if libm::fabs(f) >= params.u_on {
                if f > 0.0 {
                    1
                } else {
                    -1
                }
            } else {
                0
            }
        } else if libm::fabs(f) <= params.u_off {
            0
        } else {
            state.firing[axis]
        };
    }
    let out = next.output(params);
    (next, out)
}

/// Per-axis modulator with owned state.
#[derive(Clone, Debug, PartialEq)]
pub struct Pwpf {
    pub params: PwpfParams,
    pub state: PwpfState,
}

impl Pwpf {
    pub fn new(params: PwpfParams) -> Result<Self, PwpfError> {
        params.validate()?;
        Ok(Pwpf { params, state: PwpfState::reset() })
    }

    pub fn step(&mut self, command: &Torque, dt: f64) -> Torque {
        let (next, out) = pwpf_step(&self.state, command, dt, &self.params);
        self.state = next;
        out
    }

    pub fn reset(&mut self) {
        self.state = PwpfState::reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    const DT: f64 = 0.01;

    fn run(c: f64, seconds: f64, params: &PwpfParams) -> Vec<(f64, i8)> {
        let mut m = Pwpf::new(*params).unwrap();
        let steps = libm::round(seconds / DT) as usize;
        (0..steps)
            .map(|_| {
                let out = m.step(&Torque::new(c, 0.0, 0.0), DT);
                (out.0.x, m.state.firing[0])
            })
            .collect()
    }

    fn duty(c: f64, params: &PwpfParams) -> f64 {
        // Skip the first 2 s of transient.
        let trace = run(c, 12.0, params);
        let tail = &trace[200..];
        tail.iter().filter(|(_, f)| *f != 0).count() as f64 / tail.len() as f64
    }

    /// Limit-cycle duty from the closed-form lag crossing times.
    fn duty_closed_form(c: f64, p: &PwpfParams) -> f64 {
        let target_off = p.km * c;
        let target_on = p.km * c - p.thrust;
        let t_off = -p.tm * libm::log((target_off - p.u_on) / (target_off - p.u_off));
        let t_on = -p.tm * libm::log((target_on - p.u_off) / (target_on - p.u_on));
        t_on / (t_on + t_off)
    }

    #[test]
    fn zero_command_never_fires() {
        let p = PwpfParams::default();
        assert!(run(0.0, 30.0, &p).iter().all(|&(u, f)| u == 0.0 && f == 0));
    }

    #[test]
    fn sub_threshold_settles_to_lag_steady_state() {
        let p = PwpfParams::default();
        for c in [0.02, 0.05, 0.09, 0.0999, -0.0999] {
            let mut m = Pwpf::new(p).unwrap();
            for _ in 0..3000 {
                let out = m.step(&Torque::new(c, 0.0, 0.0), DT);
                assert_eq!(out, Torque::ZERO);
            }
            assert!((m.state.f[0] - p.km * c).abs() < 1e-12);
        }
    }

    #[test]
    fn just_above_threshold_fires() {
        let p = PwpfParams::default();
        assert!(run(0.101, 5.0, &p).iter().any(|&(_, f)| f == 1));
        assert!(run(-0.101, 5.0, &p).iter().any(|&(_, f)| f == -1));
    }

    #[test]
    fn duty_cycle_increases_with_command() {
        let p = PwpfParams::default();
        let sweep: Vec<f64> = (0..12).map(|k| 0.105 + 0.01 * k as f64).collect();
        let duties: Vec<f64> = sweep.iter().map(|&c| duty(c, &p)).collect();
        assert!(duties[0] > 0.0);
        assert!(duties.windows(2).all(|w| w[1] >= w[0]), "{duties:?}");
        assert!(duties.last().unwrap() > &duties[0]);
    }

    #[test]
    fn mean_output_matches_closed_form_limit_cycle() {
        let p = PwpfParams::default();
        for c in [0.12, 0.15, 0.18, 0.21] {
            let trace = run(c, 12.0, &p);
            let tail = &trace[200..];
            let mean = tail.iter().map(|(u, _)| u).sum::<f64>() / tail.len() as f64;
            let expected = p.thrust * duty_closed_form(c, &p);
            assert!((mean - expected).abs() <= 0.2 * expected, "c={c}: {mean} vs {expected}");
        }
    }

    #[test]
    fn reset_is_fresh_and_idempotent() {
        let p = PwpfParams::default();
        let mut m = Pwpf::new(p).unwrap();
        for _ in 0..57 {
            m.step(&Torque::new(0.3, -0.2, 0.15), DT);
        }
        m.reset();
        assert_eq!(m.state, PwpfState::reset());
        m.reset();
        assert_eq!(m, Pwpf::new(p).unwrap());
        for _ in 0..100 {
            assert_eq!(m.step(&Torque::ZERO, DT), Torque::ZERO);
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PwpfParams::new(4.5, 0.0, 0.45, 0.15, 1.0).is_err());
        assert!(PwpfParams::new(4.5, 0.15, 0.15, 0.45, 1.0).is_err());
        assert!(PwpfParams::new(4.5, 0.15, 0.45, 0.15, -1.0).is_err());
        assert!(PwpfParams::new(4.5, 0.15, 0.45, 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn output_is_ternary_and_hysteretic(cmds in proptest::collection::vec(-1.5f64..1.5, 1..300)) {
            let p = PwpfParams::default();
            let mut state = PwpfState::reset();
            for c in cmds {
                let (next, out) = pwpf_step(&state, &Torque::new(c, -c, 0.5 * c), DT, &p);
                for axis in 0..3 {
                    prop_assert!([-p.thrust, 0.0, p.thrust].contains(&out.0[axis]));
                    let f = next.f[axis].abs();
                    if f > p.u_off && f < p.u_on {
                        prop_assert_eq!(next.firing[axis], state.firing[axis]);
                    }
                }
                state = next;
            }
        }
    }
}
