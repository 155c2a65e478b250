//! Closed-loop orchestration, run metrics and the Monte Carlo campaign.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{
    euler_to_quat, integrate_step, quat_to_euler, quaternion_error, wrap_deg, AngularVelocity, BodyState,
    DynamicsError, EulerAngles, InertiaTensor, Quaternion, Torque, Vec3,
};
use crate::optim::NelderMeadConfig;
use crate::pid::{accumulate_cost, optimize_gains, CostValue, GainTuning, PidController, PidError, PidGains};
use crate::pwpf::{Pwpf, PwpfParams};
use crate::roles::{anfis_control, anfis_estimate, anfis_integrated, Role, RoleBundle, RoleError};
use crate::sensors::{
    gyro_reading, julian_date, magnetometer_reading, sun_direction_inertial, sun_sensor_reading, CalendarInstant,
    FieldModel, GeoPosition, NoiseSpec, SensorError, SensorReading, TiltedDipole,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(&'static str),
    #[error("{0} bundle required by the selected configuration is missing")]
    MissingBundle(&'static str),
    #[error("bundle has role {got:?}, expected {expected:?}")]
    WrongRole { expected: Role, got: Role },
    #[error("simulation diverged at t = {t} s")]
    Diverged { t: f64 },
    #[error("sensor model: {0}")]
    Sensor(#[from] SensorError),
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("ANFIS role: {0}")]
    Role(#[from] RoleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum ControllerKind {
    Pid,
    Anfis,
    Integrated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum EstimatorKind {
    Truth,
    Anfis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum ModulatorKind {
    None,
    Pwpf,
}

/// External disturbance torque `M_d`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)
)]
pub enum Disturbance {
    None,
    Constant { torque: [f64; 3] },
    Sinusoidal { amplitude: [f64; 3], period: f64 },
}

impl Disturbance {
    pub fn at(&self, t: f64) -> Torque {
        match *self {
            Disturbance::None => Torque::ZERO,
            Disturbance::Constant { torque } => Torque::from_array(torque),
            Disturbance::Sinusoidal { amplitude, period } => {
                Torque::from_array(amplitude) * libm::sin(2.0 * core::f64::consts::PI * t / period)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Inertia assumed by anything model based.
    pub inertia_nominal: InertiaTensor,
    /// Inertia of the simulated plant.
    pub inertia_true: InertiaTensor,
    pub dt: f64,
    pub duration: f64,
    pub initial_attitude: EulerAngles,
    pub initial_rate: AngularVelocity,
    pub desired: EulerAngles,
    pub noise: NoiseSpec,
    pub disturbance: Disturbance,
    pub geo: GeoPosition,
    pub epoch: CalendarInstant,
    pub field: TiltedDipole,
    pub controller: ControllerKind,
    pub estimator: EstimatorKind,
    pub modulator: ModulatorKind,
    pub gains: PidGains,
    pub pwpf: PwpfParams,
    /// Seeds the sensor noise stream of the run.
    pub seed: u64,
}

impl Default for SimConfig {
    /// The nominal sample case: nominal inertia, standard initial and desired
    /// attitude, no noise, no disturbance, PID with exact state.
    fn default() -> Self {
        let inertia = InertiaTensor { i1: 1.5, i2: 2.6, i3: 3.0 };
        SimConfig {
            inertia_nominal: inertia,
            inertia_true: inertia,
            dt: 0.01,
            duration: 20.0,
            initial_attitude: EulerAngles::new(10.0, 5.0, 10.0),
            initial_rate: AngularVelocity::new(0.0125, 0.05, 0.075),
            desired: EulerAngles::new(5.0, 0.0, 0.0),
            noise: NoiseSpec::noiseless(),
            disturbance: Disturbance::None,
            geo: GeoPosition::default(),
            epoch: CalendarInstant::J2000,
            field: TiltedDipole::default(),
            controller: ControllerKind::Pid,
            estimator: EstimatorKind::Truth,
            modulator: ModulatorKind::None,
            gains: PidGains::default(),
            pwpf: PwpfParams::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Inertia of the uncertain plant in the sample case.
    pub const UNCERTAIN_INERTIA: InertiaTensor = InertiaTensor { i1: 2.5, i2: 4.0, i3: 3.3 };

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig("dt must be positive"));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return Err(SimError::InvalidConfig("duration must be at least dt"));
        }
        InertiaTensor::new(self.inertia_nominal.i1, self.inertia_nominal.i2, self.inertia_nominal.i3)?;
        InertiaTensor::new(self.inertia_true.i1, self.inertia_true.i2, self.inertia_true.i3)?;
        self.gains.validate().map_err(|_| SimError::InvalidConfig("PID gains invalid"))?;
        if self.modulator == ModulatorKind::Pwpf {
            self.pwpf.validate().map_err(|_| SimError::InvalidConfig("PWPF parameters invalid"))?;
        }
        julian_date(&self.epoch)?;
        Ok(())
    }

    /// Number of integration steps; the record holds one more sample.
    pub fn steps(&self) -> usize {
        libm::round(self.duration / self.dt) as usize
    }

    pub fn desired_quaternion(&self) -> Quaternion {
        euler_to_quat(&self.desired)
    }

    pub fn initial_state(&self) -> BodyState {
        BodyState::new(euler_to_quat(&self.initial_attitude), self.initial_rate)
    }
}

/// Trained models available to a run.
#[derive(Clone, Copy, Debug, Default)]
pub struct Bundles<'a> {
    pub controller: Option<&'a RoleBundle>,
    pub estimator: Option<&'a RoleBundle>,
    pub integrated: Option<&'a RoleBundle>,
}

fn require<'a>(bundle: Option<&'a RoleBundle>, role: Role, name: &'static str) -> Result<&'a RoleBundle, SimError> {
    let b = bundle.ok_or(SimError::MissingBundle(name))?;
    if b.role() != role {
        return Err(SimError::WrongRole { expected: role, got: b.role() });
    }
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSample {
    pub t: f64,
    pub state: BodyState,
    pub estimate: BodyState,
    /// True error quaternion against the desired attitude, scalar part non-negative.
    pub qe: Quaternion,
    pub command: Torque,
    /// Torque reaching the plant after the modulator.
    pub applied: Torque,
    /// True attitude, deg.
    pub euler: EulerAngles,
    pub reading: SensorReading,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    /// Samples at `t = k·dt` for `k = 0..=steps`. Torques in the last sample
    /// are computed but never applied.
    pub samples: Vec<RunSample>,
    pub dt: f64,
    pub desired: EulerAngles,
    pub seed: u64,
    /// Cost `J` accumulated while running.
    pub cost: f64,
    /// Per-axis fuel accumulated while running.
    pub fuel: [f64; 3],
}

impl RunRecord {
    pub fn last(&self) -> &RunSample {
        self.samples.last().expect("records hold at least two samples")
    }
}

/// Sensor sample at time `t` for the true state.
pub fn sense<R: Rng + ?Sized>(
    config: &SimConfig,
    state: &BodyState,
    t: f64,
    rng: &mut R,
) -> Result<SensorReading, SimError> {
    let jd = julian_date(&config.epoch)? + t / 86400.0;
    let b_inertial = config.field.field_inertial(&config.geo, jd);
    let sun_inertial = sun_direction_inertial(jd);
    let mag_body = magnetometer_reading(&b_inertial, &state.q, &config.noise, rng)?;
    let sun_body = sun_sensor_reading(&sun_inertial, &state.q, &config.noise, rng)?;
    let omega_meas = gyro_reading(&state.omega, &config.noise, rng);
    Ok(SensorReading {
        mag_body,
        sun_body,
        omega_meas,
        mag_inertial: crate::sensors::DirectionVector::from_vector(&b_inertial)?,
        sun_inertial,
        t,
    })
}

/// Error quaternion with the scalar part made non-negative, so its vector
/// part always points along the shorter rotation.
pub fn attitude_error(q: &Quaternion, qc: &Quaternion) -> Quaternion {
    quaternion_error(q, qc).canonical()
}

/// Runs one closed loop. Each step: sense the true state, estimate, form the
/// error against the desired attitude, compute the command, modulate, and
/// integrate the plant under the true inertia.
pub fn run_closed_loop(config: &SimConfig, bundles: &Bundles<'_>) -> Result<RunRecord, SimError> {
    config.validate()?;
    let controller_bundle = match config.controller {
        ControllerKind::Pid => None,
        ControllerKind::Anfis => Some(require(bundles.controller, Role::Controller, "controller")?),
        ControllerKind::Integrated => Some(require(bundles.integrated, Role::Integrated, "integrated")?),
    };
    let estimator_bundle = match config.estimator {
        EstimatorKind::Truth => None,
        EstimatorKind::Anfis => Some(require(bundles.estimator, Role::Estimator, "estimator")?),
    };

    let steps = config.steps();
    let dt = config.dt;
    let qc = config.desired_quaternion();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pid = PidController::new(config.gains);
    let mut pwpf = match config.modulator {
        ModulatorKind::None => None,
        ModulatorKind::Pwpf => {
            Some(Pwpf::new(config.pwpf).map_err(|_| SimError::InvalidConfig("PWPF parameters invalid"))?)
        }
    };

    let mut state = config.initial_state();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut cost = CostValue::default();
    let mut fuel = [0.0; 3];

    for k in 0..=steps {
        let t = k as f64 * dt;
        let reading = sense(config, &state, t, &mut rng)?;
        let estimate = match estimator_bundle {
            None => BodyState::new(state.q, reading.omega_meas),
            Some(b) => {
                let (q, w) = anfis_estimate(b, &reading)?;
                BodyState::new(q, w)
            }
        };
        let qe_est = attitude_error(&estimate.q, &qc);
        let command = match (config.controller, controller_bundle) {
            (ControllerKind::Pid, _) => pid.step(&qe_est.vector(), &estimate.omega, dt),
            (ControllerKind::Anfis, Some(b)) => anfis_control(b, &qe_est.vector(), &estimate.omega)?,
            (ControllerKind::Integrated, Some(b)) => anfis_integrated(b, &reading)?,
            _ => unreachable!("bundle presence checked above"),
        };
        let applied = match pwpf.as_mut() {
            None => command,
            Some(m) => m.step(&command, dt),
        };
        let qe = attitude_error(&state.q, &qc);
        let euler = quat_to_euler(&state.q).angles;
        samples.push(RunSample { t, state, estimate, qe, command, applied, euler, reading });

        if k == steps {
            break;
        }
        cost = accumulate_cost(cost, &qe.vector(), &state.omega, dt);
        for (axis, f) in fuel.iter_mut().enumerate() {
            *f += dt * libm::fabs(applied.0[axis]);
        }
        state = integrate_step(&state, &config.inertia_true, &applied, &config.disturbance.at(t), dt)
            .map_err(|_| SimError::Diverged { t })?;
    }

    Ok(RunRecord { samples, dt, desired: config.desired, seed: config.seed, cost: cost.0, fuel })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fuel {
    pub per_axis: [f64; 3],
    pub total: f64,
}

/// Rectangle-rule `∫|applied torque| dt` per axis over the applied samples.
pub fn fuel_consumption(record: &RunRecord) -> Fuel {
    let mut per_axis = [0.0; 3];
    let applied = record.samples.len().saturating_sub(1);
    for s in &record.samples[..applied] {
        for (axis, f) in per_axis.iter_mut().enumerate() {
            *f += record.dt * libm::fabs(s.applied.0[axis]);
        }
    }
    Fuel { per_axis, total: per_axis.iter().sum() }
}

/// Cost `J` recomputed from the logged true error and rates.
pub fn trajectory_cost(record: &RunRecord) -> f64 {
    let applied = record.samples.len().saturating_sub(1);
    record.samples[..applied]
        .iter()
        .fold(CostValue::default(), |c, s| accumulate_cost(c, &s.qe.vector(), &s.state.omega, record.dt))
        .0
}

/// Wrapped Euler-angle error of every sample against the desired attitude, deg.
pub fn euler_errors(record: &RunRecord) -> Vec<[f64; 3]> {
    let d = record.desired.to_array();
    record
        .samples
        .iter()
        .map(|s| {
            let a = s.euler.to_array();
            [wrap_deg(a[0] - d[0]), wrap_deg(a[1] - d[1]), wrap_deg(a[2] - d[2])]
        })
        .collect()
}

/// Per axis, the earliest time after which the error stays within `band`
/// times the initial error for every later sample; `None` if the last sample
/// is still outside. Axes that start on target settle at `t = 0`.
pub fn settling_time(times: &[f64], errors: &[[f64; 3]], band: f64) -> [Option<f64>; 3] {
    let mut out = [None; 3];
    if errors.is_empty() {
        return out;
    }
    for (axis, slot) in out.iter_mut().enumerate() {
        let threshold = band * libm::fabs(errors[0][axis]);
        if threshold == 0.0 {
            *slot = Some(times[0]);
            continue;
        }
        *slot = match errors.iter().rposition(|e| libm::fabs(e[axis]) > threshold) {
            None => Some(times[0]),
            Some(k) if k + 1 < errors.len() => Some(times[k + 1]),
            Some(_) => None,
        };
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub fuel: Fuel,
    /// 1% band settling time per axis, `None` when not settled by the end.
    pub settling: [Option<f64>; 3],
    /// Wrapped Euler error at the last sample, deg.
    pub final_error: [f64; 3],
    pub cost: f64,
}

pub fn metrics(record: &RunRecord) -> Metrics {
    let errors = euler_errors(record);
    let times: Vec<f64> = record.samples.iter().map(|s| s.t).collect();
    Metrics {
        fuel: fuel_consumption(record),
        settling: settling_time(&times, &errors, 0.01),
        final_error: *errors.last().expect("records hold at least one sample"),
        cost: trajectory_cost(record),
    }
}

/// Closed-loop `J` of a PID run with `gains`; failures and gains that are not
/// negative feedback score `+∞`.
pub fn tuning_objective(config: &SimConfig, gains: &PidGains) -> f64 {
    if !gains.is_negative_feedback() {
        return f64::INFINITY;
    }
    let mut c = config.clone();
    c.gains = *gains;
    c.controller = ControllerKind::Pid;
    c.estimator = EstimatorKind::Truth;
    c.modulator = ModulatorKind::None;
    match run_closed_loop(&c, &Bundles::default()) {
        Ok(r) => r.cost,
        Err(_) => f64::INFINITY,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloConfig {
    pub n_runs: usize,
    /// Initial Euler angles are drawn uniformly in `±angle_range` deg.
    pub angle_range: f64,
    /// Initial rates are drawn uniformly in `±rate_range` rad/s.
    pub rate_range: f64,
    /// Per-axis plant inertia offset drawn uniformly in `±inertia_range` kg·m².
    pub inertia_range: f64,
    /// Use the base noise spec; otherwise runs are noiseless.
    pub noise: bool,
    pub base: SimConfig,
    pub master_seed: u64,
}

/// Smallest plant inertia a perturbation may produce.
pub const MIN_PERTURBED_INERTIA: f64 = 0.1;

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            n_runs: 200,
            angle_range: 15.0,
            rate_range: 0.1,
            inertia_range: 1.0,
            noise: true,
            base: SimConfig {
                noise: NoiseSpec::default(),
                controller: ControllerKind::Integrated,
                ..SimConfig::default()
            },
            master_seed: 0,
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_runs == 0 {
            return Err(SimError::InvalidConfig("n_runs must be at least 1"));
        }
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.angle_range) && ok(self.rate_range) && ok(self.inertia_range)) {
            return Err(SimError::InvalidConfig("Monte Carlo ranges must be finite and non-negative"));
        }
        self.base.validate()
    }

    /// Independent random stream for run `k`.
    pub fn run_rng(&self, k: usize) -> ChaCha8Rng {
        derive_rng(self.master_seed, k)
    }

    /// Configuration of run `k`.
    pub fn run_config(&self, k: usize) -> SimConfig {
        let mut rng = self.run_rng(k);
        let mut sym = |r: f64| {
            if r > 0.0 {
                rng.random_range(-r..=r)
            } else {
                0.0
            }
        };
        let angles = [sym(self.angle_range), sym(self.angle_range), sym(self.angle_range)];
        let rates = [sym(self.rate_range), sym(self.rate_range), sym(self.rate_range)];
        let offsets = [sym(self.inertia_range), sym(self.inertia_range), sym(self.inertia_range)];
        let seed = rng.random::<u64>();
        let nominal = self.base.inertia_true.to_array();
        let perturbed = |i: usize| (nominal[i] + offsets[i]).max(MIN_PERTURBED_INERTIA);
        SimConfig {
            initial_attitude: EulerAngles::from_array(angles),
            initial_rate: AngularVelocity::from_array(rates),
            inertia_true: InertiaTensor { i1: perturbed(0), i2: perturbed(1), i3: perturbed(2) },
            noise: if self.noise { self.base.noise } else { NoiseSpec::noiseless() },
            seed,
            ..self.base.clone()
        }
    }
}

/// Multi-scenario gain tuning: the base case plus `extra_conditions` random
/// initial conditions, all under the base inertia and noise.
#[derive(Clone, Debug, PartialEq)]
pub struct TuningConfig {
    pub extra_conditions: usize,
    pub angle_range: f64,
    pub rate_range: f64,
    pub seed: u64,
    pub optimizer: NelderMeadConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            extra_conditions: 4,
            angle_range: 15.0,
            rate_range: 0.1,
            seed: 0,
            optimizer: NelderMeadConfig::default(),
        }
    }
}

impl TuningConfig {
    pub fn scenarios(&self, base: &SimConfig) -> Vec<SimConfig> {
        let draws = MonteCarloConfig {
            n_runs: self.extra_conditions,
            angle_range: self.angle_range,
            rate_range: self.rate_range,
            inertia_range: 0.0,
            noise: true,
            base: base.clone(),
            master_seed: self.seed,
        };
        core::iter::once(base.clone()).chain((0..self.extra_conditions).map(|k| draws.run_config(k))).collect()
    }
}

/// Mean of [`tuning_objective`] over `scenarios`.
pub fn mean_tuning_objective(scenarios: &[SimConfig], gains: &PidGains) -> f64 {
    scenarios.iter().map(|c| tuning_objective(c, gains)).sum::<f64>() / scenarios.len() as f64
}

/// Tunes from [`PidGains::tuning_start`] against the mean cost over the
/// scenarios drawn around `base`.
pub fn tune_pid(base: &SimConfig, config: &TuningConfig) -> Result<GainTuning, PidError> {
    let scenarios = config.scenarios(base);
    optimize_gains(|g| mean_tuning_objective(&scenarios, g), &PidGains::tuning_start(), &config.optimizer)
}

/// Per-run generator: the master seed with stream `k + 1`. Stream 0 is left
/// to whoever holds the master seed directly.
pub fn derive_rng(master_seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(k as u64 + 1);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloRun {
    pub run: usize,
    /// Wrapped final Euler error, deg, or the reason the run failed.
    pub outcome: Result<[f64; 3], String>,
}

/// Executes run `k` of the campaign.
pub fn monte_carlo_run(config: &MonteCarloConfig, k: usize, bundles: &Bundles<'_>) -> MonteCarloRun {
    let outcome =
        run_closed_loop(&config.run_config(k), bundles).map(|r| metrics(&r).final_error).map_err(|e| e.to_string());
    MonteCarloRun { run: k, outcome }
}

/// Welford running mean and population standard deviation per angle.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStats {
    pub count: usize,
    mean: [f64; 3],
    m2: [f64; 3],
}

impl RunningStats {
    pub fn push(&mut self, x: &[f64; 3]) {
        self.count += 1;
        let n = self.count as f64;
        for i in 0..3 {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    pub fn mean(&self) -> [f64; 3] {
        self.mean
    }

    pub fn sigma(&self) -> [f64; 3] {
        if self.count == 0 {
            return [0.0; 3];
        }
        let n = self.count as f64;
        self.m2.map(|m| libm::sqrt(m / n))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloRow {
    pub run: usize,
    /// `None` for a failed run.
    pub error: Option<[f64; 3]>,
    pub failure: Option<String>,
    /// Statistics over the successful runs up to and including this one.
    pub mean: [f64; 3],
    pub sigma3: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloReport {
    pub rows: Vec<MonteCarloRow>,
    pub failed: usize,
}

impl MonteCarloReport {
    /// Builds the report from runs in run order.
    pub fn from_runs(runs: &[MonteCarloRun]) -> Self {
        let mut stats = RunningStats::default();
        let mut failed = 0;
        let rows = runs
            .iter()
            .map(|r| {
                let (error, failure) = match &r.outcome {
                    Ok(e) => {
                        stats.push(e);
                        (Some(*e), None)
                    }
                    Err(msg) => {
                        failed += 1;
                        log::warn!("Monte Carlo run {} failed: {msg}", r.run);
                        (None, Some(msg.clone()))
                    }
                };
                MonteCarloRow { run: r.run, error, failure, mean: stats.mean(), sigma3: stats.sigma().map(|s| 3.0 * s) }
            })
            .collect();
        MonteCarloReport { rows, failed }
    }

    /// Largest absolute final error over all successful runs and angles, deg.
    pub fn max_abs_error(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.error).flat_map(|e| e.map(libm::fabs)).fold(0.0, f64::max)
    }

    pub fn successful(&self) -> usize {
        self.rows.len() - self.failed
    }
}

/// Sequential campaign. Results do not depend on execution order, so a
/// parallel driver may call [`monte_carlo_run`] directly.
pub fn monte_carlo(config: &MonteCarloConfig, bundles: &Bundles<'_>) -> Result<MonteCarloReport, SimError> {
    config.validate()?;
    let runs: Vec<MonteCarloRun> = (0..config.n_runs).map(|k| monte_carlo_run(config, k, bundles)).collect();
    Ok(MonteCarloReport::from_runs(&runs))
}

/// `(q_e vector, ω)` seen by the controller in a sample.
pub fn controller_inputs(sample: &RunSample, qc: &Quaternion) -> [f64; 6] {
    let qe: Vec3 = attitude_error(&sample.estimate.q, qc).vector();
    let w = sample.estimate.omega.0;
    [qe.x, qe.y, qe.z, w.x, w.y, w.z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn default_pid_settles_nominal_case() {
        let record = run_closed_loop(&SimConfig::default(), &Bundles::default()).unwrap();
        assert_eq!(record.samples.len(), 2001);
        let m = metrics(&record);
        for s in m.settling {
            assert!(s.is_some_and(|t| t <= 20.0), "{:?}", m.settling);
        }
        assert!(m.fuel.total > 0.1 && m.fuel.total < 10.0, "{}", m.fuel.total);
    }

    #[test]
    fn equilibrium_is_stationary() {
        let config = SimConfig {
            initial_attitude: EulerAngles::new(5.0, 0.0, 0.0),
            initial_rate: AngularVelocity::ZERO,
            ..SimConfig::default()
        };
        let record = run_closed_loop(&config, &Bundles::default()).unwrap();
        for s in &record.samples {
            assert!(s.command.0.norm() < 1e-12);
            assert!((s.euler.phi - 5.0).abs() < 1e-9 && s.euler.theta.abs() < 1e-9);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let config = SimConfig { noise: NoiseSpec::default(), seed: 42, ..SimConfig::default() };
        let a = run_closed_loop(&config, &Bundles::default()).unwrap();
        let b = run_closed_loop(&config, &Bundles::default()).unwrap();
        assert_eq!(a, b);
        let c = run_closed_loop(&SimConfig { seed: 43, ..config }, &Bundles::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn online_metrics_match_recomputation() {
        let config = SimConfig { noise: NoiseSpec::default(), modulator: ModulatorKind::Pwpf, ..SimConfig::default() };
        let record = run_closed_loop(&config, &Bundles::default()).unwrap();
        let fuel = fuel_consumption(&record);
        assert_eq!(fuel.per_axis, record.fuel);
        assert_eq!(trajectory_cost(&record), record.cost);
    }

    #[test]
    fn pwpf_output_is_ternary() {
        let config = SimConfig { modulator: ModulatorKind::Pwpf, ..SimConfig::default() };
        let record = run_closed_loop(&config, &Bundles::default()).unwrap();
        for s in &record.samples {
            assert!(s.applied.0.iter().all(|u| [-1.0, 0.0, 1.0].contains(u)));
        }
    }

    #[test]
    fn missing_bundle_is_reported() {
        let config = SimConfig { controller: ControllerKind::Anfis, ..SimConfig::default() };
        assert_eq!(run_closed_loop(&config, &Bundles::default()), Err(SimError::MissingBundle("controller")));
        let config = SimConfig { estimator: EstimatorKind::Anfis, ..SimConfig::default() };
        assert_eq!(run_closed_loop(&config, &Bundles::default()), Err(SimError::MissingBundle("estimator")));
    }

    #[test]
    fn fuel_closed_form() {
        let mut samples = Vec::new();
        let base = run_closed_loop(&SimConfig { duration: 0.02, ..SimConfig::default() }, &Bundles::default()).unwrap();
        for k in 0..=2000 {
            let mut s = base.samples[0];
            s.t = k as f64 * 0.01;
            s.applied = Torque::new(0.0, -0.1, 0.0);
            samples.push(s);
        }
        let record = RunRecord { samples, ..base };
        let fuel = fuel_consumption(&record);
        assert!((fuel.per_axis[1] - 2.0).abs() < 1e-12);
        assert_eq!(fuel.per_axis[0], 0.0);
        assert!((fuel.total - 2.0).abs() < 1e-12);
    }

    fn brute_force_settling(times: &[f64], e: &[f64], threshold: f64) -> Option<f64> {
        (0..e.len()).find(|&k| e[k..].iter().all(|v| v.abs() <= threshold)).map(|k| times[k])
    }

    #[test]
    fn settling_last_entry_rule() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        // Enters the 1% band at k=20, leaves at k=35..40, re-enters at k=40.
        let e: Vec<f64> = (0..100)
            .map(|k| match k {
                0 => 10.0,
                1..=19 => 10.0 - k as f64 * 0.5,
                35..=39 => 0.5,
                _ => 0.05,
            })
            .collect();
        let errors: Vec<[f64; 3]> = e.iter().map(|&v| [v, 0.0, 10.0]).collect();
        let s = settling_time(&times, &errors, 0.01);
        assert_eq!(s[0], Some(times[40]));
        assert_eq!(s[0], brute_force_settling(&times, &e, 0.1));
        assert_eq!(s[1], Some(0.0));
        assert_eq!(s[2], None);
        let inside: Vec<[f64; 3]> = vec![[1.0, 1.0, 1.0]; 10];
        assert_eq!(settling_time(&times[..10], &inside, 1.0), [Some(0.0); 3]);
    }

    #[test]
    fn running_stats_match_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<[f64; 3]> =
            (0..200).map(|_| [rng.random(), rng.random::<f64>() * 1e-3, rng.random::<f64>() - 0.5]).collect();
        let mut stats = RunningStats::default();
        for (n, x) in xs.iter().enumerate() {
            stats.push(x);
            for i in 0..3 {
                let batch: Vec<f64> = xs[..=n].iter().map(|v| v[i]).collect();
                let mean = batch.iter().sum::<f64>() / batch.len() as f64;
                let var = batch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / batch.len() as f64;
                assert!((stats.mean()[i] - mean).abs() < 1e-12);
                assert!((stats.sigma()[i] - libm::sqrt(var)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_campaign_is_constant() {
        let config = MonteCarloConfig {
            n_runs: 4,
            angle_range: 0.0,
            rate_range: 0.0,
            inertia_range: 0.0,
            noise: false,
            base: SimConfig { duration: 2.0, ..SimConfig::default() },
            master_seed: 9,
        };
        let report = monte_carlo(&config, &Bundles::default()).unwrap();
        let first = report.rows[0].error.unwrap();
        for row in &report.rows {
            assert_eq!(row.error.unwrap(), first);
            assert_eq!(row.sigma3, [0.0; 3]);
        }
    }

    #[test]
    fn campaign_runs_are_order_independent() {
        let config = MonteCarloConfig {
            n_runs: 5,
            base: SimConfig { duration: 1.0, ..SimConfig::default() },
            ..MonteCarloConfig::default()
        };
        let config =
            MonteCarloConfig { base: SimConfig { controller: ControllerKind::Pid, ..config.base.clone() }, ..config };
        let forward: Vec<_> = (0..5).map(|k| monte_carlo_run(&config, k, &Bundles::default())).collect();
        let mut backward: Vec<_> = (0..5).rev().map(|k| monte_carlo_run(&config, k, &Bundles::default())).collect();
        backward.reverse();
        assert_eq!(forward, backward);
        assert_ne!(forward[0], forward[1]);
    }

    #[test]
    fn perturbed_inertia_stays_positive() {
        let config = MonteCarloConfig { inertia_range: 5.0, ..MonteCarloConfig::default() };
        for k in 0..50 {
            let c = config.run_config(k);
            assert!(c.inertia_true.to_array().iter().all(|&i| i >= MIN_PERTURBED_INERTIA));
            assert_eq!(c.inertia_nominal, config.base.inertia_nominal);
        }
    }

    #[test]
    fn tuning_rejects_positive_feedback() {
        let config = SimConfig::default();
        assert!(tuning_objective(&config, &PidGains::default()).is_finite());
        let mut x = PidGains::default().stacked();
        x[7] = 1e-3;
        assert_eq!(tuning_objective(&config, &PidGains::from_stacked(&x, 1.0)), f64::INFINITY);
    }

    #[test]
    fn tuning_scenarios_start_from_base() {
        let base = SimConfig::default();
        let config = TuningConfig { extra_conditions: 3, ..TuningConfig::default() };
        let scenarios = config.scenarios(&base);
        assert_eq!(scenarios.len(), 4);
        assert_eq!(scenarios[0], base);
        for c in &scenarios[1..] {
            assert_eq!(c.inertia_true, base.inertia_true);
            assert!(c.initial_attitude.to_array().iter().all(|a| a.abs() <= 15.0));
            assert_ne!(c.initial_attitude, base.initial_attitude);
        }
        assert_eq!(config.scenarios(&base), scenarios);
    }

    #[test]
    fn short_tuning_improves_and_keeps_sign() {
        let config = TuningConfig {
            extra_conditions: 1,
            optimizer: NelderMeadConfig { budget: 60, ..NelderMeadConfig::default() },
            ..TuningConfig::default()
        };
        let tuned = tune_pid(&SimConfig::default(), &config).unwrap();
        assert!(tuned.cost < tuned.initial_cost);
        assert!(tuned.gains.is_negative_feedback());
        let scenarios = config.scenarios(&SimConfig::default());
        assert_eq!(mean_tuning_objective(&scenarios, &tuned.gains), tuned.cost);
    }
}
