//! The three ANFIS roles built on the PID teacher: controller, attitude
//! estimator, and the integrated sensor-to-torque network.
//!
//! Each role owns one single-output network per output channel. Inputs are a
//! chosen subset of the role's raw channels, scaled to `[-1, 1]` with the
//! training ranges before they reach the networks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::anfis::{grid_partition_init, rmse, train, AnfisError, AnfisModel, TrainConfig, TrainingSet};
use crate::dynamics::{AngularVelocity, EulerAngles, Quaternion, Torque, Vec3};
use crate::pid::{saturate, PidGains};
use crate::sensors::SensorReading;
use crate::sim::{
    controller_inputs, derive_rng, run_closed_loop, Bundles, ControllerKind, EstimatorKind, ModulatorKind, RunSample,
    SimConfig, SimError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoleError {
    #[error("bundle is a {got:?} bundle, not a {expected:?} bundle")]
    WrongRole { expected: Role, got: Role },
    #[error("expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inconsistent bundle: {0}")]
    Inconsistent(&'static str),
    #[error("predicted quaternion norm {0} is too small to normalize")]
    EstimateInvalid(f64),
    #[error("dataset is empty")]
    EmptyData,
    #[error("input channel {channel} is constant over the training data; drop it from the channel list")]
    ConstantChannel { channel: usize },
    #[error("ANFIS: {0}")]
    Anfis(#[from] AnfisError),
    #[error("data generation: {0}")]
    Generation(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Role {
    Controller,
    Estimator,
    Integrated,
}

impl Role {
    pub fn raw_inputs(self) -> usize {
        match self {
            Role::Controller => 6,
            Role::Estimator | Role::Integrated => SensorReading::CHANNELS,
        }
    }

    pub fn input_names(self) -> &'static [&'static str] {
        match self {
            Role::Controller => &["qe1", "qe2", "qe3", "w1", "w2", "w3"],
            Role::Estimator | Role::Integrated => &SensorReading::CHANNEL_NAMES,
        }
    }

    pub fn output_names(self) -> &'static [&'static str] {
        match self {
            Role::Controller | Role::Integrated => &["mc1", "mc2", "mc3"],
            Role::Estimator => &["q1", "q2", "q3", "q4", "w1", "w2", "w3"],
        }
    }

    pub fn outputs(self) -> usize {
        self.output_names().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Controller => "controller",
            Role::Estimator => "estimator",
            Role::Integrated => "integrated",
        }
    }
}

/// Sensor channels kept when position and epoch are fixed: body magnetometer,
/// body sun sensor and gyro. The inertial references are then (near) constant.
pub const BODY_CHANNELS: [usize; 9] = [0, 1, 2, 3, 4, 5, 12, 13, 14];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerSample {
    /// `(q_e1, q_e2, q_e3, ω1, ω2, ω3)`
    pub inputs: [f64; 6],
    pub targets: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorSample {
    pub inputs: [f64; 15],
    /// `(q1, q2, q3, q4, ω1, ω2, ω3)` of the true state.
    pub targets: [f64; 7],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratedSample {
    pub inputs: [f64; 15],
    pub targets: [f64; 3],
}

/// Samples of one role, row major, tagged with the simulation run that
/// produced each row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub role: Role,
    pub run: Vec<u32>,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(role: Role) -> Self {
        Dataset { role, run: Vec::new(), inputs: Vec::new(), targets: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.run.len()
    }

    pub fn is_empty(&self) -> bool {
        self.run.is_empty()
    }

    pub fn push(&mut self, run: u32, inputs: &[f64], targets: &[f64]) -> Result<(), RoleError> {
        if inputs.len() != self.role.raw_inputs() {
            return Err(RoleError::DimensionMismatch { expected: self.role.raw_inputs(), got: inputs.len() });
        }
        if targets.len() != self.role.outputs() {
            return Err(RoleError::DimensionMismatch { expected: self.role.outputs(), got: targets.len() });
        }
        self.run.push(run);
        self.inputs.extend_from_slice(inputs);
        self.targets.extend_from_slice(targets);
        Ok(())
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let n = self.role.raw_inputs();
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        let m = self.role.outputs();
        &self.targets[i * m..(i + 1) * m]
    }

    /// Distinct run tags in first-appearance order.
    pub fn runs(&self) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        for &r in &self.run {
            if out.last() != Some(&r) && !out.contains(&r) {
                out.push(r);
            }
        }
        out
    }

    pub fn controller_sample(&self, i: usize) -> ControllerSample {
        let mut s = ControllerSample { inputs: [0.0; 6], targets: [0.0; 3] };
        s.inputs.copy_from_slice(self.input(i));
        s.targets.copy_from_slice(self.target(i));
        s
    }

    pub fn estimator_sample(&self, i: usize) -> EstimatorSample {
        let mut s = EstimatorSample { inputs: [0.0; 15], targets: [0.0; 7] };
        s.inputs.copy_from_slice(self.input(i));
        s.targets.copy_from_slice(self.target(i));
        s
    }

    pub fn integrated_sample(&self, i: usize) -> IntegratedSample {
        let mut s = IntegratedSample { inputs: [0.0; 15], targets: [0.0; 3] };
        s.inputs.copy_from_slice(self.input(i));
        s.targets.copy_from_slice(self.target(i));
        s
    }

    /// Rows whose run tag is (not) in `runs`.
    pub fn filter_runs(&self, runs: &[u32], keep: bool) -> Dataset {
        let mut out = Dataset::new(self.role);
        for i in 0..self.len() {
            if runs.contains(&self.run[i]) == keep {
                out.run.push(self.run[i]);
                out.inputs.extend_from_slice(self.input(i));
                out.targets.extend_from_slice(self.target(i));
            }
        }
        out
    }

    /// Whole-run split: the last `ceil(fraction · runs)` runs are held out.
    pub fn split_by_runs(&self, fraction: f64) -> (Dataset, Dataset) {
        let runs = self.runs();
        let held = if runs.len() < 2 || fraction <= 0.0 {
            0
        } else {
            (libm::ceil(fraction * runs.len() as f64) as usize).clamp(1, runs.len() - 1)
        };
        let holdout: Vec<u32> = runs[runs.len() - held..].to_vec();
        (self.filter_runs(&holdout, false), self.filter_runs(&holdout, true))
    }
}

/// How training scenarios are drawn.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct DataGenConfig {
    pub n_conditions: usize,
    pub duration: f64,
    pub dt: f64,
    /// Initial Euler angles uniform in `±angle_range` deg.
    pub angle_range: f64,
    /// Initial rates uniform in `±rate_range` rad/s.
    pub rate_range: f64,
    /// Keep the base config's sensor noise; otherwise generate clean data.
    pub noise: bool,
    pub seed: u64,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        DataGenConfig {
            n_conditions: 15,
            duration: 20.0,
            dt: 0.01,
            angle_range: 15.0,
            rate_range: 0.1,
            noise: true,
            seed: 0,
        }
    }
}

/// Retries per condition before generation gives up.
const MAX_RESAMPLES: usize = 20;

/// Runs the PID teacher from `n_conditions` random initial conditions and
/// passes every logged sample except the unapplied final one to `sink`.
fn teacher_runs<F>(base: &SimConfig, gains: &PidGains, gen: &DataGenConfig, mut sink: F) -> Result<(), RoleError>
where
    F: FnMut(u32, &RunSample, &SimConfig) -> Result<(), RoleError>,
{
    if gen.n_conditions == 0 {
        return Err(RoleError::EmptyData);
    }
    for k in 0..gen.n_conditions {
        let mut rng = derive_rng(gen.seed, k);
        let mut attempt = 0;
        let record = loop {
            let mut sym = |r: f64| {
                if r > 0.0 {
                    rng.random_range(-r..=r)
                } else {
                    0.0
                }
            };
            let angles = [sym(gen.angle_range), sym(gen.angle_range), sym(gen.angle_range)];
            let rates = [sym(gen.rate_range), sym(gen.rate_range), sym(gen.rate_range)];
            let config = SimConfig {
                dt: gen.dt,
                duration: gen.duration,
                initial_attitude: EulerAngles::from_array(angles),
                initial_rate: AngularVelocity::from_array(rates),
                noise: if gen.noise { base.noise } else { crate::sensors::NoiseSpec::noiseless() },
                controller: ControllerKind::Pid,
                estimator: EstimatorKind::Truth,
                modulator: ModulatorKind::None,
                gains: *gains,
                seed: rng.random(),
                ..base.clone()
            };
            match run_closed_loop(&config, &Bundles::default()) {
                Ok(r) => break (r, config),
                Err(SimError::Diverged { t }) if attempt < MAX_RESAMPLES => {
                    log::warn!("teacher run {k} diverged at t = {t} s; resampling its initial condition");
                    attempt += 1;
                }
                Err(e) => return Err(RoleError::Generation(alloc::format!("{e}"))),
            }
        };
        let (record, config) = record;
        for s in &record.samples[..record.samples.len() - 1] {
            sink(k as u32, s, &config)?;
        }
    }
    Ok(())
}

/// `(q_e, ω) → Mc` pairs from the PID teacher.
pub fn generate_controller_data(base: &SimConfig, gains: &PidGains, gen: &DataGenConfig) -> Result<Dataset, RoleError> {
    let mut data = Dataset::new(Role::Controller);
    teacher_runs(base, gains, gen, |run, s, config| {
        data.push(run, &controller_inputs(s, &config.desired_quaternion()), &s.command.to_array())
    })?;
    Ok(data)
}

/// Sensor channels paired with the true state along teacher trajectories.
pub fn generate_estimator_data(base: &SimConfig, gains: &PidGains, gen: &DataGenConfig) -> Result<Dataset, RoleError> {
    let mut data = Dataset::new(Role::Estimator);
    teacher_runs(base, gains, gen, |run, s, _| {
        let q = s.state.q.canonical();
        let w = s.state.omega.0;
        data.push(run, &s.reading.channels(), &[q.q1, q.q2, q.q3, q.q4, w.x, w.y, w.z])
    })?;
    Ok(data)
}

/// Sensor channels paired with the teacher's torque at the same instant.
pub fn generate_integrated_data(base: &SimConfig, gains: &PidGains, gen: &DataGenConfig) -> Result<Dataset, RoleError> {
    let mut data = Dataset::new(Role::Integrated);
    teacher_runs(base, gains, gen, |run, s, _| data.push(run, &s.reading.channels(), &s.command.to_array()))?;
    Ok(data)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct RoleTrainConfig {
    /// Raw input channels fed to the networks.
    pub channels: Vec<usize>,
    /// Membership functions per selected channel; 1 leaves that channel to
    /// the linear consequents only.
    pub mfs_per_input: Vec<usize>,
    pub train: TrainConfig,
    /// Keep every `stride`-th training row.
    pub stride: usize,
    /// Fraction of whole runs held out for evaluation.
    pub holdout_fraction: f64,
}

impl RoleTrainConfig {
    pub fn default_for(role: Role) -> Self {
        let (channels, mfs_per_input): (Vec<usize>, Vec<usize>) = match role {
            Role::Controller => ((0..6).collect(), vec![2; 6]),
            Role::Estimator => (BODY_CHANNELS.to_vec(), vec![2, 2, 2, 1, 1, 1, 1, 1, 1]),
            Role::Integrated => (BODY_CHANNELS.to_vec(), vec![2, 2, 2, 1, 1, 1, 1, 1, 1]),
        };
        RoleTrainConfig {
            channels,
            mfs_per_input,
            train: TrainConfig { epochs: 5, learning_rate: 0.01, decay: 0.5, ridge: 1e-3, seed: 0 },
            stride: 4,
            holdout_fraction: 0.1,
        }
    }

    pub fn validate(&self, role: Role) -> Result<(), RoleError> {
        if self.channels.is_empty() || self.channels.len() != self.mfs_per_input.len() {
            return Err(RoleError::Inconsistent("channel list and MF counts must be nonempty and of equal length"));
        }
        if self.channels.iter().any(|&c| c >= role.raw_inputs()) {
            return Err(RoleError::Inconsistent("channel index beyond the role's inputs"));
        }
        if self.stride == 0 || !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(RoleError::Inconsistent("stride must be positive and holdout fraction in [0, 1)"));
        }
        self.train.validate()?;
        Ok(())
    }
}

/// Training summary stored alongside a bundle.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct BundleMeta {
    pub train: TrainConfig,
    pub stride: usize,
    pub training_rows: usize,
    pub holdout_rows: usize,
    /// Per output channel.
    pub train_rmse: Vec<f64>,
    /// Per output channel, NaN when nothing was held out.
    pub holdout_rmse: Vec<f64>,
    /// Symmetric clamp applied to torque outputs.
    pub output_limit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoleBundle {
    role: Role,
    channels: Vec<usize>,
    /// Raw training range of each selected channel.
    ranges: Vec<(f64, f64)>,
    models: Vec<AnfisModel>,
    pub meta: BundleMeta,
}

/// Extrapolation diagnostics fire beyond this multiple of the training range.
pub const EXTRAPOLATION_FACTOR: f64 = 1.5;

impl RoleBundle {
    pub fn new(
        role: Role,
        channels: Vec<usize>,
        ranges: Vec<(f64, f64)>,
        models: Vec<AnfisModel>,
        meta: BundleMeta,
    ) -> Result<Self, RoleError> {
        if models.len() != role.outputs() {
            return Err(RoleError::Inconsistent("one model per output channel required"));
        }
        if channels.len() != ranges.len() || channels.is_empty() {
            return Err(RoleError::Inconsistent("channels and ranges differ in length"));
        }
        if channels.iter().any(|&c| c >= role.raw_inputs()) {
            return Err(RoleError::Inconsistent("channel index beyond the role's inputs"));
        }
        if ranges.iter().any(|(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
            return Err(RoleError::Inconsistent("normalization range must be finite with max > min"));
        }
        if models.iter().any(|m| m.n_inputs() != channels.len()) {
            return Err(RoleError::Inconsistent("model input dimension differs from channel count"));
        }
        Ok(RoleBundle { role, channels, ranges, models, meta })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn models(&self) -> &[AnfisModel] {
        &self.models
    }

    /// Selects and scales raw inputs into `out`.
    pub fn normalize_into(&self, raw: &[f64], out: &mut [f64]) -> Result<(), RoleError> {
        if raw.len() != self.role.raw_inputs() {
            return Err(RoleError::DimensionMismatch { expected: self.role.raw_inputs(), got: raw.len() });
        }
        for ((o, &c), &(lo, hi)) in out.iter_mut().zip(&self.channels).zip(&self.ranges) {
            *o = 2.0 * (raw[c] - lo) / (hi - lo) - 1.0;
        }
        Ok(())
    }

    /// Raw network outputs for raw role inputs, one per output channel.
    pub fn predict(&self, raw: &[f64]) -> Result<Vec<f64>, RoleError> {
        let mut x = vec![0.0; self.channels.len()];
        self.normalize_into(raw, &mut x)?;
        if x.iter().any(|v| libm::fabs(*v) > EXTRAPOLATION_FACTOR) {
            log::debug!("{} bundle input outside {EXTRAPOLATION_FACTOR}x the training range", self.role.name());
        }
        self.models.iter().map(|m| m.evaluate(&x).map_err(RoleError::from)).collect()
    }

    fn expect(&self, role: Role) -> Result<(), RoleError> {
        if self.role != role {
            return Err(RoleError::WrongRole { expected: role, got: self.role });
        }
        Ok(())
    }

    fn limited(&self, out: &[f64]) -> Torque {
        let t = Torque::new(out[0], out[1], out[2]);
        match self.meta.output_limit {
            Some(limit) => saturate(&t, limit),
            None => t,
        }
    }
}

/// Per-channel hold-out/train RMSE of a bundle on a dataset.
pub fn bundle_rmse(bundle: &RoleBundle, data: &Dataset) -> Result<Vec<f64>, RoleError> {
    if data.role != bundle.role {
        return Err(RoleError::WrongRole { expected: bundle.role, got: data.role });
    }
    if data.is_empty() {
        return Err(RoleError::EmptyData);
    }
    let m = bundle.role.outputs();
    let mut sse = vec![0.0; m];
    for i in 0..data.len() {
        let y = bundle.predict(data.input(i))?;
        for (j, (p, t)) in y.iter().zip(data.target(i)).enumerate() {
            sse[j] += (p - t) * (p - t);
        }
    }
    Ok(sse.iter().map(|s| libm::sqrt(s / data.len() as f64)).collect())
}

/// Trains one network per output channel on a whole-run split of `data`.
/// `output_limit` is the torque clamp for the controlling roles.
pub fn train_role(
    data: &Dataset,
    config: &RoleTrainConfig,
    output_limit: Option<f64>,
) -> Result<RoleBundle, RoleError> {
    let role = data.role;
    config.validate(role)?;
    if data.is_empty() {
        return Err(RoleError::EmptyData);
    }
    let (train_set, holdout) = data.split_by_runs(config.holdout_fraction);
    let rows: Vec<usize> = (0..train_set.len()).step_by(config.stride).collect();

    let n = config.channels.len();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
    for &i in &rows {
        let x = train_set.input(i);
        for (r, &c) in ranges.iter_mut().zip(&config.channels) {
            r.0 = r.0.min(x[c]);
            r.1 = r.1.max(x[c]);
        }
    }
    for (k, &(lo, hi)) in ranges.iter().enumerate() {
        if !(hi - lo > 1e-12 * (1.0 + libm::fabs(lo))) {
            return Err(RoleError::ConstantChannel { channel: config.channels[k] });
        }
    }

    let mut inputs = Vec::with_capacity(rows.len() * n);
    let scratch_bundle_ranges = ranges.clone();
    for &i in &rows {
        let x = train_set.input(i);
        for (&c, &(lo, hi)) in config.channels.iter().zip(&scratch_bundle_ranges) {
            inputs.push(2.0 * (x[c] - lo) / (hi - lo) - 1.0);
        }
    }
    let init = grid_partition_init(&vec![(-1.0, 1.0); n], &config.mfs_per_input)?;
    let mut models = Vec::with_capacity(role.outputs());
    let mut train_rmse = Vec::with_capacity(role.outputs());
    for j in 0..role.outputs() {
        let targets: Vec<f64> = rows.iter().map(|&i| train_set.target(i)[j]).collect();
        let set = TrainingSet::new(n, inputs.clone(), targets)?;
        let outcome = train(&init, &set, &config.train)?;
        log::info!(
            "{} output {}: training RMSE {} (epoch {} of {})",
            role.name(),
            role.output_names()[j],
            outcome.best_rmse,
            outcome.best_epoch,
            config.train.epochs
        );
        train_rmse.push(rmse(&outcome.model, &set)?);
        models.push(outcome.model);
    }

    let meta = BundleMeta {
        train: config.train.clone(),
        stride: config.stride,
        training_rows: rows.len(),
        holdout_rows: holdout.len(),
        train_rmse,
        holdout_rmse: vec![f64::NAN; role.outputs()],
        output_limit,
    };
    let mut bundle = RoleBundle::new(role, config.channels.clone(), ranges, models, meta)?;
    if !holdout.is_empty() {
        bundle.meta.holdout_rmse = bundle_rmse(&bundle, &holdout)?;
    }
    Ok(bundle)
}

/// Controller bundle with the teacher's torque bound.
pub fn train_controller(data: &Dataset, config: &RoleTrainConfig, gains: &PidGains) -> Result<RoleBundle, RoleError> {
    expect_data(data, Role::Controller)?;
    train_role(data, config, Some(gains.mc_max))
}

pub fn train_estimator(data: &Dataset, config: &RoleTrainConfig) -> Result<RoleBundle, RoleError> {
    expect_data(data, Role::Estimator)?;
    train_role(data, config, None)
}

pub fn train_integrated(data: &Dataset, config: &RoleTrainConfig, gains: &PidGains) -> Result<RoleBundle, RoleError> {
    expect_data(data, Role::Integrated)?;
    train_role(data, config, Some(gains.mc_max))
}

fn expect_data(data: &Dataset, role: Role) -> Result<(), RoleError> {
    if data.role != role {
        return Err(RoleError::WrongRole { expected: role, got: data.role });
    }
    Ok(())
}

/// Torque from the controller bundle, clamped to the teacher's bound.
pub fn anfis_control(bundle: &RoleBundle, qe: &Vec3, omega: &AngularVelocity) -> Result<Torque, RoleError> {
    bundle.expect(Role::Controller)?;
    let raw = [qe.x, qe.y, qe.z, omega.0.x, omega.0.y, omega.0.z];
    Ok(bundle.limited(&bundle.predict(&raw)?))
}

/// Smallest predicted quaternion norm accepted before renormalization.
pub const MIN_ESTIMATE_NORM: f64 = 0.1;

/// Attitude and rate estimate from one sensor reading.
pub fn anfis_estimate(
    bundle: &RoleBundle,
    reading: &SensorReading,
) -> Result<(Quaternion, AngularVelocity), RoleError> {
    bundle.expect(Role::Estimator)?;
    let y = bundle.predict(&reading.channels())?;
    let q = Quaternion::from_components(y[0], y[1], y[2], y[3]);
    let norm = q.norm();
    if !(norm >= MIN_ESTIMATE_NORM) || !norm.is_finite() {
        return Err(RoleError::EstimateInvalid(norm));
    }
    let q = q.normalized().map_err(|_| RoleError::EstimateInvalid(norm))?;
    Ok((q, AngularVelocity::new(y[4], y[5], y[6])))
}

/// Torque straight from a sensor reading.
pub fn anfis_integrated(bundle: &RoleBundle, reading: &SensorReading) -> Result<Torque, RoleError> {
    bundle.expect(Role::Integrated)?;
    Ok(bundle.limited(&bundle.predict(&reading.channels())?))
}
