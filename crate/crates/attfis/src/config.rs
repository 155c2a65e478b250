//! TOML run configuration.
//!
//! Every section is optional and falls back to the sample case. Unknown keys
//! are rejected so typos surface as errors instead of silently using defaults.

use std::path::{Path, PathBuf};

use attfis_core::dynamics::{AngularVelocity, EulerAngles, InertiaTensor};
use attfis_core::optim::NelderMeadConfig;
use attfis_core::pid::PidGains;
use attfis_core::pwpf::PwpfParams;
use attfis_core::roles::{DataGenConfig, Role, RoleTrainConfig};
use attfis_core::sensors::{CalendarInstant, GeoPosition, NoiseSpec, TiltedDipole};
use attfis_core::sim::{
    ControllerKind, Disturbance, EstimatorKind, ModulatorKind, MonteCarloConfig, SimConfig, TuningConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub simulation: Simulation,
    pub inertia: Inertia,
    pub initial: Initial,
    pub desired: Desired,
    pub noise: Noise,
    pub disturbance: Disturbance,
    pub geo: GeoPosition,
    pub epoch: CalendarInstant,
    pub field: TiltedDipole,
    pub pid: Pid,
    pub pwpf: PwpfParams,
    pub tuning: Tuning,
    pub data: DataGenConfig,
    pub training: Training,
    pub evaluate: Evaluate,
    pub monte_carlo: MonteCarlo,
    pub artifacts: Artifacts,
}

impl Default for Config {
    fn default() -> Self {
        let sim = SimConfig::default();
        Config {
            simulation: Simulation::default(),
            inertia: Inertia::default(),
            initial: Initial::default(),
            desired: Desired::default(),
            noise: Noise::default(),
            disturbance: sim.disturbance,
            geo: sim.geo,
            epoch: sim.epoch,
            field: sim.field,
            pid: Pid::default(),
            pwpf: sim.pwpf,
            tuning: Tuning::default(),
            data: DataGenConfig::default(),
            training: Training::default(),
            evaluate: Evaluate::default(),
            monte_carlo: MonteCarlo::default(),
            artifacts: Artifacts::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simulation {
    pub dt: f64,
    pub duration: f64,
    pub controller: ControllerKind,
    pub estimator: EstimatorKind,
    pub modulator: ModulatorKind,
    /// Seeds the sensor noise stream.
    pub seed: u64,
}

impl Default for Simulation {
    fn default() -> Self {
        let sim = SimConfig::default();
        Simulation {
            dt: sim.dt,
            duration: sim.duration,
            controller: sim.controller,
            estimator: sim.estimator,
            modulator: sim.modulator,
            seed: sim.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inertia {
    /// Principal inertia assumed by tuning, training and the controllers.
    pub nominal: [f64; 3],
    /// Plant inertia; the nominal one when absent.
    pub plant: Option<[f64; 3]>,
    /// Plant inertia of the "uncertainty" evaluation condition.
    pub uncertain: [f64; 3],
}

impl Default for Inertia {
    fn default() -> Self {
        Inertia {
            nominal: SimConfig::default().inertia_nominal.to_array(),
            plant: None,
            uncertain: SimConfig::UNCERTAIN_INERTIA.to_array(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Initial {
    /// Euler angles (phi, theta, psi) in degrees.
    pub attitude_deg: [f64; 3],
    /// Body rate in rad/s.
    pub rate: [f64; 3],
}

impl Default for Initial {
    fn default() -> Self {
        let sim = SimConfig::default();
        Initial { attitude_deg: sim.initial_attitude.to_array(), rate: sim.initial_rate.to_array() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Desired {
    pub attitude_deg: [f64; 3],
}

impl Default for Desired {
    fn default() -> Self {
        Desired { attitude_deg: SimConfig::default().desired.to_array() }
    }
}

/// Sensor noise. The sigmas are also what the "noise" evaluation condition,
/// the Monte Carlo campaign and noisy data generation use, even when
/// `enabled` is false.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Noise {
    pub enabled: bool,
    pub sigma_mag: f64,
    pub sigma_sun: f64,
    pub sigma_gyro: f64,
}

impl Default for Noise {
    fn default() -> Self {
        let n = NoiseSpec::default();
        Noise { enabled: false, sigma_mag: n.sigma_mag, sigma_sun: n.sigma_sun, sigma_gyro: n.sigma_gyro }
    }
}

impl Noise {
    pub fn spec(&self) -> NoiseSpec {
        NoiseSpec { sigma_mag: self.sigma_mag, sigma_sun: self.sigma_sun, sigma_gyro: self.sigma_gyro, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pid {
    /// Per-axis torque limit in N m.
    pub mc_max: f64,
}

impl Default for Pid {
    fn default() -> Self {
        Pid { mc_max: PidGains::default().mc_max }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tuning {
    /// Closed-loop simulations Nelder-Mead may spend.
    pub budget: usize,
    /// Random initial conditions averaged with the configured one.
    pub extra_conditions: usize,
    pub angle_range: f64,
    pub rate_range: f64,
    pub seed: u64,
}

impl Default for Tuning {
    fn default() -> Self {
        let t = TuningConfig::default();
        Tuning {
            budget: t.optimizer.budget,
            extra_conditions: t.extra_conditions,
            angle_range: t.angle_range,
            rate_range: t.rate_range,
            seed: t.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    pub controller: RoleTrainConfig,
    pub estimator: RoleTrainConfig,
    pub integrated: RoleTrainConfig,
}

impl Default for Training {
    fn default() -> Self {
        Training {
            controller: RoleTrainConfig::default_for(Role::Controller),
            estimator: RoleTrainConfig::default_for(Role::Estimator),
            integrated: RoleTrainConfig::default_for(Role::Integrated),
        }
    }
}

impl Training {
    pub fn for_role(&self, role: Role) -> &RoleTrainConfig {
        match role {
            Role::Controller => &self.controller,
            Role::Estimator => &self.estimator,
            Role::Integrated => &self.integrated,
        }
    }

    pub fn for_role_mut(&mut self, role: Role) -> &mut RoleTrainConfig {
        match role {
            Role::Controller => &mut self.controller,
            Role::Estimator => &mut self.estimator,
            Role::Integrated => &mut self.integrated,
        }
    }
}

/// Loop used for the ANFIS rows of `evaluate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluate {
    pub controller: ControllerKind,
    pub estimator: EstimatorKind,
}

impl Default for Evaluate {
    fn default() -> Self {
        Evaluate { controller: ControllerKind::Anfis, estimator: EstimatorKind::Truth }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarlo {
    pub n_runs: usize,
    pub angle_range: f64,
    pub rate_range: f64,
    pub inertia_range: f64,
    pub noise: bool,
    pub master_seed: u64,
    pub controller: ControllerKind,
    pub estimator: EstimatorKind,
    /// Worker threads; `ATTFIS_WORKERS` or the core count when absent.
    pub workers: Option<usize>,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        let mc = MonteCarloConfig::default();
        MonteCarlo {
            n_runs: mc.n_runs,
            angle_range: mc.angle_range,
            rate_range: mc.rate_range,
            inertia_range: mc.inertia_range,
            noise: mc.noise,
            master_seed: mc.master_seed,
            controller: mc.base.controller,
            estimator: mc.base.estimator,
            workers: None,
        }
    }
}

/// Where commands look for and place artifacts. Relative paths resolve
/// against `dir`, and `dir` against the working directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub gains: PathBuf,
    pub data: PathBuf,
    pub bundles: PathBuf,
}

impl Default for Artifacts {
    fn default() -> Self {
        Artifacts {
            dir: PathBuf::from("artifacts"),
            gains: PathBuf::from("gains.toml"),
            data: PathBuf::from("data"),
            bundles: PathBuf::from("bundles"),
        }
    }
}

impl Artifacts {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.dir.join(p)
    }

    pub fn gains_path(&self) -> PathBuf {
        self.resolve(&self.gains)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.data)
    }

    pub fn dataset_path(&self, role: Role) -> PathBuf {
        self.data_dir().join(format!("{}.csv", role.name()))
    }

    pub fn bundles_dir(&self) -> PathBuf {
        self.resolve(&self.bundles)
    }

    pub fn bundle_path(&self, role: Role) -> PathBuf {
        self.bundles_dir().join(role.name())
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn inertia(v: [f64; 3], what: &str) -> std::result::Result<InertiaTensor, String> {
    InertiaTensor::from_array(v).map_err(|e| format!("{what} inertia: {e}"))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact { what: "config file", path: path.to_path_buf() },
            _ => Error::io(path, e),
        })?;
        Self::parse(&text).map_err(|message| Error::Config { path: path.to_path_buf(), message })
    }

    /// Parses `text` as overrides on top of [`Config::default`]; any table,
    /// including the nested core ones, may be given partially.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let overrides: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut merged = toml::Value::try_from(Config::default()).expect("config serializes");
        merge(&mut merged, toml::Value::Table(overrides));
        let config: Config = merged.try_into().map_err(|e: toml::de::Error| e.to_string())?;
        config.check()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Rejects values the core would refuse later, so they are reported as
    /// config errors.
    pub fn check(&self) -> std::result::Result<(), String> {
        self.sim_config().and_then(|s| s.validate().map_err(|e| e.to_string()))?;
        inertia(self.inertia.uncertain, "uncertain")?;
        if self.tuning.budget < attfis_core::pid::MIN_TUNING_BUDGET {
            return Err(format!("tuning.budget must be at least {}", attfis_core::pid::MIN_TUNING_BUDGET));
        }
        if !(self.data.dt > 0.0 && self.data.duration >= self.data.dt) {
            return Err("data.dt must be positive and data.duration at least dt".into());
        }
        for role in [Role::Controller, Role::Estimator, Role::Integrated] {
            self.training.for_role(role).validate(role).map_err(|e| format!("training.{}: {e}", role.name()))?;
        }
        if self.monte_carlo.workers == Some(0) {
            return Err("monte_carlo.workers must be at least 1".into());
        }
        self.monte_carlo_config(PidGains::default()).validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    /// The single run described by the file, with default gains.
    pub fn sim_config(&self) -> std::result::Result<SimConfig, String> {
        let nominal = inertia(self.inertia.nominal, "nominal")?;
        let plant = match self.inertia.plant {
            Some(p) => inertia(p, "plant")?,
            None => nominal,
        };
        Ok(SimConfig {
            inertia_nominal: nominal,
            inertia_true: plant,
            dt: self.simulation.dt,
            duration: self.simulation.duration,
            initial_attitude: EulerAngles::from_array(self.initial.attitude_deg),
            initial_rate: AngularVelocity::from_array(self.initial.rate),
            desired: EulerAngles::from_array(self.desired.attitude_deg),
            noise: if self.noise.enabled { self.noise.spec() } else { NoiseSpec::noiseless() },
            disturbance: self.disturbance,
            geo: self.geo,
            epoch: self.epoch,
            field: self.field,
            controller: self.simulation.controller,
            estimator: self.simulation.estimator,
            modulator: self.simulation.modulator,
            gains: PidGains { mc_max: self.pid.mc_max, ..PidGains::default() },
            pwpf: self.pwpf,
            seed: self.simulation.seed,
        })
    }

    fn base(&self) -> SimConfig {
        self.sim_config().expect("checked at load")
    }

    /// Noise-free, disturbance-free PID case the gains are tuned on.
    pub fn tuning_base(&self) -> SimConfig {
        let base = self.base();
        SimConfig {
            inertia_true: base.inertia_nominal,
            noise: NoiseSpec::noiseless(),
            disturbance: Disturbance::None,
            controller: ControllerKind::Pid,
            estimator: EstimatorKind::Truth,
            modulator: ModulatorKind::None,
            ..base
        }
    }

    pub fn tuning_config(&self) -> TuningConfig {
        TuningConfig {
            extra_conditions: self.tuning.extra_conditions,
            angle_range: self.tuning.angle_range,
            rate_range: self.tuning.rate_range,
            seed: self.tuning.seed,
            optimizer: NelderMeadConfig { budget: self.tuning.budget, seed: self.tuning.seed, ..Default::default() },
        }
    }

    /// Teacher setup for data generation: nominal plant carrying the
    /// configured sigmas; `data.noise` decides whether they are used.
    pub fn data_base(&self) -> SimConfig {
        let base = self.base();
        SimConfig { inertia_true: base.inertia_nominal, noise: self.noise.spec(), ..base }
    }

    /// The three evaluation conditions in table order: ideal, noise, uncertainty.
    pub fn evaluation_conditions(&self) -> [(&'static str, SimConfig); 3] {
        let base = self.base();
        let ideal = SimConfig { inertia_true: base.inertia_nominal, noise: NoiseSpec::noiseless(), ..base.clone() };
        let uncertain = InertiaTensor::from_array(self.inertia.uncertain).expect("checked at load");
        [
            ("nominal", ideal.clone()),
            ("noise", SimConfig { noise: self.noise.spec(), ..ideal.clone() }),
            ("uncertainty", SimConfig { inertia_true: uncertain, ..ideal }),
        ]
    }

    pub fn monte_carlo_config(&self, gains: PidGains) -> MonteCarloConfig {
        let base = self.base();
        let mc = &self.monte_carlo;
        MonteCarloConfig {
            n_runs: mc.n_runs,
            angle_range: mc.angle_range,
            rate_range: mc.rate_range,
            inertia_range: mc.inertia_range,
            noise: mc.noise,
            base: SimConfig {
                inertia_true: base.inertia_nominal,
                noise: self.noise.spec(),
                controller: mc.controller,
                estimator: mc.estimator,
                gains,
                ..base
            },
            master_seed: mc.master_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_sample_case() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        let sim = c.sim_config().unwrap();
        assert_eq!(sim, SimConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = Config::parse("[simulation]\nduraton = 5.0\n").unwrap_err();
        assert!(err.contains("duraton"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::parse("[simulation]\ndt = -1.0\n").is_err());
        assert!(Config::parse("[inertia]\nnominal = [-1.0, 1.0, 1.0]\n").is_err());
        assert!(Config::parse("[tuning]\nbudget = 3\n").is_err());
        assert!(Config::parse("[monte_carlo]\nn_runs = 0\n").is_err());
    }

    #[test]
    fn partial_nested_sections_keep_defaults() {
        let c = Config::parse("[training.controller.train]\nepochs = 9\n[data]\nn_conditions = 3\n").unwrap();
        let d = Config::default();
        assert_eq!(c.training.controller.train.epochs, 9);
        assert_eq!(c.training.controller.train.ridge, d.training.controller.train.ridge);
        assert_eq!(c.data.n_conditions, 3);
        assert_eq!(c.data.duration, d.data.duration);
        assert!(Config::parse("[data]\nn_condition = 3\n").is_err());
    }

    #[test]
    fn disturbance_section() {
        let c = Config::parse("[disturbance]\nkind = \"constant\"\ntorque = [0.001, 0.0, 0.0]\n").unwrap();
        assert_eq!(c.disturbance, Disturbance::Constant { torque: [0.001, 0.0, 0.0] });
    }
}
