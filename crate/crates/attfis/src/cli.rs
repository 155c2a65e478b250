use std::path::{Path, PathBuf};

use attfis_core::pid::PidGains;
use attfis_core::roles::{
    generate_controller_data, generate_estimator_data, generate_integrated_data, train_controller, train_estimator,
    train_integrated, Dataset, Role, RoleBundle,
};
use attfis_core::sim::{metrics, run_closed_loop, tune_pid, Bundles, ControllerKind, EstimatorKind, ModulatorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bundle::{load_bundle, manifest_path, save_bundle};
use crate::config::Config;
use crate::dataset::{read_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::gains::{load_gains, save_gains, TuningSummary};
use crate::io::write_text;
use crate::montecarlo::{run_parallel, workers_from_env};
use crate::record::write_record;
use crate::report::{format_evaluation, write_evaluation, write_monte_carlo, EvaluationRow};

#[derive(Debug, Parser)]
#[command(name = "attfis", version, about = "Satellite attitude control with PID and ANFIS")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed loop and write its time history.
    Simulate(SimulateArgs),
    /// Optimize the PID gains and write the gains file.
    TunePid(Common),
    /// Record PID teacher runs as training data.
    GenData(RoleArgs),
    /// Train ANFIS role bundles from recorded data.
    Train(TrainArgs),
    /// Compare ANFIS and PID with and without noise and inertia uncertainty.
    Evaluate(Common),
    /// Run the randomized campaign and write the per-run report.
    MonteCarlo(MonteCarloArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration file.
    pub config: PathBuf,
    /// Overrides the seed the command draws from.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path; defaults to a location under the artifacts directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    Pid,
    Anfis,
    Integrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Truth,
    Anfis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModulatorArg {
    None,
    Pwpf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Controller,
    Estimator,
    Integrated,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Controller => Role::Controller,
            RoleArg::Estimator => Role::Estimator,
            RoleArg::Integrated => Role::Integrated,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub controller: Option<ControllerArg>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    #[arg(long, value_enum)]
    pub modulator: Option<ModulatorArg>,
}

#[derive(Debug, Clone, Args)]
pub struct RoleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Only this role; all three when absent. `--out` names a directory.
    #[arg(long, value_enum)]
    pub role: Option<RoleArg>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub roles: RoleArgs,
    /// Directory holding `<role>.csv`; the artifacts data directory when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub common: Common,
    /// Worker threads; overrides the config and `ATTFIS_WORKERS`.
    #[arg(long)]
    pub workers: Option<usize>,
}

const ALL_ROLES: [Role; 3] = [Role::Controller, Role::Estimator, Role::Integrated];

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a).map(|_| ()),
        Command::TunePid(a) => tune(&a).map(|_| ()),
        Command::GenData(a) => gen_data(&a).map(|_| ()),
        Command::Train(a) => train(&a).map(|_| ()),
        Command::Evaluate(a) => evaluate(&a).map(|_| ()),
        Command::MonteCarlo(a) => monte_carlo(&a).map(|_| ()),
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    seed: u64,
    version: &'a str,
    config: &'a Config,
}

fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

/// Writes the provenance sidecar of `out`: command, seed and the resolved config.
fn write_meta(out: &Path, command: &str, seed: u64, config: &Config) -> Result<()> {
    let meta = Meta { command, seed, version: env!("CARGO_PKG_VERSION"), config };
    write_text(out, &toml::to_string(&meta).expect("meta serializes"))
}

fn gains_or_default(config: &Config) -> Result<PidGains> {
    let path = config.artifacts.gains_path();
    match load_gains(&path) {
        Ok((gains, _)) => Ok(gains),
        Err(Error::MissingArtifact { .. }) => {
            log::warn!("{} not found; using the untuned default gains", path.display());
            Ok(PidGains { mc_max: config.pid.mc_max, ..PidGains::default() })
        }
        Err(e) => Err(e),
    }
}

/// Loads whichever bundles the controller and estimator kinds need.
fn load_needed(config: &Config, controller: ControllerKind, estimator: EstimatorKind) -> Result<Vec<RoleBundle>> {
    let mut roles = Vec::new();
    match controller {
        ControllerKind::Pid => {}
        ControllerKind::Anfis => roles.push(Role::Controller),
        ControllerKind::Integrated => roles.push(Role::Integrated),
    }
    if estimator == EstimatorKind::Anfis {
        roles.push(Role::Estimator);
    }
    roles.into_iter().map(|r| load_bundle(&config.artifacts.bundle_path(r), Some(r))).collect()
}

fn bundles_of(loaded: &[RoleBundle]) -> Bundles<'_> {
    let find = |r: Role| loaded.iter().find(|b| b.role() == r);
    Bundles { controller: find(Role::Controller), estimator: find(Role::Estimator), integrated: find(Role::Integrated) }
}

pub fn simulate(args: &SimulateArgs) -> Result<PathBuf> {
    let mut config = Config::load(&args.common.config)?;
    let sim = &mut config.simulation;
    if let Some(seed) = args.common.seed {
        sim.seed = seed;
    }
    if let Some(c) = args.controller {
        sim.controller = match c {
            ControllerArg::Pid => ControllerKind::Pid,
            ControllerArg::Anfis => ControllerKind::Anfis,
            ControllerArg::Integrated => ControllerKind::Integrated,
        };
    }
    if let Some(e) = args.estimator {
        sim.estimator = match e {
            EstimatorArg::Truth => EstimatorKind::Truth,
            EstimatorArg::Anfis => EstimatorKind::Anfis,
        };
    }
    if let Some(m) = args.modulator {
        sim.modulator = match m {
            ModulatorArg::None => ModulatorKind::None,
            ModulatorArg::Pwpf => ModulatorKind::Pwpf,
        };
    }
    let out = args.common.out.clone().unwrap_or_else(|| config.artifacts.dir.join("run.csv"));
    let loaded = load_needed(&config, config.simulation.controller, config.simulation.estimator)?;
    let gains = gains_or_default(&config)?;
    let sim = attfis_core::sim::SimConfig { gains, ..config.sim_config().expect("checked at load") };
    let record = run_closed_loop(&sim, &bundles_of(&loaded))?;
    write_record(&out, &record)?;
    write_meta(&meta_path(&out), "simulate", config.simulation.seed, &config)?;
    let m = metrics(&record);
    println!(
        "{} samples, fuel {:.4} N m s, final error ({:.4}, {:.4}, {:.4}) deg -> {}",
        record.samples.len(),
        m.fuel.total,
        m.final_error[0],
        m.final_error[1],
        m.final_error[2],
        out.display()
    );
    Ok(out)
}

pub fn tune(args: &Common) -> Result<PathBuf> {
    let mut config = Config::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.tuning.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| config.artifacts.gains_path());
    log::info!("tuning PID gains with a budget of {} simulations", config.tuning.budget);
    let tuning = tune_pid(&config.tuning_base(), &config.tuning_config())?;
    save_gains(&out, &tuning.gains, Some(&TuningSummary::new(&tuning, config.tuning.seed)))?;
    write_meta(&meta_path(&out), "tune-pid", config.tuning.seed, &config)?;
    println!(
        "cost {:.6} -> {:.6} after {} simulations -> {}",
        tuning.initial_cost,
        tuning.cost,
        tuning.evaluations,
        out.display()
    );
    Ok(out)
}

fn selected(role: Option<RoleArg>) -> Vec<Role> {
    role.map_or(ALL_ROLES.to_vec(), |r| vec![r.into()])
}

pub fn gen_data(args: &RoleArgs) -> Result<Vec<PathBuf>> {
    let mut config = Config::load(&args.common.config)?;
    if let Some(seed) = args.common.seed {
        config.data.seed = seed;
    }
    let dir = args.common.out.clone().unwrap_or_else(|| config.artifacts.data_dir());
    let gains_path = config.artifacts.gains_path();
    let (gains, _) = load_gains(&gains_path)?;
    let base = config.data_base();
    let mut written = Vec::new();
    for role in selected(args.role) {
        log::info!("generating {} data", role.name());
        let data = match role {
            Role::Controller => generate_controller_data(&base, &gains, &config.data)?,
            Role::Estimator => generate_estimator_data(&base, &gains, &config.data)?,
            Role::Integrated => generate_integrated_data(&base, &gains, &config.data)?,
        };
        let path = dir.join(format!("{}.csv", role.name()));
        write_dataset(&path, &data)?;
        write_meta(&meta_path(&path), "gen-data", config.data.seed, &config)?;
        println!("{}: {} rows from {} runs -> {}", role.name(), data.len(), data.runs().len(), path.display());
        written.push(path);
    }
    Ok(written)
}

fn train_one(role: Role, data: &Dataset, config: &Config, gains: Option<&PidGains>) -> Result<RoleBundle> {
    let cfg = config.training.for_role(role);
    let gains = || gains.expect("loaded for torque roles");
    Ok(match role {
        Role::Controller => train_controller(data, cfg, gains())?,
        Role::Estimator => train_estimator(data, cfg)?,
        Role::Integrated => train_integrated(data, cfg, gains())?,
    })
}

pub fn train(args: &TrainArgs) -> Result<Vec<PathBuf>> {
    let common = &args.roles.common;
    let mut config = Config::load(&common.config)?;
    if let Some(seed) = common.seed {
        for role in ALL_ROLES {
            config.training.for_role_mut(role).train.seed = seed;
        }
    }
    let roles = selected(args.roles.role);
    let data_dir = args.data.clone().unwrap_or_else(|| config.artifacts.data_dir());
    let out = common.out.clone().unwrap_or_else(|| config.artifacts.bundles_dir());
    let gains = if roles.iter().any(|&r| r != Role::Estimator) {
        Some(load_gains(&config.artifacts.gains_path())?.0)
    } else {
        None
    };
    let mut written = Vec::new();
    for role in roles {
        let data = read_dataset(&data_dir.join(format!("{}.csv", role.name())), role)?;
        log::info!("training {} bundle on {} rows", role.name(), data.len());
        let bundle = train_one(role, &data, &config, gains.as_ref())?;
        let dir = out.join(role.name());
        save_bundle(&dir, &bundle)?;
        write_meta(&dir.join("meta.toml"), "train", config.training.for_role(role).train.seed, &config)?;
        println!(
            "{}: train RMSE [{}], held-out RMSE [{}] -> {}",
            role.name(),
            sci(&bundle.meta.train_rmse),
            sci(&bundle.meta.holdout_rmse),
            manifest_path(&dir).display()
        );
        written.push(dir);
    }
    Ok(written)
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

/// The six comparison rows: each condition with the ANFIS loop, then PID.
pub fn evaluation_rows(config: &Config, gains: PidGains, loaded: &[RoleBundle]) -> Result<Vec<EvaluationRow>> {
    let bundles = bundles_of(loaded);
    let mut rows = Vec::with_capacity(6);
    for (condition, base) in config.evaluation_conditions() {
        let loops = [
            ("ANFIS", config.evaluate.controller, config.evaluate.estimator),
            ("PID", ControllerKind::Pid, EstimatorKind::Truth),
        ];
        for (controller, ck, ek) in loops {
            let sim = attfis_core::sim::SimConfig { controller: ck, estimator: ek, gains, ..base.clone() };
            let record = run_closed_loop(&sim, &bundles)?;
            rows.push(EvaluationRow { condition, controller, metrics: metrics(&record) });
        }
    }
    Ok(rows)
}

pub fn evaluate(args: &Common) -> Result<PathBuf> {
    let mut config = Config::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.simulation.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| config.artifacts.dir.join("evaluate.csv"));
    let loaded = load_needed(&config, config.evaluate.controller, config.evaluate.estimator)?;
    let gains = gains_or_default(&config)?;
    let rows = evaluation_rows(&config, gains, &loaded)?;
    write_evaluation(&out, &rows)?;
    write_meta(&meta_path(&out), "evaluate", config.simulation.seed, &config)?;
    print!("{}", format_evaluation(&rows));
    println!("-> {}", out.display());
    Ok(out)
}

pub fn monte_carlo(args: &MonteCarloArgs) -> Result<PathBuf> {
    let common = &args.common;
    let mut config = Config::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.monte_carlo.master_seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| config.artifacts.dir.join("monte_carlo.csv"));
    let workers = match args.workers.or(config.monte_carlo.workers) {
        Some(w) => w,
        None => workers_from_env()?.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    let loaded = load_needed(&config, config.monte_carlo.controller, config.monte_carlo.estimator)?;
    let gains = gains_or_default(&config)?;
    let mc = config.monte_carlo_config(gains);
    log::info!("running {} Monte Carlo runs on {workers} workers", mc.n_runs);
    let report = run_parallel(&mc, &bundles_of(&loaded), workers)?;
    write_monte_carlo(&out, &report)?;
    write_meta(&meta_path(&out), "monte-carlo", config.monte_carlo.master_seed, &config)?;
    let last = report.rows.last().expect("at least one run");
    println!(
        "{} runs, {} failed, max |error| {:.4} deg, mean ({:.4}, {:.4}, {:.4}) deg, 3 sigma ({:.4}, {:.4}, {:.4}) deg -> {}",
        report.rows.len(),
        report.failed,
        report.max_abs_error(),
        last.mean[0],
        last.mean[1],
        last.mean[2],
        last.sigma3[0],
        last.sigma3[1],
        last.sigma3[2],
        out.display()
    );
    Ok(out)
}
