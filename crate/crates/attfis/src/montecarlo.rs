//! Monte Carlo campaign on a worker pool.

use attfis_core::sim::{monte_carlo_run, Bundles, MonteCarloConfig, MonteCarloReport, MonteCarloRun};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const WORKERS_ENV: &str = "ATTFIS_WORKERS";

/// Worker count from `ATTFIS_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Pool(format!("{WORKERS_ENV}={s:?} is not a positive integer"))),
        },
    }
}

/// Runs every campaign member on `workers` threads. Each run owns its derived
/// seed and lands in its own slot, so the report does not depend on
/// scheduling or on the worker count.
pub fn run_parallel(config: &MonteCarloConfig, bundles: &Bundles<'_>, workers: usize) -> Result<MonteCarloReport> {
    config.validate()?;
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| Error::Pool(e.to_string()))?;
    let runs: Vec<MonteCarloRun> =
        pool.install(|| (0..config.n_runs).into_par_iter().map(|k| monte_carlo_run(config, k, bundles)).collect());
    for run in &runs {
        if let Err(e) = &run.outcome {
            log::warn!("Monte Carlo run {} failed: {e}", run.run);
        }
    }
    Ok(MonteCarloReport::from_runs(&runs))
}
