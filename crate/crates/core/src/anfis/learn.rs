//! Hybrid learning: least squares on the consequents, gradient descent on the
//! membership parameters.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{AnfisError, AnfisModel, BatchEvaluator, TrainingSet, UNDERFLOW_FLOOR};
use crate::anfis::membership::MIN_SHAPE;

/// Relative pivot size below which an unregularized QR solve is considered rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LseOutcome {
    /// Root-mean-square error on the data after the solve.
    pub rmse: f64,
    /// The unregularized system was rank deficient; the minimum-norm solution was used.
    pub rank_deficient: bool,
}

/// Root-mean-square error of `model` on `data`.
pub fn rmse(model: &AnfisModel, data: &TrainingSet) -> Result<f64, AnfisError> {
    if data.is_empty() {
        return Err(AnfisError::EmptyData);
    }
    let predictions = model.evaluate_batch(data)?;
    let sse: f64 = predictions.iter().zip(data.targets()).map(|(y, t)| (y - t) * (y - t)).sum();
    Ok(libm::sqrt(sse / data.len() as f64))
}

fn check_data(model: &AnfisModel, data: &TrainingSet) -> Result<(), AnfisError> {
    if data.is_empty() {
        return Err(AnfisError::EmptyData);
    }
    if data.n_inputs() != model.n_inputs() {
        return Err(AnfisError::DimensionMismatch { expected: model.n_inputs(), got: data.n_inputs() });
    }
    Ok(())
}

fn design_matrix(model: &AnfisModel, data: &TrainingSet, extra_rows: usize) -> DMatrix<f64> {
    let n = model.n_inputs();
    let width = n + 1;
    let rules = model.rule_count();
    let mut a = DMatrix::<f64>::zeros(data.len() + extra_rows, rules * width);
    let table = model.grid().index_table();
    let mut memberships = vec![0.0; model.grid().mfs_per_input().iter().sum()];
    let mut weights = vec![0.0; rules];
    for i in 0..data.len() {
        let x = data.input(i);
        model.normalized_weights(x, &table, &mut memberships, &mut weights);
        for (r, &w) in weights.iter().enumerate() {
            let col = r * width;
            for (j, &xj) in x.iter().enumerate() {
                a[(i, col + j)] = w * xj;
            }
            a[(i, col + n)] = w;
        }
    }
    a
}

/// Solves for the consequents in the least-squares sense with ridge `ridge`,
/// leaving the premises untouched.
///
/// The ridge term is applied by appending `sqrt(ridge) · I` below the design
/// matrix and factoring the stack with Householder QR. Without ridge, a rank
/// deficient system falls back to the SVD minimum-norm solution.
pub fn lse_consequents(model: &mut AnfisModel, data: &TrainingSet, ridge: f64) -> Result<LseOutcome, AnfisError> {
    check_data(model, data)?;
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(AnfisError::InvalidConfig("ridge must be finite and non-negative"));
    }
    let params = model.consequents().len();
    let rows = data.len();
    if rows < params {
        log::warn!("{rows} samples for {params} consequent parameters: least squares is underdetermined");
    }
    let extra = if ridge > 0.0 { params } else { 0 };
    let mut a = design_matrix(model, data, extra);
    let mut b = DVector::<f64>::zeros(rows + extra);
    b.rows_mut(0, rows).copy_from_slice(data.targets());
    if ridge > 0.0 {
        let s = libm::sqrt(ridge);
        for k in 0..params {
            a[(rows + k, k)] = s;
        }
    }

    let mut rank_deficient = a.nrows() < params;
    let mut solution = None;
    if !rank_deficient {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        let diag_min = r.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(libm::fabs(*v)));
        if diag_max > 0.0 && diag_min > RANK_TOL * diag_max {
            let mut qtb = b.clone();
            qr.q_tr_mul(&mut qtb);
            solution = r.solve_upper_triangular(&qtb.rows(0, params).into_owned());
        }
        rank_deficient = solution.is_none();
    }
    let p = match solution {
        Some(p) => p,
        None => {
            log::debug!("consequent system is rank deficient; using the minimum-norm solution");
            let svd = a.svd(true, true);
            let eps = svd.singular_values.max() * RANK_TOL;
            svd.solve(&b, eps).map_err(|_| AnfisError::Inconsistent("SVD solve failed"))?
        }
    };
    if !p.iter().all(|v| v.is_finite()) {
        return Err(AnfisError::Diverged { epoch: 0 });
    }
    model.set_consequents(p.iter().copied().collect())?;
    Ok(LseOutcome { rmse: rmse(model, data)?, rank_deficient })
}

/// Gradient of the summed squared error with respect to every premise parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct PremiseGradient {
    /// `(∂E/∂a, ∂E/∂b, ∂E/∂c)` triples in [`AnfisModel::premise_params`] order.
    pub values: Vec<f64>,
    /// `E = Σ (y - t)²` at the current parameters.
    pub loss: f64,
}

impl PremiseGradient {
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|g| g * g).sum())
    }
}

/// Backpropagates `E = Σ_i (y_i - t_i)²` from layer 5 to the bell parameters.
pub fn premise_gradient(model: &AnfisModel, data: &TrainingSet) -> Result<PremiseGradient, AnfisError> {
    check_data(model, data)?;
    let n = model.n_inputs();
    let rules = model.rule_count();
    let table = model.grid().index_table();
    let offsets = model.membership_offsets();
    let n_mf: usize = model.grid().mfs_per_input().iter().sum();
    let mut partials = Vec::with_capacity(n_mf);
    let mut firing = vec![0.0; rules];
    let mut rule_out = vec![0.0; rules];
    let mut d_mu = vec![0.0; n_mf];
    let mut values = vec![0.0; 3 * n_mf];
    let mut loss = 0.0;

    for i in 0..data.len() {
        let x = data.input(i);
        partials.clear();
        for (j, mfs) in model.premise().iter().enumerate() {
            partials.extend(mfs.iter().map(|mf| mf.partials(x[j])));
        }
        let mut total = 0.0;
        let mut any = false;
        for r in 0..rules {
            let idx = &table[r * n..(r + 1) * n];
            let w: f64 = idx.iter().enumerate().map(|(j, &m)| partials[offsets[j] + m].mu).product();
            any |= w >= UNDERFLOW_FLOOR;
            firing[r] = w;
            total += w;
            rule_out[r] = model.rule_output(r, x);
        }
        if !any || !(total > 0.0) {
            // Uniform fallback weights do not depend on the premises.
            let y = rule_out.iter().sum::<f64>() / rules as f64;
            loss += (y - data.target(i)) * (y - data.target(i));
            continue;
        }
        let y = firing.iter().zip(&rule_out).map(|(w, f)| w * f).sum::<f64>() / total;
        let e = y - data.target(i);
        loss += e * e;

        // ∂E/∂w_r = 2e (f_r - y) / S, and ∂w_r/∂μ_{j,m} = w_r / μ_{j,m}.
        d_mu.iter_mut().for_each(|v| *v = 0.0);
        let scale = 2.0 * e / total;
        for r in 0..rules {
            let g = scale * (rule_out[r] - y) * firing[r];
            if g == 0.0 {
                continue;
            }
            for (j, &m) in table[r * n..(r + 1) * n].iter().enumerate() {
                d_mu[offsets[j] + m] += g;
            }
        }
        for (k, p) in partials.iter().enumerate() {
            if p.mu == 0.0 || d_mu[k] == 0.0 {
                continue;
            }
            let g = d_mu[k] / p.mu;
            values[3 * k] += g * p.d_a;
            values[3 * k + 1] += g * p.d_b;
            values[3 * k + 2] += g * p.d_c;
        }
    }
    Ok(PremiseGradient { values, loss })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    /// Length of each premise step in parameter space.
    pub learning_rate: f64,
    /// Factor applied to the learning rate whenever the epoch RMSE increases.
    pub decay: f64,
    /// Ridge weight for the consequent solve.
    pub ridge: f64,
    /// Recorded in model metadata; training itself is deterministic.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 50, learning_rate: 0.01, decay: 0.5, ridge: 1e-8, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AnfisError> {
        if self.epochs == 0 {
            return Err(AnfisError::InvalidConfig("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(AnfisError::InvalidConfig("learning rate must be finite and non-negative"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(AnfisError::InvalidConfig("decay must be in (0, 1]"));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(AnfisError::InvalidConfig("ridge must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Lowest-RMSE model seen, including the incoming one.
    pub model: AnfisModel,
    pub initial_rmse: f64,
    pub best_rmse: f64,
    /// Epoch that produced `model`; zero means the incoming model was best.
    pub best_epoch: usize,
    /// RMSE after each epoch's consequent solve.
    pub history: Vec<f64>,
    pub final_learning_rate: f64,
}

/// Hybrid training. Each epoch solves the consequents by least squares, records
/// the RMSE, then takes one normalized gradient step on the premises.
pub fn train(model: &AnfisModel, data: &TrainingSet, config: &TrainConfig) -> Result<TrainOutcome, AnfisError> {
    config.validate()?;
    check_data(model, data)?;
    let needed = model.consequents().len();
    if data.len() < needed {
        log::warn!("training set has {} samples for {needed} consequent parameters", data.len());
    }
    let initial_rmse = rmse(model, data)?;
    let mut best = model.clone();
    let mut best_rmse = if initial_rmse.is_finite() { initial_rmse } else { f64::INFINITY };
    let mut best_epoch = 0;
    let mut current = model.clone();
    let mut eta = config.learning_rate;
    let mut previous = f64::INFINITY;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let outcome = lse_consequents(&mut current, data, config.ridge).map_err(|e| match e {
            AnfisError::Diverged { .. } => AnfisError::Diverged { epoch },
            other => other,
        })?;
        if !outcome.rmse.is_finite() {
            return Err(AnfisError::Diverged { epoch });
        }
        history.push(outcome.rmse);
        if outcome.rmse < best_rmse {
            best_rmse = outcome.rmse;
            best = current.clone();
            best_epoch = epoch;
        }
        if outcome.rmse > previous {
            eta *= config.decay;
        }
        previous = outcome.rmse;

        if eta > 0.0 && epoch < config.epochs {
            let grad = premise_gradient(&current, data)?;
            if !grad.loss.is_finite() {
                return Err(AnfisError::Diverged { epoch });
            }
            let norm = grad.norm();
            if norm > 0.0 && norm.is_finite() {
                let step = eta / norm;
                for (mfs_idx, (mf, g)) in current
                    .premise_mut()
                    .iter_mut()
                    .flat_map(|mfs| mfs.iter_mut())
                    .zip(grad.values.chunks(3))
                    .enumerate()
                {
                    let _ = mfs_idx;
                    mf.a = (mf.a - step * g[0]).max(MIN_SHAPE);
                    mf.b = (mf.b - step * g[1]).max(MIN_SHAPE);
                    mf.c -= step * g[2];
                }
            }
        }
    }

    Ok(TrainOutcome { model: best, initial_rmse, best_rmse, best_epoch, history, final_learning_rate: eta })
}

/// Convenience: predictions of `model` on every row of `data`.
pub fn predict(model: &AnfisModel, data: &TrainingSet) -> Result<Vec<f64>, AnfisError> {
    check_data(model, data)?;
    let mut eval = BatchEvaluator::new(model);
    Ok((0..data.len()).map(|i| eval.output(model, data.input(i))).collect())
}
