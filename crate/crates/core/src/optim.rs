//! Derivative-free minimization with a restarted Nelder–Mead simplex.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadConfig {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Initial simplex edge relative to each coordinate's magnitude.
    pub relative_step: f64,
    /// Lower bound on the initial edge, for coordinates at or near zero.
    pub absolute_step: f64,
    /// Simplex is considered collapsed when the spread of values drops below this.
    pub f_tol: f64,
    /// ...or when every vertex is within this distance of the best one.
    pub x_tol: f64,
    pub seed: u64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig { budget: 500, relative_step: 0.25, absolute_step: 0.05, f_tol: 1e-10, x_tol: 1e-9, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub evaluations: usize,
    pub restarts: usize,
    /// Best value seen after each evaluation.
    pub history: Vec<f64>,
}

struct Counted<'a, F> {
    f: &'a mut F,
    budget: usize,
    best_x: Vec<f64>,
    best: f64,
    history: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<'_, F> {
    fn exhausted(&self) -> bool {
        self.history.len() >= self.budget
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        let v = if v.is_finite() { v } else { f64::INFINITY };
        if v < self.best {
            self.best = v;
            self.best_x.clear();
            self.best_x.extend_from_slice(x);
        }
        self.history.push(self.best);
        v
    }
}

fn axpy(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Minimizes `f` starting at `x0`. Non-finite objective values count as `+∞`.
///
/// Coefficients follow the dimension-adaptive variant (Gao & Han), which
/// behaves better than the classic ones beyond a handful of parameters. When
/// the simplex collapses and budget remains, it is rebuilt around the best
/// point with randomly signed edges drawn from `seed`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(f: &mut F, x0: &[f64], config: &NelderMeadConfig) -> Minimum {
    let n = x0.len();
    let mut counted =
        Counted { f, budget: config.budget.max(1), best_x: x0.to_vec(), best: f64::INFINITY, history: Vec::new() };
    let initial_value = counted.eval(x0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let nf = n.max(1) as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut restarts: usize = 0;
    let mut scale = 1.0;
    let mut first = true;
    while n > 0 && !counted.exhausted() {
        // Build the simplex around the incumbent.
        let base = counted.best_x.clone();
        let base_value = counted.best;
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(base.clone(), base_value)];
        for i in 0..n {
            if counted.exhausted() {
                break;
            }
            let mut v = base.clone();
            let step = (libm::fabs(base[i]) * config.relative_step).max(config.absolute_step) * scale;
            let sign = if first || rng.random::<bool>() { 1.0 } else { -1.0 };
            v[i] += sign * step;
            let fv = counted.eval(&v);
            simplex.push((v, fv));
        }
        if simplex.len() < n + 1 {
            break;
        }
        first = false;

        loop {
            if counted.exhausted() {
                break;
            }
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            let size = simplex[1..]
                .iter()
                .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if (spread.is_finite() && spread <= config.f_tol) || size <= config.x_tol {
                break;
            }

            let mut centroid = vec![0.0; n];
            for (v, _) in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / nf;
                }
            }
            let worst = simplex[n].clone();
            let reflected = axpy(&centroid, &worst.0, -alpha);
            let fr = counted.eval(&reflected);

            if fr < simplex[0].1 {
                if counted.exhausted() {
                    simplex[n] = (reflected, fr);
                    break;
                }
                let expanded = axpy(&centroid, &worst.0, -alpha * beta);
                let fe = counted.eval(&expanded);
                simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (reflected, fr);
                continue;
            }
            if counted.exhausted() {
                break;
            }
            let (contracted, fc) = if fr < worst.1 {
                let c = axpy(&centroid, &reflected, gamma);
                let fc = counted.eval(&c);
                (c, fc)
            } else {
                let c = axpy(&centroid, &worst.0, gamma);
                let fc = counted.eval(&c);
                (c, fc)
            };
            if fc < fr.min(worst.1) {
                simplex[n] = (contracted, fc);
                continue;
            }
            // Shrink toward the best vertex.
            let best = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                if counted.exhausted() {
                    break;
                }
                let v = axpy(&best, &vertex.0, delta);
                let fv = counted.eval(&v);
                *vertex = (v, fv);
            }
        }
        restarts += 1;
        scale *= 0.5;
    }

    Minimum {
        x: counted.best_x,
        value: counted.best,
        initial_value,
        evaluations: counted.history.len(),
        restarts: restarts.saturating_sub(1),
        history: counted.history,
    }
}
