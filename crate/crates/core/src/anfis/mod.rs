//! First-order Takagi–Sugeno adaptive neuro-fuzzy inference system.
//!
//! The network has the usual five layers:
//!
//! 1. bell memberships `μ_{j,m}(x_j)` per input `j` and fuzzy set `m`;
//! 2. rule firing strengths `w_r = Π_j μ_{j,m_j(r)}` over a full grid partition;
//! 3. normalized strengths `w̄_r = w_r / Σ w`;
//! 4. weighted linear consequents `w̄_r · (p_r · x + r_r)`;
//! 5. the sum of layer 4.
//!
//! Training alternates a least-squares solve for the consequents with a
//! gradient step on the membership parameters (see [`learn`]).

pub mod learn;
pub mod membership;

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

pub use learn::{
    lse_consequents, premise_gradient, rmse, train, LseOutcome, PremiseGradient, TrainConfig, TrainOutcome,
};
pub use membership::MembershipFunction;

/// Firing strengths below this are treated as underflow.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnfisError {
    #[error("expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid membership function (a={a}, b={b}, c={c})")]
    InvalidMembership { a: f64, b: f64, c: f64 },
    #[error("degenerate range [{min}, {max}] for input {input}")]
    DegenerateRange { input: usize, min: f64, max: f64 },
    #[error("every input needs at least one membership function")]
    EmptyPartition,
    #[error("model structure is inconsistent: {0}")]
    Inconsistent(&'static str),
    #[error("training set is empty")]
    EmptyData,
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Full Cartesian rule grid over the input partitions.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RuleGrid {
    mfs_per_input: Vec<usize>,
}

impl RuleGrid {
    pub fn new(mfs_per_input: Vec<usize>) -> Result<Self, AnfisError> {
        if mfs_per_input.is_empty() || mfs_per_input.contains(&0) {
            return Err(AnfisError::EmptyPartition);
        }
        Ok(RuleGrid { mfs_per_input })
    }

    pub fn n_inputs(&self) -> usize {
        self.mfs_per_input.len()
    }

    pub fn mfs_per_input(&self) -> &[usize] {
        &self.mfs_per_input
    }

    pub fn rule_count(&self) -> usize {
        self.mfs_per_input.iter().product()
    }

    /// Per-input membership indices of `rule`; the last input varies fastest.
    pub fn rule_indices(&self, rule: usize) -> Vec<usize> {
        let mut out = vec![0; self.n_inputs()];
        self.fill_rule_indices(rule, &mut out);
        out
    }

    fn fill_rule_indices(&self, mut rule: usize, out: &mut [usize]) {
        for (slot, &m) in out.iter_mut().zip(&self.mfs_per_input).rev() {
            *slot = rule % m;
            rule /= m;
        }
    }

    /// Flattened `rule_count × n_inputs` index table.
    pub(crate) fn index_table(&self) -> Vec<usize> {
        let n = self.n_inputs();
        let mut table = vec![0; self.rule_count() * n];
        for (rule, chunk) in table.chunks_mut(n).enumerate() {
            self.fill_rule_indices(rule, chunk);
        }
        table
    }
}

/// Trained or initialized ANFIS with one scalar output.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnfisModel {
    grid: RuleGrid,
    /// `premise[j][m]`: membership function `m` of input `j`.
    premise: Vec<Vec<MembershipFunction>>,
    /// Rule-major consequents: rule `r` owns `[p_1 .. p_n, bias]`.
    consequents: Vec<f64>,
    /// Input envelope the model was built for, `(min, max)` per input.
    input_ranges: Vec<(f64, f64)>,
}

/// All layer outputs of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPass {
    /// Layer 1, `memberships[j][m]`.
    pub memberships: Vec<Vec<f64>>,
    /// Layer 2.
    pub firing: Vec<f64>,
    /// Layer 3.
    pub normalized: Vec<f64>,
    /// Linear consequent value of each rule.
    pub rule_outputs: Vec<f64>,
    /// Layer 4.
    pub weighted: Vec<f64>,
    /// Layer 5.
    pub output: f64,
    /// True when every firing strength underflowed and uniform weights were used.
    pub underflow: bool,
}

impl AnfisModel {
    pub fn from_parts(
        grid: RuleGrid,
        premise: Vec<Vec<MembershipFunction>>,
        consequents: Vec<f64>,
        input_ranges: Vec<(f64, f64)>,
    ) -> Result<Self, AnfisError> {
        let n = grid.n_inputs();
        if premise.len() != n || input_ranges.len() != n {
            return Err(AnfisError::Inconsistent("premise or range count differs from input count"));
        }
        for (mfs, &m) in premise.iter().zip(grid.mfs_per_input()) {
            if mfs.len() != m {
                return Err(AnfisError::Inconsistent("membership count differs from the grid"));
            }
            for mf in mfs {
                mf.validate()?;
            }
        }
        if consequents.len() != grid.rule_count() * (n + 1) {
            return Err(AnfisError::Inconsistent("consequent count must be rules x (inputs + 1)"));
        }
        if !consequents.iter().all(|v| v.is_finite()) {
            return Err(AnfisError::Inconsistent("non-finite consequent"));
        }
        Ok(AnfisModel { grid, premise, consequents, input_ranges })
    }

    pub fn grid(&self) -> &RuleGrid {
        &self.grid
    }

    pub fn n_inputs(&self) -> usize {
        self.grid.n_inputs()
    }

    pub fn rule_count(&self) -> usize {
        self.grid.rule_count()
    }

    pub fn premise(&self) -> &[Vec<MembershipFunction>] {
        &self.premise
    }

    pub fn consequents(&self) -> &[f64] {
        &self.consequents
    }

    pub fn input_ranges(&self) -> &[(f64, f64)] {
        &self.input_ranges
    }

    /// Consequent row `[p_1 .. p_n, bias]` of `rule`.
    pub fn rule_consequent(&self, rule: usize) -> &[f64] {
        let w = self.n_inputs() + 1;
        &self.consequents[rule * w..(rule + 1) * w]
    }

    pub fn set_consequents(&mut self, consequents: Vec<f64>) -> Result<(), AnfisError> {
        if consequents.len() != self.consequents.len() {
            return Err(AnfisError::Inconsistent("consequent count must be rules x (inputs + 1)"));
        }
        self.consequents = consequents;
        Ok(())
    }

    /// Premise parameters flattened as `(a, b, c)` triples, input-major.
    pub fn premise_params(&self) -> Vec<f64> {
        self.premise.iter().flatten().flat_map(|mf| [mf.a, mf.b, mf.c]).collect()
    }

    pub fn set_premise_params(&mut self, params: &[f64]) -> Result<(), AnfisError> {
        let count: usize = self.grid.mfs_per_input().iter().sum();
        if params.len() != 3 * count {
            return Err(AnfisError::Inconsistent("premise parameter count"));
        }
        let mut it = params.chunks(3);
        for mfs in self.premise.iter_mut() {
            for mf in mfs.iter_mut() {
                let p = it.next().expect("length checked");
                let next = MembershipFunction { a: p[0], b: p[1], c: p[2] };
                next.validate()?;
                *mf = next;
            }
        }
        Ok(())
    }

    pub(crate) fn premise_mut(&mut self) -> &mut [Vec<MembershipFunction>] {
        &mut self.premise
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), AnfisError> {
        if x.len() != self.n_inputs() {
            return Err(AnfisError::DimensionMismatch { expected: self.n_inputs(), got: x.len() });
        }
        Ok(())
    }

    /// Layer 3 weights for `x` into `normalized`; returns whether underflow
    /// forced uniform weights. `memberships` is scratch of length Σ m_j.
    pub(crate) fn normalized_weights(
        &self,
        x: &[f64],
        table: &[usize],
        memberships: &mut [f64],
        normalized: &mut [f64],
    ) -> bool {
        let n = self.n_inputs();
        let offsets = self.membership_offsets();
        for (j, mfs) in self.premise.iter().enumerate() {
            for (m, mf) in mfs.iter().enumerate() {
                memberships[offsets[j] + m] = mf.eval(x[j]);
            }
        }
        let mut total = 0.0;
        let mut any = false;
        for (rule, w) in normalized.iter_mut().enumerate() {
            let idx = &table[rule * n..(rule + 1) * n];
            let mut prod = 1.0;
            for (j, &m) in idx.iter().enumerate() {
                prod *= memberships[offsets[j] + m];
            }
            any |= prod >= UNDERFLOW_FLOOR;
            *w = prod;
            total += prod;
        }
        if !any || !(total > 0.0) {
            let u = 1.0 / normalized.len() as f64;
            normalized.iter_mut().for_each(|w| *w = u);
            return true;
        }
        normalized.iter_mut().for_each(|w| *w /= total);
        false
    }

    pub(crate) fn membership_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.grid
            .mfs_per_input()
            .iter()
            .map(|m| {
                let o = acc;
                acc += m;
                o
            })
            .collect()
    }

    pub(crate) fn rule_output(&self, rule: usize, x: &[f64]) -> f64 {
        let c = self.rule_consequent(rule);
        let n = x.len();
        c[..n].iter().zip(x).map(|(p, xi)| p * xi).sum::<f64>() + c[n]
    }

    /// Full five-layer evaluation with every intermediate kept.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass, AnfisError> {
        self.check_dim(x)?;
        let memberships: Vec<Vec<f64>> =
            self.premise.iter().zip(x).map(|(mfs, &xi)| mfs.iter().map(|mf| mf.eval(xi)).collect()).collect();
        let rules = self.rule_count();
        let mut firing = vec![0.0; rules];
        let mut indices = vec![0; self.n_inputs()];
        for (rule, w) in firing.iter_mut().enumerate() {
            self.grid.fill_rule_indices(rule, &mut indices);
            *w = indices.iter().enumerate().map(|(j, &m)| memberships[j][m]).product();
        }
        let total: f64 = firing.iter().sum();
        let underflow = firing.iter().all(|&w| w < UNDERFLOW_FLOOR) || !(total > 0.0);
        let normalized: Vec<f64> = if underflow {
            log::debug!("all rule firing strengths underflowed; using uniform weights");
            vec![1.0 / rules as f64; rules]
        } else {
            firing.iter().map(|w| w / total).collect()
        };
        let rule_outputs: Vec<f64> = (0..rules).map(|r| self.rule_output(r, x)).collect();
        let weighted: Vec<f64> = normalized.iter().zip(&rule_outputs).map(|(w, f)| w * f).collect();
        let output = weighted.iter().sum();
        Ok(ForwardPass { memberships, firing, normalized, rule_outputs, weighted, output, underflow })
    }

    /// Layer 5 output only.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, AnfisError> {
        Ok(self.forward(x)?.output)
    }

    /// Evaluates many inputs, reusing buffers.
    pub fn evaluate_batch(&self, data: &TrainingSet) -> Result<Vec<f64>, AnfisError> {
        self.check_dim(&vec![0.0; data.n_inputs()])?;
        let mut eval = BatchEvaluator::new(self);
        Ok((0..data.len()).map(|i| eval.output(self, data.input(i))).collect())
    }

    /// True when `x` lies outside the stored range widened by `factor` about its center.
    pub fn extrapolates(&self, x: &[f64], factor: f64) -> bool {
        x.iter().zip(&self.input_ranges).any(|(&v, &(lo, hi))| {
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo) * factor;
            v < mid - half || v > mid + half
        })
    }
}

/// Reusable scratch space for repeated forward passes on one model.
pub struct BatchEvaluator {
    table: Vec<usize>,
    memberships: Vec<f64>,
    normalized: Vec<f64>,
}

impl BatchEvaluator {
    pub fn new(model: &AnfisModel) -> Self {
        BatchEvaluator {
            table: model.grid.index_table(),
            memberships: vec![0.0; model.grid.mfs_per_input().iter().sum()],
            normalized: vec![0.0; model.rule_count()],
        }
    }

    /// Output for `x`; `x` must have the model's input dimension.
    pub fn output(&mut self, model: &AnfisModel, x: &[f64]) -> f64 {
        model.normalized_weights(x, &self.table, &mut self.memberships, &mut self.normalized);
        self.normalized.iter().enumerate().map(|(r, w)| w * model.rule_output(r, x)).sum()
    }
}

/// Grid-partition initialization: equally spaced centers spanning each range,
/// widths of half the spacing, slope 2, zero consequents. An input with a
/// single membership function gets one set centered on its range; it scales
/// every rule equally and so acts only through the linear consequents.
pub fn grid_partition_init(ranges: &[(f64, f64)], mfs_per_input: &[usize]) -> Result<AnfisModel, AnfisError> {
    if ranges.len() != mfs_per_input.len() {
        return Err(AnfisError::Inconsistent("one range per input is required"));
    }
    let grid = RuleGrid::new(mfs_per_input.to_vec())?;
    let mut premise = Vec::with_capacity(ranges.len());
    for (input, (&(lo, hi), &m)) in ranges.iter().zip(mfs_per_input).enumerate() {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(AnfisError::DegenerateRange { input, min: lo, max: hi });
        }
        let mfs = if m == 1 {
            vec![MembershipFunction::new(hi - lo, 2.0, 0.5 * (lo + hi))?]
        } else {
            let spacing = (hi - lo) / (m - 1) as f64;
            (0..m)
                .map(|k| {
                    let c = if k == m - 1 { hi } else { lo + spacing * k as f64 };
                    MembershipFunction::new(0.5 * spacing, 2.0, c)
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        premise.push(mfs);
    }
    let consequents = vec![0.0; grid.rule_count() * (ranges.len() + 1)];
    AnfisModel::from_parts(grid, premise, consequents, ranges.to_vec())
}

/// Row-major input matrix with scalar targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    n_inputs: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(n_inputs: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self, AnfisError> {
        if n_inputs == 0 || inputs.len() != n_inputs * targets.len() {
            return Err(AnfisError::Inconsistent("inputs must be targets x n_inputs"));
        }
        Ok(TrainingSet { n_inputs, inputs, targets })
    }

    pub fn from_rows<'a, I: IntoIterator<Item = (&'a [f64], f64)>>(
        n_inputs: usize,
        rows: I,
    ) -> Result<Self, AnfisError> {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (x, y) in rows {
            if x.len() != n_inputs {
                return Err(AnfisError::DimensionMismatch { expected: n_inputs, got: x.len() });
            }
            inputs.extend_from_slice(x);
            targets.push(y);
        }
        TrainingSet::new(n_inputs, inputs, targets)
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_inputs..(i + 1) * self.n_inputs]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Observed `(min, max)` of every input column.
    pub fn input_ranges(&self) -> Vec<(f64, f64)> {
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); self.n_inputs];
        for row in self.inputs.chunks(self.n_inputs) {
            for (r, &v) in ranges.iter_mut().zip(row) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        ranges
    }

    /// Concatenation with another set of the same width.
    pub fn extend(&mut self, other: &TrainingSet) -> Result<(), AnfisError> {
        if other.n_inputs != self.n_inputs {
            return Err(AnfisError::DimensionMismatch { expected: self.n_inputs, got: other.n_inputs });
        }
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
        Ok(())
    }
}
