//! ANFIS model file.
//!
//! ```toml
//! format = "attfis-anfis"
//! version = 1
//! n_inputs = 2
//! mfs_per_input = [2, 2]
//! input_ranges = [[-1.0, 1.0], [-1.0, 1.0]]
//!
//! [training]        # optional
//! epochs = 5
//! final_rmse = 0.0012
//! seed = 0
//!
//! [[premise]]       # one per (input, mf)
//! input = 0
//! mf = 0
//! a = 1.0
//! b = 2.0
//! c = -1.0
//!
//! [[consequent]]    # one per rule, rules in grid order
//! rule = 0
//! coefficients = [0.1, -0.3]
//! bias = 0.02
//! ```
//!
//! Floats are written in shortest round-trip form, so save then load gives
//! back the same bits.

use std::path::Path;

use attfis_core::anfis::{AnfisModel, MembershipFunction, RuleGrid};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::check_header;
use crate::io::{read_text, write_text};

pub const MODEL_FORMAT: &str = "attfis-anfis";
pub const MODEL_VERSION: i64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTraining {
    pub epochs: usize,
    pub final_rmse: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PremiseRow {
    input: usize,
    mf: usize,
    a: f64,
    b: f64,
    c: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsequentRow {
    rule: usize,
    coefficients: Vec<f64>,
    bias: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: i64,
    n_inputs: usize,
    mfs_per_input: Vec<usize>,
    input_ranges: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<ModelTraining>,
    premise: Vec<PremiseRow>,
    consequent: Vec<ConsequentRow>,
}

pub fn model_to_string(model: &AnfisModel, training: Option<&ModelTraining>) -> String {
    let n = model.n_inputs();
    let premise = model
        .premise()
        .iter()
        .enumerate()
        .flat_map(|(input, mfs)| {
            mfs.iter().enumerate().map(move |(mf, m)| PremiseRow { input, mf, a: m.a, b: m.b, c: m.c })
        })
        .collect();
    let consequent = (0..model.rule_count())
        .map(|rule| {
            let row = model.rule_consequent(rule);
            ConsequentRow { rule, coefficients: row[..n].to_vec(), bias: row[n] }
        })
        .collect();
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        n_inputs: n,
        mfs_per_input: model.grid().mfs_per_input().to_vec(),
        input_ranges: model.input_ranges().to_vec(),
        training: training.cloned(),
        premise,
        consequent,
    };
    toml::to_string(&file).expect("model serializes")
}

pub fn model_from_str(text: &str, path: &Path) -> Result<(AnfisModel, Option<ModelTraining>)> {
    check_header(text, path, "model file", MODEL_FORMAT, MODEL_VERSION)?;
    let malformed = |message: String| Error::Format { what: "model file", path: path.to_path_buf(), message };
    let file: ModelFile = toml::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let n = file.n_inputs;
    if file.mfs_per_input.len() != n || file.input_ranges.len() != n {
        return Err(malformed(format!("mfs_per_input and input_ranges must both have n_inputs = {n} entries")));
    }
    let grid = RuleGrid::new(file.mfs_per_input.clone()).map_err(|e| malformed(e.to_string()))?;

    let mut premise: Vec<Vec<Option<MembershipFunction>>> = file.mfs_per_input.iter().map(|&m| vec![None; m]).collect();
    for row in &file.premise {
        let slot = premise
            .get_mut(row.input)
            .and_then(|mfs| mfs.get_mut(row.mf))
            .ok_or_else(|| malformed(format!("premise entry input {} mf {} is outside the grid", row.input, row.mf)))?;
        if slot.is_some() {
            return Err(malformed(format!("duplicate premise entry input {} mf {}", row.input, row.mf)));
        }
        *slot = Some(MembershipFunction::new(row.a, row.b, row.c).map_err(|e| malformed(e.to_string()))?);
    }
    let premise = premise
        .into_iter()
        .enumerate()
        .map(|(j, mfs)| {
            mfs.into_iter()
                .enumerate()
                .map(|(m, mf)| mf.ok_or_else(|| malformed(format!("missing premise entry input {j} mf {m}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let rules = grid.rule_count();
    if file.consequent.len() != rules {
        return Err(malformed(format!("expected {rules} consequent entries, found {}", file.consequent.len())));
    }
    let mut consequents = Vec::with_capacity(rules * (n + 1));
    for (r, row) in file.consequent.iter().enumerate() {
        if row.rule != r {
            return Err(malformed(format!("consequent entry {r} is labelled rule {}", row.rule)));
        }
        if row.coefficients.len() != n {
            return Err(malformed(format!("rule {r} has {} coefficients, expected {n}", row.coefficients.len())));
        }
        consequents.extend_from_slice(&row.coefficients);
        consequents.push(row.bias);
    }
    let model =
        AnfisModel::from_parts(grid, premise, consequents, file.input_ranges).map_err(|e| malformed(e.to_string()))?;
    Ok((model, file.training))
}

pub fn save_model(path: &Path, model: &AnfisModel, training: Option<&ModelTraining>) -> Result<()> {
    write_text(path, &model_to_string(model, training))
}

pub fn load_model(path: &Path) -> Result<(AnfisModel, Option<ModelTraining>)> {
    let text = read_text(path, "model file")?;
    model_from_str(&text, path)
}
