//! Role bundle directory: `manifest.toml` plus one model file per output.
//!
//! ```toml
//! format = "attfis-bundle"
//! version = 1
//! role = "controller"
//! channels = [0, 1, 2, 3, 4, 5]
//! channel_names = ["qe1", "qe2", "qe3", "w1", "w2", "w3"]
//! ranges = [[-0.1, 0.1], ...]      # raw (min, max) per channel
//! outputs = ["mc1", "mc2", "mc3"]
//! models = ["mc1.toml", "mc2.toml", "mc3.toml"]
//!
//! [meta]
//! stride = 4
//! ...
//! ```

use std::path::{Path, PathBuf};

use attfis_core::roles::{BundleMeta, Role, RoleBundle};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::check_header;
use crate::io::{read_text, write_text};
use crate::model::{load_model, model_to_string, ModelTraining};

pub const BUNDLE_FORMAT: &str = "attfis-bundle";
pub const BUNDLE_VERSION: i64 = 1;
pub const MANIFEST: &str = "manifest.toml";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: i64,
    role: Role,
    channels: Vec<usize>,
    channel_names: Vec<String>,
    ranges: Vec<(f64, f64)>,
    outputs: Vec<String>,
    models: Vec<String>,
    meta: BundleMeta,
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST)
}

pub fn save_bundle(dir: &Path, bundle: &RoleBundle) -> Result<()> {
    let role = bundle.role();
    let names = role.input_names();
    let outputs = role.output_names();
    let models: Vec<String> = outputs.iter().map(|o| format!("{o}.toml")).collect();
    let meta = &bundle.meta;
    for (i, (model, file)) in bundle.models().iter().zip(&models).enumerate() {
        let training = ModelTraining {
            epochs: meta.train.epochs,
            final_rmse: meta.train_rmse.get(i).copied().unwrap_or(f64::NAN),
            seed: meta.train.seed,
        };
        write_text(&dir.join(file), &model_to_string(model, Some(&training)))?;
    }
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        role,
        channels: bundle.channels().to_vec(),
        channel_names: bundle.channels().iter().map(|&c| names[c].to_string()).collect(),
        ranges: bundle.ranges().to_vec(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        models,
        meta: meta.clone(),
    };
    write_text(&manifest_path(dir), &toml::to_string(&manifest).expect("manifest serializes"))
}

/// Loads the bundle in `dir`, checking it holds `expected` when given.
pub fn load_bundle(dir: &Path, expected: Option<Role>) -> Result<RoleBundle> {
    let path = manifest_path(dir);
    let text = read_text(&path, "bundle manifest")?;
    check_header(&text, &path, "bundle manifest", BUNDLE_FORMAT, BUNDLE_VERSION)?;
    let malformed = |message: String| Error::Format { what: "bundle manifest", path: path.clone(), message };
    let m: Manifest = toml::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if let Some(role) = expected {
        if m.role != role {
            return Err(malformed(format!("holds a {} bundle, expected {}", m.role.name(), role.name())));
        }
    }
    let names = m.role.input_names();
    if m.channel_names.len() != m.channels.len()
        || m.channels.iter().zip(&m.channel_names).any(|(&c, n)| names.get(c) != Some(&n.as_str()))
    {
        return Err(malformed("channel_names do not match the role's channels".into()));
    }
    if m.outputs.iter().map(String::as_str).ne(m.role.output_names().iter().copied())
        || m.models.len() != m.outputs.len()
    {
        return Err(malformed("outputs and models must list the role's outputs in order".into()));
    }
    let models =
        m.models.iter().map(|f| load_model(&dir.join(f)).map(|(model, _)| model)).collect::<Result<Vec<_>>>()?;
    RoleBundle::new(m.role, m.channels, m.ranges, models, m.meta).map_err(|e| malformed(e.to_string()))
}
