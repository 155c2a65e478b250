//! PID gains file.
//!
//! ```toml
//! format = "attfis-gains"
//! version = 1
//! mc_max = 1.0
//!
//! [gains]
//! kp1 = -2.0
//! ...
//! kw3 = -0.05
//!
//! [tuning]          # optional
//! cost = 0.81
//! initial_cost = 1.7
//! evaluations = 500
//! restarts = 1
//! seed = 0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use attfis_core::pid::{GainTuning, PidGains};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_text, write_text};

pub const GAINS_FORMAT: &str = "attfis-gains";
pub const GAINS_VERSION: i64 = 1;

/// Order of the named gains, matching [`PidGains::stacked`].
pub const GAIN_NAMES: [&str; 12] = ["kp1", "kp2", "kp3", "kd1", "kd2", "kd3", "kq1", "kq2", "kq3", "kw1", "kw2", "kw3"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSummary {
    pub cost: f64,
    pub initial_cost: f64,
    pub evaluations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl TuningSummary {
    pub fn new(tuning: &GainTuning, seed: u64) -> Self {
        TuningSummary {
            cost: tuning.cost,
            initial_cost: tuning.initial_cost,
            evaluations: tuning.evaluations,
            restarts: tuning.restarts,
            seed,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsFile {
    format: String,
    version: i64,
    mc_max: f64,
    gains: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tuning: Option<TuningSummary>,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<i64>,
}

/// Reads `format` and `version` only, so a newer file is reported as a version
/// problem rather than as whatever field it happens to break on.
pub(crate) fn check_header(text: &str, path: &Path, what: &'static str, format: &str, version: i64) -> Result<()> {
    let malformed = |message: String| Error::Format { what, path: path.to_path_buf(), message };
    let header: Header = toml::from_str(text).map_err(|e| malformed(e.to_string()))?;
    match header.format.as_deref() {
        Some(f) if f == format => {}
        Some(f) => return Err(malformed(format!("format is {f:?}, expected {format:?}"))),
        None => return Err(malformed("missing format field".into())),
    }
    match header.version {
        Some(v) if v == version => Ok(()),
        Some(v) => Err(Error::Version { what, path: path.to_path_buf(), found: v, expected: version }),
        None => Err(malformed("missing version field".into())),
    }
}

pub fn gains_to_string(gains: &PidGains, tuning: Option<&TuningSummary>) -> String {
    let file = GainsFile {
        format: GAINS_FORMAT.into(),
        version: GAINS_VERSION,
        mc_max: gains.mc_max,
        gains: GAIN_NAMES.iter().zip(gains.stacked()).map(|(n, v)| (n.to_string(), v)).collect(),
        tuning: tuning.cloned(),
    };
    toml::to_string(&file).expect("gains serialize")
}

pub fn gains_from_str(text: &str, path: &Path) -> Result<(PidGains, Option<TuningSummary>)> {
    check_header(text, path, "gains file", GAINS_FORMAT, GAINS_VERSION)?;
    let malformed = |message: String| Error::Format { what: "gains file", path: path.to_path_buf(), message };
    let file: GainsFile = toml::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let mut stacked = [0.0; 12];
    for (slot, name) in stacked.iter_mut().zip(GAIN_NAMES) {
        *slot = *file.gains.get(name).ok_or_else(|| malformed(format!("missing gain {name}")))?;
    }
    if let Some(extra) = file.gains.keys().find(|k| !GAIN_NAMES.contains(&k.as_str())) {
        return Err(malformed(format!("unknown gain {extra}")));
    }
    let gains = PidGains::from_stacked(&stacked, file.mc_max);
    gains.validate().map_err(|e| malformed(e.to_string()))?;
    Ok((gains, file.tuning))
}

pub fn save_gains(path: &Path, gains: &PidGains, tuning: Option<&TuningSummary>) -> Result<()> {
    write_text(path, &gains_to_string(gains, tuning))
}

pub fn load_gains(path: &Path) -> Result<(PidGains, Option<TuningSummary>)> {
    let text = read_text(path, "gains file")?;
    gains_from_str(&text, path)
}
