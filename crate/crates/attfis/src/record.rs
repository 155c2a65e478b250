//! Closed-loop run CSV, one row per sample.

use std::path::Path;

use attfis_core::dynamics::{AngularVelocity, BodyState, EulerAngles, Quaternion, Torque, Vec3};
use attfis_core::pid::{accumulate_cost, CostValue};
use attfis_core::sim::{Fuel, RunRecord};

use crate::csvfmt::{csv_error, finish, float, line_of, parse_fields, reader, write_row, writer};
use crate::error::{Error, Result};

pub const RECORD_COLUMNS: [&str; 27] = [
    "t", "q1", "q2", "q3", "q4", "w1", "w2", "w3", "qe1", "qe2", "qe3", "mc1", "mc2", "mc3", "applied1", "applied2",
    "applied3", "phi", "theta", "psi", "est_q1", "est_q2", "est_q3", "est_q4", "est_w1", "est_w2", "est_w3",
];

fn header() -> Vec<String> {
    RECORD_COLUMNS.iter().map(|c| c.to_string()).collect()
}

pub fn write_record(path: &Path, record: &RunRecord) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, header())?;
    for s in &record.samples {
        let qe = s.qe.vector();
        let mut row = Vec::with_capacity(RECORD_COLUMNS.len());
        row.push(s.t);
        row.extend(s.state.q.to_array());
        row.extend(s.state.omega.to_array());
        row.extend([qe.x, qe.y, qe.z]);
        row.extend(s.command.to_array());
        row.extend(s.applied.to_array());
        row.extend(s.euler.to_array());
        row.extend(s.estimate.q.to_array());
        row.extend(s.estimate.omega.to_array());
        write_row(&mut w, path, row.into_iter().map(float))?;
    }
    finish(w, path)
}

/// A sample as logged; the sensor reading is not part of the file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoggedSample {
    pub t: f64,
    pub state: BodyState,
    pub qe: Vec3,
    pub command: Torque,
    pub applied: Torque,
    pub euler: EulerAngles,
    pub estimate: BodyState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoggedRun {
    pub samples: Vec<LoggedSample>,
}

impl LoggedRun {
    /// Step size, recovered from the first two time stamps.
    pub fn dt(&self) -> f64 {
        match self.samples.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Same accumulation as the online fuel integral.
    pub fn fuel(&self) -> Fuel {
        let dt = self.dt();
        let mut per_axis = [0.0; 3];
        for s in &self.samples[..self.samples.len().saturating_sub(1)] {
            for (axis, f) in per_axis.iter_mut().enumerate() {
                *f += dt * s.applied.0[axis].abs();
            }
        }
        Fuel { per_axis, total: per_axis.iter().sum() }
    }

    /// Same accumulation as the online cost `J`.
    pub fn cost(&self) -> f64 {
        let dt = self.dt();
        self.samples[..self.samples.len().saturating_sub(1)]
            .iter()
            .fold(CostValue::default(), |c, s| accumulate_cost(c, &s.qe, &s.state.omega, dt))
            .0
    }
}

pub fn read_record(path: &Path) -> Result<LoggedRun> {
    let what = "run record";
    let mut r = reader(path, what, &header())?;
    let mut samples = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let v = parse_fields(record.iter(), line_of(&record), path, what)?;
        let quat = |i: usize| Quaternion::from_components(v[i], v[i + 1], v[i + 2], v[i + 3]);
        let triple = |i: usize| [v[i], v[i + 1], v[i + 2]];
        samples.push(LoggedSample {
            t: v[0],
            state: BodyState::new(quat(1), AngularVelocity::from_array(triple(5))),
            qe: Vec3::new(v[8], v[9], v[10]),
            command: Torque::from_array(triple(11)),
            applied: Torque::from_array(triple(14)),
            euler: EulerAngles::from_array(triple(17)),
            estimate: BodyState::new(quat(20), AngularVelocity::from_array(triple(24))),
        });
    }
    if samples.is_empty() {
        return Err(Error::Format { what, path: path.to_path_buf(), message: "no samples".into() });
    }
    Ok(LoggedRun { samples })
}
