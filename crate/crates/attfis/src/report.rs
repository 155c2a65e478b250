//! Monte Carlo and evaluation report CSVs.

use std::fmt::Write as _;
use std::path::Path;

use attfis_core::sim::{Metrics, MonteCarloReport};

use crate::csvfmt::{finish, float, write_row, writer};
use crate::error::Result;

pub const MONTE_CARLO_COLUMNS: [&str; 10] = [
    "run",
    "err_phi",
    "err_theta",
    "err_psi",
    "mean_phi",
    "mean_theta",
    "mean_psi",
    "sigma3_phi",
    "sigma3_theta",
    "sigma3_psi",
];

/// Failed runs keep their row with empty error fields; the running
/// statistics carry over from the last successful run.
pub fn write_monte_carlo(path: &Path, report: &MonteCarloReport) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, MONTE_CARLO_COLUMNS)?;
    for row in &report.rows {
        let err = match row.error {
            Some(e) => e.map(float),
            None => [String::new(), String::new(), String::new()],
        };
        let fields = std::iter::once(row.run.to_string())
            .chain(err)
            .chain(row.mean.iter().chain(&row.sigma3).map(|&v| float(v)));
        write_row(&mut w, path, fields)?;
    }
    finish(w, path)
}

pub const EVALUATE_COLUMNS: [&str; 13] = [
    "condition",
    "controller",
    "fuel_x",
    "fuel_y",
    "fuel_z",
    "fuel_total",
    "settle_phi",
    "settle_theta",
    "settle_psi",
    "final_phi",
    "final_theta",
    "final_psi",
    "cost",
];

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationRow {
    pub condition: &'static str,
    pub controller: &'static str,
    pub metrics: Metrics,
}

fn settle(s: Option<f64>) -> String {
    s.map(float).unwrap_or_default()
}

/// Unsettled axes leave their settling field empty.
pub fn write_evaluation(path: &Path, rows: &[EvaluationRow]) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, EVALUATE_COLUMNS)?;
    for r in rows {
        let m = &r.metrics;
        let mut fields = vec![r.condition.to_string(), r.controller.to_string()];
        fields.extend(m.fuel.per_axis.iter().chain([&m.fuel.total]).map(|&v| float(v)));
        fields.extend(m.settling.iter().map(|&s| settle(s)));
        fields.extend(m.final_error.iter().chain([&m.cost]).map(|&v| float(v)));
        write_row(&mut w, path, fields)?;
    }
    finish(w, path)
}

/// Fuel and settling-time tables for the terminal.
pub fn format_evaluation(rows: &[EvaluationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Fuel consumption (N m s)");
    let _ = writeln!(out, "{:<12} {:<10} {:>8} {:>8} {:>8} {:>8}", "condition", "controller", "X", "Y", "Z", "total");
    for r in rows {
        let f = &r.metrics.fuel;
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.condition, r.controller, f.per_axis[0], f.per_axis[1], f.per_axis[2], f.total
        );
    }
    let _ = writeln!(out, "\nSettling time for 1% error (s)");
    let _ = writeln!(out, "{:<12} {:<10} {:>8} {:>8} {:>8}", "condition", "controller", "phi", "theta", "psi");
    for r in rows {
        let s = r.metrics.settling.map(|s| s.map_or("-".to_string(), |t| format!("{t:.2}")));
        let _ = writeln!(out, "{:<12} {:<10} {:>8} {:>8} {:>8}", r.condition, r.controller, s[0], s[1], s[2]);
    }
    out
}
