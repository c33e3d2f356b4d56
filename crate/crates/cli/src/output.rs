//! CSV result rows. Column order is frozen.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One result row. Empty cells mean "not applicable".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub eps_b: Option<f64>,
    pub u: Option<usize>,
    pub v: Option<usize>,
    pub m: Option<usize>,
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub n_iter: Option<usize>,
    #[serde(rename = "N_mc")]
    pub n_mc: Option<usize>,
    pub seed: Option<u64>,
    pub rate_bits: Option<f64>,
    pub std_err: Option<f64>,
    pub sigma_dp: Option<f64>,
    pub sigma_span: Option<f64>,
    pub wall_ms: u128,
}

pub const COLUMNS: [&str; 15] = [
    "model", "eps_b", "u", "v", "m", "delta", "eta", "n_iter", "N_mc", "seed", "rate_bits", "std_err", "sigma_dp", "sigma_span",
    "wall_ms",
];

/// Writes rows with a header line.
pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

/// CSV text with the timing column removed, for reproducibility checks.
pub fn payload(text: &str) -> String {
    text.lines()
        .map(|line| line.rsplit_once(',').map_or(line, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}
