//! Plot-ready CSV output and the run manifest.

use serde::{Deserialize, Serialize};
use std::io::Write;

use super::CurveResult;
use crate::error::{Error, Result};

/// Writes `c1,design,rate,se,mse_psi_1..s,discarded`, one line per curve point.
pub fn write_curve_csv<W: Write>(result: &CurveResult, w: W) -> Result<()> {
    let s = result.rows.first().map_or(0, |r| r.mse_psi.len());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["c1".to_string(), "design".into(), "rate".into(), "se".into()];
    header.extend((1..=s).map(|j| format!("mse_psi_{j}")));
    header.push("discarded".into());
    wtr.write_record(&header).map_err(csv_error)?;
    for row in &result.rows {
        let mut rec = vec![
            row.c1.to_string(),
            row.design.clone(),
            row.rejection_rate.to_string(),
            row.mc_standard_error.to_string(),
        ];
        rec.extend(row.mse_psi.iter().map(|v| v.to_string()));
        rec.push(row.discarded.to_string());
        wtr.write_record(&rec).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Everything needed to rerun a command: the full configuration, seeds and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub replications: Option<usize>,
    /// How replication seeds derive from `seed`.
    pub seed_rule: String,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64, replications: Option<usize>) -> Self {
        Self {
            manifest_version: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            seed,
            replications,
            seed_rule: "replication r draws its data with seed + r".into(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }
}
