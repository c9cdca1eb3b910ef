//! Report and checkpoint files.
//!
//! A solve writes `report.json`, `curves.csv` (`iter,up_loss,lp_loss,gap`),
//! `payoff.csv` (`scenario,prob,loss,payoff`), `model.json` and, for
//! general pricing curves, `pricing_curve.csv` (`s,g`). An oracle run writes
//! `oracle.json`.

use std::path::{Path, PathBuf};

use bowley_core::game::Leader;
use bowley_core::oracle::OracleResult;
use bowley_core::payoff::{PayoffModel, PayoffSnapshot};
use bowley_core::vpbgd::EquilibriumReport;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const PAYOFF_FILE: &str = "payoff.csv";
pub const PRICING_FILE: &str = "pricing_curve.csv";
pub const MODEL_FILE: &str = "model.json";
pub const ORACLE_FILE: &str = "oracle.json";

pub const CHECKPOINT_VERSION: u32 = 1;

/// Follower network and leader parameters at the end of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub iteration: usize,
    pub leader: Leader,
    pub model: PayoffSnapshot,
}

impl Checkpoint {
    pub fn new(iteration: usize, leader: Leader, model: &PayoffModel) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            iteration,
            leader,
            model: model.snapshot(),
        }
    }

    pub fn model(&self) -> Result<PayoffModel> {
        Ok(PayoffModel::from_snapshot(&self.model)?)
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let c: Checkpoint = read_json(path)?;
    if c.version != CHECKPOINT_VERSION {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            field: "version".into(),
            message: format!("unsupported version {} (expected {CHECKPOINT_VERSION})", c.version),
        });
    }
    Ok(c)
}

fn write_rows<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every solve artifact into `dir` and returns the report path.
pub fn write_solve(dir: &Path, report: &EquilibriumReport, model: Option<&PayoffModel>) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(REPORT_FILE);
    write_json(&path, report)?;
    write_rows(
        &dir.join(CURVES_FILE),
        ["iter", "up_loss", "lp_loss", "gap"],
        report.curves.iter().map(|c| {
            [c.iter.to_string(), c.up_loss.to_string(), c.lp_loss.to_string(), c.gap.to_string()]
        }),
    )?;
    write_rows(
        &dir.join(PAYOFF_FILE),
        ["scenario", "prob", "loss", "payoff"],
        report.payoffs.iter().map(|p| {
            [p.scenario.to_string(), p.prob.to_string(), p.loss.to_string(), p.payoff.to_string()]
        }),
    )?;
    if !report.pricing_curve.is_empty() {
        write_rows(
            &dir.join(PRICING_FILE),
            ["s", "g"],
            report.pricing_curve.iter().map(|c| [c.s.to_string(), c.g.to_string()]),
        )?;
    }
    if let Some(m) = model {
        let c = Checkpoint::new(report.iterations, report.leader.clone(), m);
        write_json(&dir.join(MODEL_FILE), &c)?;
    }
    Ok(path)
}

pub fn write_oracle(dir: &Path, r: &OracleResult) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(ORACLE_FILE);
    write_json(&path, r)?;
    Ok(path)
}
