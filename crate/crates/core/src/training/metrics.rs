//! Per-epoch records, their CSV form, and plot-ready curves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{KcrError, Result};
use crate::kernel::BoundReport;

pub const CSV_HEADER: &str = "epoch,phase,ce,kcr,akc,lower,upper,train_sq,val_sq,val_acc,flops,tau";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Search,
    Warmup,
    Regularized,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Search => "search",
            Phase::Warmup => "warmup",
            Phase::Regularized => "regularized",
        })
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "search" => Ok(Phase::Search),
            "warmup" => Ok(Phase::Warmup),
            "regularized" => Ok(Phase::Regularized),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based, counted within the phase group (search, or retraining).
    pub epoch: usize,
    pub phase: Phase,
    pub ce: f64,
    /// Weighted regularizer term, epoch mean.
    pub kcr: f64,
    pub akc: f64,
    pub bound: BoundReport,
    pub train_sq: f64,
    pub val_sq: f64,
    pub val_acc: f64,
    pub flops: u64,
    pub tau: f64,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

impl EpochRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.phase,
            num(self.ce),
            num(self.kcr),
            num(self.akc),
            num(self.bound.lower),
            num(self.bound.upper),
            num(self.train_sq),
            num(self.val_sq),
            num(self.val_acc),
            self.flops,
            num(self.tau)
        )
    }
}

pub fn to_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub phase: Phase,
    pub ce: f64,
    pub kcr: f64,
    pub akc: f64,
    pub lower: f64,
    pub upper: f64,
    pub train_sq: f64,
    pub val_sq: f64,
    pub val_acc: f64,
    pub flops: u64,
    pub tau: f64,
}

/// Parses a metrics CSV; columns are located by header name.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| KcrError::Schema("metrics csv is empty".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| KcrError::Schema(format!("metrics csv lacks column {name:?}")))
    };
    let names = CSV_HEADER.split(',').collect::<Vec<_>>();
    let pos: Vec<usize> = names.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(KcrError::Parse { row, msg: format!("{} cells, header has {}", cells.len(), header.len()) });
        }
        let cell = |i: usize| cells[pos[i]];
        let f = |i: usize| {
            cell(i)
                .parse::<f64>()
                .map_err(|e| KcrError::Parse { row, msg: format!("{}: {e}", names[i]) })
        };
        rows.push(MetricsRow {
            epoch: cell(0).parse().map_err(|e| KcrError::Parse { row, msg: format!("epoch: {e}") })?,
            phase: cell(1).parse().map_err(|msg| KcrError::Parse { row, msg })?,
            ce: f(2)?,
            kcr: f(3)?,
            akc: f(4)?,
            lower: f(5)?,
            upper: f(6)?,
            train_sq: f(7)?,
            val_sq: f(8)?,
            val_acc: f(9)?,
            flops: cell(10).parse().map_err(|e| KcrError::Parse { row, msg: format!("flops: {e}") })?,
            tau: f(11)?,
        });
    }
    Ok(rows)
}

/// Pearson correlation; `None` when fewer than two points or either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Plot-ready series, one entry per CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub epoch: Vec<usize>,
    pub phase: Vec<Phase>,
    pub train_sq: Vec<f64>,
    pub val_sq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub akc: Vec<f64>,
    /// Correlation of `upper` with `val_sq` over regularized epochs.
    pub upper_val_correlation: Option<f64>,
    pub regularized_epochs: usize,
}

pub fn curves(rows: &[MetricsRow]) -> Curves {
    let reg: Vec<&MetricsRow> = rows.iter().filter(|r| r.phase == Phase::Regularized).collect();
    let up: Vec<f64> = reg.iter().map(|r| r.upper).collect();
    let val: Vec<f64> = reg.iter().map(|r| r.val_sq).collect();
    Curves {
        epoch: rows.iter().map(|r| r.epoch).collect(),
        phase: rows.iter().map(|r| r.phase).collect(),
        train_sq: rows.iter().map(|r| r.train_sq).collect(),
        val_sq: rows.iter().map(|r| r.val_sq).collect(),
        lower: rows.iter().map(|r| r.lower).collect(),
        upper: rows.iter().map(|r| r.upper).collect(),
        akc: rows.iter().map(|r| r.akc).collect(),
        upper_val_correlation: pearson(&up, &val),
        regularized_epochs: reg.len(),
    }
}
