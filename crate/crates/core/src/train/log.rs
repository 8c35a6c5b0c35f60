//! Metric log CSV: `step,split,loss,em,f1,avna`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: [&str; 6] = ["step", "split", "loss", "em", "f1", "avna"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
        })
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "dev" => Ok(SplitName::Dev),
            _ => Err(Error::MetricLog(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub split: SplitName,
    pub loss: f64,
    pub em: f64,
    pub f1: f64,
    pub avna: f64,
}

impl MetricRecord {
    /// Metric by name: `loss`, `em`, `f1` or `avna`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "loss" => Some(self.loss),
            "em" => Some(self.em),
            "f1" => Some(self.f1),
            "avna" => Some(self.avna),
            _ => None,
        }
    }
}

/// Checks that steps strictly increase within each split.
pub fn check_monotonic(records: &[MetricRecord]) -> Result<()> {
    for split in [SplitName::Train, SplitName::Dev] {
        let steps: Vec<usize> = records.iter().filter(|r| r.split == split).map(|r| r.step).collect();
        if let Some(w) = steps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::MetricLog(format!(
                "{split} steps not increasing: {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

pub fn write_log(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.split.to_string(),
            r.loss.to_string(),
            r.em.to_string(),
            r.f1.to_string(),
            r.avna.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::MetricLog(format!(
            "{}: header {:?} does not match {:?}",
            path.display(),
            header,
            HEADER
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |k: usize| -> Result<&str> {
            row.get(k)
                .ok_or_else(|| Error::MetricLog(format!("{}: row {} is short", path.display(), i + 2)))
        };
        let num = |k: usize| -> Result<f64> {
            field(k)?
                .parse()
                .map_err(|_| Error::MetricLog(format!("{}: row {}: bad number in `{}`", path.display(), i + 2, HEADER[k])))
        };
        out.push(MetricRecord {
            step: field(0)?
                .parse()
                .map_err(|_| Error::MetricLog(format!("{}: row {}: bad step", path.display(), i + 2)))?,
            split: field(1)?.parse()?,
            loss: num(2)?,
            em: num(3)?,
            f1: num(4)?,
            avna: num(5)?,
        });
    }
    check_monotonic(&out)?;
    Ok(out)
}
