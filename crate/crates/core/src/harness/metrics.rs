//! Line-delimited metrics stream, one JSON object per evaluation point.

use crate::error::{Error, Result};
use crate::training::LossBreakdown;
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRow {
    pub env_steps: u64,
    pub episodes: u64,
    pub train_steps: u64,
    pub eval_return_median: f64,
    pub eval_return_q25: f64,
    pub eval_return_q75: f64,
    /// Fraction of evaluation episodes solved; null for environments without
    /// a success notion.
    pub win_or_success_rate: Option<f64>,
    /// Mean training losses since the previous row (zeros before training
    /// starts).
    pub loss: LossBreakdown,
    pub epsilon: f64,
    pub wall_clock: f64,
}

/// Appends rows to a metrics file, flushing after each.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        let line = serde_json::to_string(row).map_err(|e| Error::Load(e.to_string()))?;
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| Error::Load(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Running mean of loss breakdowns.
#[derive(Clone, Debug, Default)]
pub struct LossAccumulator {
    sum: LossBreakdown,
    count: u64,
}

impl LossAccumulator {
    pub fn add(&mut self, l: &LossBreakdown) {
        self.sum.l_rl += l.l_rl;
        self.sum.l_rc += l.l_rc;
        self.sum.l_rc_prior += l.l_rc_prior;
        self.sum.l_kl += l.l_kl;
        self.sum.l_fa += l.l_fa;
        self.sum.total += l.total;
        self.count += 1;
    }

    /// The mean so far, resetting the accumulator.
    pub fn take(&mut self) -> LossBreakdown {
        let n = self.count.max(1) as f64;
        let s = std::mem::take(&mut self.sum);
        self.count = 0;
        LossBreakdown {
            l_rl: s.l_rl / n,
            l_rc: s.l_rc / n,
            l_rc_prior: s.l_rc_prior / n,
            l_kl: s.l_kl / n,
            l_fa: s.l_fa / n,
            total: s.total / n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(steps: u64) -> MetricsRow {
        MetricsRow {
            env_steps: steps,
            episodes: 3,
            train_steps: 1,
            eval_return_median: 1.5,
            eval_return_q25: 0.1,
            eval_return_q75: 2.0,
            win_or_success_rate: None,
            loss: LossBreakdown::default(),
            epsilon: 0.5,
            wall_clock: 0.0,
        }
    }

    #[test]
    fn rows_round_trip_and_schema_is_strict() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut w = MetricsWriter::create(&path).unwrap();
        w.append(&row(0)).unwrap();
        w.append(&row(10)).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), vec![row(0), row(10)]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.contains("\"win_or_success_rate\":null")));
        std::fs::write(&path, text.replace("\"epsilon\":0.5,", "")).unwrap();
        assert!(matches!(read_metrics(&path), Err(Error::Load(_))));
    }

    #[test]
    fn accumulator_means_and_resets() {
        let mut acc = LossAccumulator::default();
        for v in [1.0, 3.0] {
            acc.add(&LossBreakdown {
                l_rl: v,
                total: v,
                ..LossBreakdown::default()
            });
        }
        assert_eq!(acc.take().l_rl, 2.0);
        assert_eq!(acc.take(), LossBreakdown::default());
    }
}
