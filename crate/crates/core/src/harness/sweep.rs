//! Multi-run comparisons: ablation variants, algorithm comparisons and the
//! rollout-horizon sweep.

use super::config::RunConfig;
use super::experiment::{train, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE};
use super::metrics::{read_metrics, MetricsRow};
use crate::error::{usage, Result};
use crate::stats::{quartiles, Quartiles};
use crate::training::Algo;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Trains one of the state-aggregation ablations.
pub fn run_ablation_variant(variant: Algo, config: &RunConfig, run_dir: &Path) -> Result<Vec<MetricsRow>> {
    if !matches!(variant, Algo::QmixRs | Algo::QmixLs) {
        return Err(usage(format!("{variant} is not an ablation variant; expected qmix-rs or qmix-ls")));
    }
    let cfg = RunConfig {
        algo: variant,
        ..config.clone()
    };
    Ok(train(&cfg, run_dir)?.rows)
}

/// Metrics of a finished run in `run_dir` whose snapshot equals `config`.
pub fn finished_run(config: &RunConfig, run_dir: &Path) -> Option<Vec<MetricsRow>> {
    let snap = RunConfig::load(&run_dir.join(CONFIG_FILE)).ok()?;
    if &snap != config || !run_dir.join(CHECKPOINT_FILE).exists() {
        return None;
    }
    let rows = read_metrics(&run_dir.join(METRICS_FILE)).ok()?;
    (rows.last()?.env_steps >= config.total_env_steps).then_some(rows)
}

/// Trains `config` into `run_dir`, or with `reuse` returns the metrics of an
/// identical finished run already there.
pub fn train_or_reuse(config: &RunConfig, run_dir: &Path, reuse: bool) -> Result<Vec<MetricsRow>> {
    if reuse {
        if let Some(rows) = finished_run(config, run_dir) {
            return Ok(rows);
        }
    }
    Ok(train(config, run_dir)?.rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub seeds: Vec<u64>,
    /// Final evaluation median of each seed's run.
    pub finals: Vec<f64>,
    /// Across seeds.
    pub summary: Quartiles,
    pub run_dirs: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, label: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| run | seeds | median | q25 | q75 |\n|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {:.4} | {:.4} | {:.4} |",
                r.label,
                r.seeds.len(),
                r.summary.median,
                r.summary.q25,
                r.summary.q75
            );
        }
        out
    }
}

/// Runs every labelled config once per seed under `out_dir/<label>/seed_<s>`
/// and tabulates final medians.
pub fn sweep(variants: &[(String, RunConfig)], seeds: &[u64], out_dir: &Path, reuse: bool) -> Result<SweepTable> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(usage("a sweep needs at least one variant and one seed"));
    }
    let mut rows = Vec::new();
    for (label, config) in variants {
        let mut finals = Vec::new();
        let mut run_dirs = Vec::new();
        for &seed in seeds {
            let cfg = RunConfig {
                seed,
                ..config.clone()
            };
            cfg.validate()?;
            let dir = out_dir.join(label).join(format!("seed_{seed}"));
            let metrics = train_or_reuse(&cfg, &dir, reuse)?;
            finals.push(metrics.last().expect("non-empty metrics").eval_return_median);
            run_dirs.push(dir);
        }
        rows.push(SweepRow {
            label: label.clone(),
            seeds: seeds.to_vec(),
            summary: quartiles(&finals)?,
            finals,
            run_dirs,
        });
    }
    let table = SweepTable { rows };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("table.md"), table.to_markdown())?;
    std::fs::write(
        out_dir.join("table.json"),
        serde_json::to_string_pretty(&table).expect("table serializes"),
    )?;
    Ok(table)
}

/// One row per rollout horizon, labelled `k=<k>`.
pub fn k_sweep(config: &RunConfig, ks: &[usize], seeds: &[u64], out_dir: &Path, reuse: bool) -> Result<SweepTable> {
    if ks.is_empty() {
        return Err(usage("k-sweep needs at least one k"));
    }
    let variants: Vec<(String, RunConfig)> = ks
        .iter()
        .map(|&k| (format!("k={k}"), RunConfig { k, ..config.clone() }))
        .collect();
    sweep(&variants, seeds, out_dir, reuse)
}

/// One row per algorithm, labelled by its name.
pub fn compare(config: &RunConfig, algos: &[Algo], seeds: &[u64], out_dir: &Path, reuse: bool) -> Result<SweepTable> {
    let variants: Vec<(String, RunConfig)> = algos
        .iter()
        .map(|&algo| (algo.name().to_string(), RunConfig { algo, ..config.clone() }))
        .collect();
    sweep(&variants, seeds, out_dir, reuse)
}
