use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mbvd_core::harness::checkpoint::Checkpoint;
use mbvd_core::harness::config::RunConfig;
use mbvd_core::harness::embeddings::{
    depth_trend, export_embeddings, mean_distance_by_depth, read_embeddings, write_embeddings,
};
use mbvd_core::harness::experiment::{evaluate_checkpoint, train, METRICS_FILE};
use mbvd_core::harness::metrics::read_metrics;
use mbvd_core::harness::plot::{embeddings_svg, metrics_svg};
use mbvd_core::harness::sweep::{compare, k_sweep, run_ablation_variant};
use mbvd_core::{Algo, Error};

#[derive(Parser)]
#[command(name = "mbvd", version, about = "Value-decomposition MARL with latent imagination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus overrides shared by every training command.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => RunConfig::default(),
        };
        let mut overrides: Vec<(String, String)> = Vec::new();
        if let Some(v) = &self.env {
            overrides.push(("env".into(), v.replace('-', "_")));
        }
        if let Some(v) = &self.algo {
            overrides.push(("algo".into(), v.clone()));
        }
        if let Some(v) = self.seed {
            overrides.push(("seed".into(), v.to_string()));
        }
        if let Some(v) = self.k {
            overrides.push(("k".into(), v.to_string()));
        }
        for kv in &self.set {
            let Some((key, value)) = kv.split_once('=') else {
                return Err(Error::Usage(format!("override {kv:?} is not KEY=VALUE")).into());
            };
            overrides.push((key.trim().into(), value.trim().into()));
        }
        Ok(base.with_overrides(&overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one run into a run directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a state-aggregation ablation (qmix-rs or qmix-ls).
    Ablate {
        #[arg(long)]
        variant: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// One run per rollout horizon and seed, then a comparison table.
    KSweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Keep finished runs whose config snapshot matches.
        #[arg(long)]
        reuse: bool,
    },
    /// One run per algorithm and seed, then a comparison table.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "qmix,mbvd")]
        algos: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reuse: bool,
    },
    /// Real and imagined latent means per step, as CSV.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        episodes: usize,
        /// Imagined steps per row; the checkpoint's k by default.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render learning curves (run directories or metrics files) or an
    /// embedding file to SVG.
    Plot {
        /// Run directories or metrics files.
        inputs: Vec<PathBuf>,
        /// Embedding CSV to project instead of learning curves.
        #[arg(long, conflicts_with = "inputs")]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn metrics_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join(METRICS_FILE)
    } else {
        input.to_path_buf()
    }
}

fn series_label(input: &Path) -> String {
    let dir = if input.is_dir() { Some(input) } else { input.parent() };
    dir.and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| input.display().to_string())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, out } => {
            let config = cfg.resolve()?;
            let outcome = train(&config, &out)?;
            let last = outcome.final_row();
            println!(
                "run {} finished: {} env steps, {} episodes, final median return {:.4}",
                out.display(),
                last.env_steps,
                last.episodes,
                last.eval_return_median
            );
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
        } => {
            let summary = evaluate_checkpoint(&checkpoint, episodes, seed)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Ablate { variant, cfg, out } => {
            let variant = Algo::parse(&variant)?;
            let rows = run_ablation_variant(variant, &cfg.resolve()?, &out)?;
            let last = rows.last().context("run produced no metrics")?;
            println!("{variant} finished: final median return {:.4}", last.eval_return_median);
        }
        Command::KSweep {
            cfg,
            ks,
            seeds,
            out,
            reuse,
        } => {
            let table = k_sweep(&cfg.resolve()?, &ks, &seeds, &out, reuse)?;
            print!("{}", table.to_markdown());
        }
        Command::Compare {
            cfg,
            algos,
            seeds,
            out,
            reuse,
        } => {
            let algos = algos.iter().map(|a| Algo::parse(a)).collect::<mbvd_core::Result<Vec<_>>>()?;
            let table = compare(&cfg.resolve()?, &algos, &seeds, &out, reuse)?;
            print!("{}", table.to_markdown());
        }
        Command::ExportEmbeddings {
            checkpoint,
            episodes,
            depth,
            seed,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let rows = export_embeddings(&ck, episodes, seed, depth)?;
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_embeddings(file, &rows)?;
            let trend = depth_trend(&rows)?;
            println!(
                "wrote {} rows to {}; mean distance by depth {:?}; spearman rho {:.4} (one-sided p {:.3e})",
                rows.len(),
                out.display(),
                mean_distance_by_depth(&rows),
                trend.rho,
                trend.p_greater
            );
        }
        Command::Plot {
            inputs,
            embeddings,
            out,
        } => {
            let svg = if let Some(path) = embeddings {
                let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                embeddings_svg(&read_embeddings(file)?)?
            } else {
                if inputs.is_empty() {
                    bail!(Error::Usage("plot needs run directories, metrics files or --embeddings".into()));
                }
                let series = inputs
                    .iter()
                    .map(|p| Ok((series_label(p), read_metrics(&metrics_path(p))?)))
                    .collect::<Result<Vec<_>>>()?;
                metrics_svg(&series)?
            };
            std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err.chain().any(|e| matches!(e.downcast_ref::<Error>(), Some(Error::Usage(_) | Error::Config(_))));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
