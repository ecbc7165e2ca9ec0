//! Real versus imagined latent trajectories, exported as CSV.
//!
//! Row layout: `episode, step, real_0 … real_{L−1}, imag1_0 … imagk_{L−1}`,
//! where `real` is the posterior mean at `step` and `imag<d>` the prior mean
//! after `d` imagined steps from it.

use super::checkpoint::Checkpoint;
use crate::env::make_env;
use crate::error::{usage, Error, Result};
use crate::stats::{spearman, Spearman};
use crate::training::{rng_stream, run_episode, Algo};
use rand::RngCore;
use std::io::{Read, Write};

const EXPORT_STREAM: u64 = 14;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub episode: usize,
    pub step: usize,
    pub real: Vec<f64>,
    /// `imagined[d−1]` is the latent after `d` imagined steps.
    pub imagined: Vec<Vec<f64>>,
}

/// Plays `episodes` greedy episodes with the checkpoint's agents and, for
/// every observed step `0..=T`, records the posterior mean and a rollout of
/// `depth` imagined steps (the checkpoint's `k` by default).
pub fn export_embeddings(ck: &Checkpoint, episodes: usize, seed: u64, depth: Option<usize>) -> Result<Vec<EmbeddingRow>> {
    if ck.config.algo != Algo::Mbvd {
        return Err(usage(format!("embedding export needs an mbvd checkpoint, got {}", ck.config.algo)));
    }
    if episodes == 0 {
        return Err(usage("embedding export needs at least one episode"));
    }
    let learner = ck.learner()?;
    let im = learner.imagination.as_ref().expect("mbvd has an imagination module");
    let k = depth.unwrap_or(ck.config.k);
    let mut env = make_env(&ck.config.env_kind())?;
    let use_mask = env.spec().has_action_mask;
    let mut rng = rng_stream(seed, EXPORT_STREAM);
    let mut rows = Vec::new();
    for episode in 0..episodes {
        let env_seed = rng.next_u64();
        let ep = run_episode(env.as_mut(), &learner.agent, &learner.params, 0.0, env_seed, &mut rng)?;
        for (t, joint) in learner.episode_joint_hiddens(&ep).into_iter().enumerate() {
            let real = im.posterior_encode(&learner.params, &joint)?.mean;
            let roll = im.generate_rollout(&learner.params, &learner.agent, &joint, &ep.avail[t], k, use_mask)?;
            rows.push(EmbeddingRow {
                episode,
                step: t,
                real,
                imagined: roll.latents[1..].to_vec(),
            });
        }
    }
    Ok(rows)
}

fn shape(rows: &[EmbeddingRow]) -> Result<(usize, usize)> {
    let first = rows.first().ok_or_else(|| usage("no embedding rows"))?;
    let (l, k) = (first.real.len(), first.imagined.len());
    if rows
        .iter()
        .any(|r| r.real.len() != l || r.imagined.len() != k || r.imagined.iter().any(|v| v.len() != l))
    {
        return Err(usage("embedding rows have inconsistent widths"));
    }
    Ok((l, k))
}

pub fn write_embeddings(out: impl Write, rows: &[EmbeddingRow]) -> Result<()> {
    let (l, k) = shape(rows)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["episode".to_string(), "step".to_string()];
    header.extend((0..l).map(|j| format!("real_{j}")));
    for d in 1..=k {
        header.extend((0..l).map(|j| format!("imag{d}_{j}")));
    }
    let csv_err = |e: csv::Error| Error::Load(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.episode.to_string(), r.step.to_string()];
        rec.extend(r.real.iter().chain(r.imagined.iter().flatten()).map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(input: impl Read) -> Result<Vec<EmbeddingRow>> {
    let mut r = csv::Reader::from_reader(input);
    let bad = |msg: String| Error::Load(format!("embedding file: {msg}"));
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let l = header.iter().filter(|h| h.starts_with("real_")).count();
    let cols = header.len();
    if l == 0 || cols < 2 + l || (cols - 2) % l != 0 || &header[0] != "episode" || &header[1] != "step" {
        return Err(bad("unexpected header".into()));
    }
    let k = (cols - 2) / l - 1;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("column {i}: {e}")));
        let int = |i: usize| rec[i].parse::<usize>().map_err(|e| bad(format!("column {i}: {e}")));
        let vals = (2..cols).map(num).collect::<Result<Vec<f64>>>()?;
        rows.push(EmbeddingRow {
            episode: int(0)?,
            step: int(1)?,
            real: vals[..l].to_vec(),
            imagined: (0..k).map(|d| vals[l * (d + 1)..l * (d + 2)].to_vec()).collect(),
        });
    }
    Ok(rows)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `(d, ‖imagined_d(t) − real(t+d)‖)` for every step whose target `t+d`
/// was observed in the same episode.
pub fn depth_distances(rows: &[EmbeddingRow]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for r in rows {
        for (i, imag) in r.imagined.iter().enumerate() {
            let d = i + 1;
            if let Some(target) = rows.iter().find(|o| o.episode == r.episode && o.step == r.step + d) {
                out.push((d, distance(imag, &target.real)));
            }
        }
    }
    out
}

/// Mean imagined-versus-real distance at each depth `1..=k`.
pub fn mean_distance_by_depth(rows: &[EmbeddingRow]) -> Vec<f64> {
    let pairs = depth_distances(rows);
    let k = rows.first().map_or(0, |r| r.imagined.len());
    (1..=k)
        .map(|d| {
            let v: Vec<f64> = pairs.iter().filter(|p| p.0 == d).map(|p| p.1).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        })
        .collect()
}

/// Spearman correlation between depth and distance over all pairs.
pub fn depth_trend(rows: &[EmbeddingRow]) -> Result<Spearman> {
    let pairs = depth_distances(rows);
    let depth: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
    let dist: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    spearman(&depth, &dist)
}
