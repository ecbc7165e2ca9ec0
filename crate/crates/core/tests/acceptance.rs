//! End-to-end acceptance checks, one verdict line per criterion.
//!
//! Runs every criterion by default; pass criterion numbers to select some
//! (`cargo test --test acceptance -- 3 5`). Long training runs are written
//! under `results/` at the workspace root and reused when an identical
//! finished run is already there; set `MBVD_ACCEPTANCE_FRESH=1` to retrain.
//!
//! A criterion listed in `KNOWN_FAILURES` still runs and still prints FAIL,
//! but does not fail the target. Any other FAIL does.

use mbvd_core::autodiff::{gradient_check, ParamId};
use mbvd_core::env::{brute_force_optimal_return, MatrixGame};
use mbvd_core::harness::checkpoint::Checkpoint;
use mbvd_core::harness::config::EnvName;
use mbvd_core::harness::embeddings::{depth_trend, export_embeddings, mean_distance_by_depth};
use mbvd_core::harness::experiment::{CHECKPOINT_FILE, METRICS_FILE};
use mbvd_core::harness::metrics::{read_metrics, MetricsRow};
use mbvd_core::harness::sweep::{compare, k_sweep, run_ablation_variant, train_or_reuse};
use mbvd_core::imagination::{kl_balanced, kl_gaussian, kl_rows, ImaginationDims, LatentVars};
use mbvd_core::mixing::{check_igm, qmix_mix, MixingNet, QmixMixer};
use mbvd_core::training::{rng_stream, run_episode, Batch, LatentNoise, LearnerConfig};
use mbvd_core::{
    make_env, Algo, AgentNet, EnvSpec, EpisodeRecord, GaussianLatent, Graph, ImaginationModule, Learner, Mat,
    ParamStore, ReplayBuffer, RunConfig, StepResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Criteria that fail for a documented reason.
const KNOWN_FAILURES: &[(u32, &str)] = &[];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn results_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../results")
}

fn reuse() -> bool {
    std::env::var("MBVD_ACCEPTANCE_FRESH").map_or(true, |v| v.is_empty() || v == "0")
}

fn final_rows(dirs: &[PathBuf]) -> Vec<MetricsRow> {
    dirs.iter()
        .map(|d| read_metrics(&d.join(METRICS_FILE)).unwrap().pop().unwrap())
        .collect()
}

fn oracle_optimality() -> Verdict {
    let base = RunConfig {
        env: EnvName::Matrix,
        total_env_steps: 5000,
        anneal_steps: 2000,
        eval_every: 1000,
        log_wall_clock: true,
        ..RunConfig::default()
    };
    let game = MatrixGame::new(base.payoff.clone(), base.rounds).unwrap();
    let oracle = brute_force_optimal_return(&game.as_tabular(), base.rounds, base.gamma).unwrap();
    let mut pass = true;
    let mut parts = vec![format!("oracle {oracle}")];
    for algo in [Algo::Vdn, Algo::Qmix, Algo::Mbvd] {
        let mut hits = 0;
        let mut slowest = 0.0f64;
        for seed in 0..5 {
            let cfg = RunConfig {
                algo,
                seed,
                k: 3,
                ..base.clone()
            };
            let dir = results_dir().join("matrix_oracle").join(algo.name()).join(format!("seed_{seed}"));
            let rows = train_or_reuse(&cfg, &dir, reuse()).unwrap();
            let last = rows.last().unwrap();
            if (last.eval_return_median - oracle).abs() <= 0.05 && last.episodes <= 5000 {
                hits += 1;
            }
            slowest = slowest.max(last.wall_clock);
        }
        pass &= hits >= 4 && slowest < 600.0;
        parts.push(format!("{algo} {hits}/5 seeds optimal, slowest run {slowest:.0}s"));
    }
    Verdict::new(pass, parts.join("; "))
}

fn directional_benefit() -> Verdict {
    let cfg = RunConfig {
        log_wall_clock: true,
        ..RunConfig::default()
    };
    let table = compare(&cfg, &[Algo::Qmix, Algo::Mbvd], &[0, 1, 2, 3, 4], &results_dir().join("predator_prey_200k"), reuse()).unwrap();
    let (q, m) = (table.row("qmix").unwrap(), table.row("mbvd").unwrap());
    let slowest = final_rows(&q.run_dirs)
        .iter()
        .chain(&final_rows(&m.run_dirs))
        .map(|r| r.wall_clock)
        .fold(0.0, f64::max);
    let threshold = q.summary.median - 0.05 * q.summary.median.abs();
    Verdict::new(
        m.summary.median >= threshold && slowest < 7200.0,
        format!(
            "final median over seeds: mbvd {:.3} (q25 {:.3}, q75 {:.3}) vs qmix {:.3} (q25 {:.3}, q75 {:.3}), threshold {threshold:.3}; slowest seed {slowest:.0}s",
            m.summary.median, m.summary.q25, m.summary.q75, q.summary.median, q.summary.q25, q.summary.q75
        ),
    )
}

fn random_latent(rng: &mut ChaCha8Rng, dim: usize) -> GaussianLatent {
    GaussianLatent {
        mean: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        log_std: (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
    }
}

/// Monte-Carlo estimate of `E_q[log q(x) − log p(x)]`.
fn kl_monte_carlo(q: &GaussianLatent, p: &GaussianLatent, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let offset: f64 = p.log_std.iter().zip(&q.log_std).map(|(lp, lq)| lp - lq).sum();
    let sq: Vec<f64> = q.log_std.iter().map(|l| l.exp()).collect();
    let inv_sp: Vec<f64> = p.log_std.iter().map(|l| (-l).exp()).collect();
    let gap: Vec<f64> = q.mean.iter().zip(&p.mean).map(|(a, b)| a - b).collect();
    let mut acc = 0.0;
    for _ in 0..n {
        for i in 0..q.dim() {
            let e: f64 = rng.sample(StandardNormal);
            let zp = (gap[i] + sq[i] * e) * inv_sp[i];
            acc += 0.5 * (zp * zp - e * e);
        }
    }
    offset + acc / n as f64
}

fn leaves(g: &mut Graph, store: &mut ParamStore, d: &GaussianLatent, name: &str) -> LatentVars {
    let row = |v: &[f64]| Mat::from_shape_vec((1, v.len()), v.to_vec()).unwrap();
    let m = store.add(format!("{name}.mean"), row(&d.mean));
    let s = store.add(format!("{name}.log_std"), row(&d.log_std));
    LatentVars {
        mean: g.param(store, m),
        log_std: g.param(store, s),
    }
}

fn kl_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 8;
    let mut worst_rel = 0.0f64;
    for _ in 0..1000 {
        let q = random_latent(&mut rng, dim);
        let p = random_latent(&mut rng, dim);
        let exact = kl_gaussian(&q, &p).unwrap();
        let mc = kl_monte_carlo(&q, &p, 1_000_000, &mut rng);
        worst_rel = worst_rel.max(((mc - exact) / exact).abs());
    }

    let mut worst_value = 0.0f64;
    let mut zeros_hold = true;
    for _ in 0..100 {
        let q = random_latent(&mut rng, dim);
        let p = random_latent(&mut rng, dim);
        let exact = kl_gaussian(&q, &p).unwrap();
        for alpha in [0.0, 0.3, 1.0] {
            let mut store = ParamStore::new();
            let mut g = Graph::new();
            let qv = leaves(&mut g, &mut store, &q, "q");
            let pv = leaves(&mut g, &mut store, &p, "p");
            let loss = kl_balanced(&mut g, qv, pv, alpha).unwrap();
            worst_value = worst_value.max((g.scalar(loss) - exact).abs());
            let grads = g.backward(loss, &store);
            let zero = |ids: [usize; 2]| {
                ids.iter()
                    .all(|&i| grads.get(ParamId(i)).is_none_or(|m| m.iter().all(|&v| v == 0.0)))
            };
            if alpha == 1.0 {
                zeros_hold &= zero([2, 3]);
            }
            if alpha == 0.0 {
                zeros_hold &= zero([0, 1]);
            }
        }
        // the plain KL is differentiable in both, so the zeros above are not vacuous
        let mut store = ParamStore::new();
        let mut g = Graph::new();
        let qv = leaves(&mut g, &mut store, &q, "q");
        let pv = leaves(&mut g, &mut store, &p, "p");
        let rows = kl_rows(&mut g, qv, pv);
        let loss = g.sum(rows);
        let grads = g.backward(loss, &store);
        zeros_hold &= (0..4).all(|i| grads.get(ParamId(i)).is_some_and(|m| m.iter().any(|&v| v != 0.0)));
    }
    Verdict::new(
        worst_rel < 0.01 && worst_value <= 1e-12 && zeros_hold,
        format!("worst Monte-Carlo relative gap {worst_rel:.2e} over 1000 pairs; worst balanced-value gap {worst_value:.1e}; stop-gradient zeros exact: {zeros_hold}"),
    )
}

fn micro_spec() -> EnvSpec {
    EnvSpec {
        n_agents: 2,
        n_actions: 3,
        obs_dim: 3,
        state_dim: 2,
        episode_limit: 4,
        has_action_mask: true,
    }
}

fn synthetic_episode(spec: &EnvSpec, len: usize, rng: &mut ChaCha8Rng) -> EpisodeRecord {
    let step = |rng: &mut ChaCha8Rng, done: bool| {
        let avail_actions = (0..spec.n_agents)
            .map(|_| {
                let mut m: Vec<bool> = (0..spec.n_actions).map(|_| rng.random_bool(0.6)).collect();
                m[rng.random_range(0..spec.n_actions)] = true;
                m
            })
            .collect();
        StepResult {
            obs: (0..spec.n_agents)
                .map(|_| (0..spec.obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            state: (0..spec.state_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random_range(0.0..2.0),
            done,
            avail_actions,
        }
    };
    let first = step(rng, false);
    let mut avail = first.avail_actions.clone();
    let mut ep = EpisodeRecord::start(0, first);
    for t in 0..len {
        let actions = avail
            .iter()
            .map(|m: &Vec<bool>| {
                let ok: Vec<usize> = (0..m.len()).filter(|&a| m[a]).collect();
                ok[rng.random_range(0..ok.len())]
            })
            .collect();
        let next = step(rng, t + 1 == len);
        avail = next.avail_actions.clone();
        ep.push(actions, next);
    }
    ep
}

fn gradient_integrity() -> Verdict {
    let spec = micro_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eps: Vec<EpisodeRecord> = (0..2).map(|_| synthetic_episode(&spec, 4, &mut rng)).collect();
    let refs: Vec<&EpisodeRecord> = eps.iter().collect();
    let batch = Batch::new(&refs, &spec, None).unwrap();
    let config = LearnerConfig {
        algo: Algo::Mbvd,
        hidden_dim: 8,
        per_agent_latent: 2,
        body_width: 8,
        aggregator_hidden: 5,
        ..LearnerConfig::default()
    };
    let mut learner = Learner::new(&spec, config, 7).unwrap();
    for id in learner.target.ids().collect::<Vec<_>>() {
        learner.target.get_mut(id).mapv_inplace(|v| v + rng.random_range(-0.05..0.05));
    }
    let y = learner.td_targets(&batch).unwrap();
    let noise = LatentNoise::sample(&batch, learner.latent_dim(), &mut rng);
    let build = |s: &ParamStore| {
        let mut g = Graph::without_stop_gradients();
        let v = learner.loss_graph(&mut g, s, &batch, &y, &noise).unwrap();
        (g, v.total)
    };
    let ids: Vec<ParamId> = learner.params.ids().collect();
    let grad_err = gradient_check(&learner.params, &ids, 8, 1e-6, &build);

    let mut min_slope = f64::INFINITY;
    for trial in 0..100 {
        let mut store = ParamStore::new();
        let m = QmixMixer::new(&mut store, 3, 4, 32, 64, &mut ChaCha8Rng::seed_from_u64(1000 + trial));
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        for a in 0..3 {
            let h = 1e-5;
            let (mut up, mut down) = (q.clone(), q.clone());
            up[a] += h;
            down[a] -= h;
            let slope = (qmix_mix(&m, &store, &up, &c).unwrap() - qmix_mix(&m, &store, &down, &c).unwrap()) / (2.0 * h);
            min_slope = min_slope.min(slope);
        }
    }
    Verdict::new(
        grad_err < 1e-3 && min_slope >= -1e-8,
        format!("total-loss relative error {grad_err:.2e} over {} parameter tensors; smallest mixer slope {min_slope:.3e}", ids.len()),
    )
}

fn igm_property() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let store = ParamStore::new();
    let vdn = MixingNet::Vdn { n_agents: 3 };
    let vdn_ok = (0..1000)
        .filter(|_| {
            let qm = Mat::from_shape_fn((3, 5), |_| rng.random_range(-3.0..3.0));
            check_igm(&vdn.bind(&store), &qm, &[]).unwrap()
        })
        .count();
    let qmix_ok = (0..200)
        .filter(|&trial| {
            let mut store = ParamStore::new();
            let m = QmixMixer::new(&mut store, 3, 6, 32, 64, &mut ChaCha8Rng::seed_from_u64(5000 + trial));
            let net = MixingNet::Qmix(m);
            let qm = Mat::from_shape_fn((3, 5), |_| rng.random_range(-3.0..3.0));
            let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            check_igm(&net.bind(&store), &qm, &c).unwrap()
        })
        .count();
    Verdict::new(
        vdn_ok == 1000 && qmix_ok == 200,
        format!("vdn {vdn_ok}/1000, qmix {qmix_ok}/200 instances (3 agents, 5 actions)"),
    )
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

fn one_hot(joint: &[usize], n_actions: usize) -> Vec<f64> {
    let mut v = vec![0.0; joint.len() * n_actions];
    for (a, &u) in joint.iter().enumerate() {
        v[a * n_actions + u] = 1.0;
    }
    v
}

fn world_model_overfit() -> Verdict {
    let cfg = RunConfig {
        algo: Algo::Mbvd,
        ..RunConfig::default()
    };
    let mut env = make_env(&cfg.env_kind()).unwrap();
    let spec = env.spec().clone();
    let mut learner = Learner::new(&spec, cfg.learner_config(), 0).unwrap();
    let mut rng = rng_stream(0, 0);
    let episodes: Vec<EpisodeRecord> = (0..70)
        .map(|s| run_episode(env.as_mut(), &learner.agent, &learner.params, 0.5, s, &mut rng).unwrap())
        .collect();
    let (train, held_out) = episodes.split_at(50);
    let mut buffer = ReplayBuffer::new(50);
    for ep in train {
        buffer.push(ep.clone());
    }

    let recon = |learner: &Learner| {
        let im = learner.imagination.as_ref().unwrap();
        let mut errs = Vec::new();
        for ep in train {
            for h in learner.episode_joint_hiddens(ep).iter().take(ep.len()) {
                let z = im.posterior_encode(&learner.params, h).unwrap().mean;
                errs.push(mse(&im.posterior_decode(&learner.params, &z).unwrap(), h));
            }
        }
        errs.iter().sum::<f64>() / errs.len() as f64
    };
    let initial = recon(&learner);
    for _ in 0..2000 {
        let sample = buffer.sample(32, &mut rng).unwrap();
        let batch = Batch::new(&sample, &spec, None).unwrap();
        learner.train_world_model_on_batch(&batch).unwrap();
    }
    let trained = recon(&learner);

    let im = learner.imagination.as_ref().unwrap();
    let store = &learner.params;
    let (mut model, mut copy, mut model_latent, mut copy_latent, mut count) = (0.0, 0.0, 0.0, 0.0, 0);
    for ep in held_out {
        let hiddens = learner.episode_joint_hiddens(ep);
        let z: Vec<Vec<f64>> = hiddens.iter().map(|h| im.posterior_encode(store, h).unwrap().mean).collect();
        for t in 0..ep.len() {
            let pred = im.prior_transition(store, &z[t], &one_hot(&ep.actions[t], spec.n_actions)).unwrap().0.mean;
            model += mse(&im.posterior_decode(store, &pred).unwrap(), &hiddens[t + 1]);
            copy += mse(&im.posterior_decode(store, &z[t]).unwrap(), &hiddens[t + 1]);
            model_latent += mse(&pred, &z[t + 1]);
            copy_latent += mse(&z[t], &z[t + 1]);
            count += 1;
        }
    }
    let n = f64::from(count);
    let ratio = trained / initial;
    Verdict::new(
        ratio < 0.1 && model < copy,
        format!(
            "reconstruction {initial:.4e} -> {trained:.4e} (ratio {ratio:.4}); held-out one-step decoded error {:.6e} vs copy-last {:.6e} (relative margin {:.1e}; in latent space {:.3e} vs {:.3e})",
            model / n,
            copy / n,
            (copy - model) / copy,
            model_latent / n,
            copy_latent / n
        ),
    )
}

fn rollout_contracts() -> Verdict {
    let dims = ImaginationDims {
        n_agents: 2,
        n_actions: 3,
        hidden_dim: 8,
        latent_dim: 4,
        state_dim: 5,
        body_width: 16,
        aggregator_hidden: 6,
    };
    let spec = EnvSpec {
        n_agents: 2,
        n_actions: 3,
        obs_dim: 4,
        state_dim: 5,
        episode_limit: 5,
        has_action_mask: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let agent = AgentNet::new(&mut store, &spec, dims.hidden_dim, &mut rng);
    let module = ImaginationModule::new(&mut store, dims, &mut rng);
    let hidden: Vec<f64> = (0..dims.joint_hidden()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let avail = vec![vec![true, false, true], vec![true, true, true]];

    let mut lens_ok = true;
    let mut dims_ok = true;
    let mut deterministic = true;
    for k in [1, 3, 5] {
        let before = rng.clone();
        let a = module.generate_rollout(&store, &agent, &hidden, &avail, k, true).unwrap();
        let b = module.generate_rollout(&store, &agent, &hidden, &avail, k, true).unwrap();
        deterministic &= a == b && rng == before;
        let bits = |r: &mbvd_core::ImaginedRollout| r.latents.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        deterministic &= bits(&a) == bits(&b);
        lens_ok &= a.latents.len() == k + 1;
        dims_ok &= module.aggregate_rollout(&store, &a.latents).unwrap().len() == spec.state_dim;
    }
    let counts: Vec<usize> = [1, 3, 5]
        .iter()
        .map(|&k| {
            let cfg = RunConfig {
                algo: Algo::Mbvd,
                k,
                ..RunConfig::default()
            };
            let env = make_env(&cfg.env_kind()).unwrap();
            let learner = Learner::new(env.spec(), cfg.learner_config(), 0).unwrap();
            let im = learner.imagination.as_ref().unwrap();
            learner.params.numel_of(&im.aggregator.params())
        })
        .collect();
    let same_size = counts.windows(2).all(|w| w[0] == w[1]);
    Verdict::new(
        lens_ok && dims_ok && deterministic && same_size,
        format!("latent counts k+1: {lens_ok}; rollout state width = state width: {dims_ok}; bit-identical and RNG-free: {deterministic}; aggregator sizes {counts:?}"),
    )
}

fn ablation_harness() -> Verdict {
    let dir = results_dir().join("acceptance_ablation");
    let _ = std::fs::remove_dir_all(&dir);
    let cfg = RunConfig {
        total_env_steps: 3000,
        eval_every: 1000,
        eval_episodes: 8,
        ..RunConfig::default()
    };
    let mut complete = true;
    let mut parts = Vec::new();
    for variant in [Algo::QmixRs, Algo::QmixLs] {
        let run = dir.join(variant.name());
        let rows = run_ablation_variant(variant, &cfg, &run).unwrap();
        let cadence: Vec<u64> = rows.iter().map(|r| r.env_steps).collect();
        complete &= rows.len() >= 4
            && rows.last().unwrap().env_steps >= cfg.total_env_steps
            && read_metrics(&run.join(METRICS_FILE)).unwrap() == rows
            && run.join(CHECKPOINT_FILE).exists()
            && rows.iter().all(|r| r.eval_return_median.is_finite() && r.loss.total.is_finite());
        parts.push(format!("{variant} rows at {cadence:?}, final median {:.3}", rows.last().unwrap().eval_return_median));
    }
    let table = k_sweep(&RunConfig { algo: Algo::Mbvd, ..cfg }, &[1, 3, 5], &[0, 1], &dir.join("k_sweep"), false).unwrap();
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    complete &= labels == ["k=1", "k=3", "k=5"] && dir.join("k_sweep/table.md").exists();
    parts.push(format!(
        "k-sweep medians {}",
        table
            .rows
            .iter()
            .map(|r| format!("{} {:.3}", r.label, r.summary.median))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    Verdict::new(complete, parts.join("; "))
}

fn embedding_export() -> Verdict {
    let cfg = RunConfig {
        log_wall_clock: true,
        algo: Algo::Mbvd,
        ..RunConfig::default()
    };
    let dir = results_dir().join("predator_prey_200k/mbvd/seed_0");
    train_or_reuse(&cfg, &dir, reuse()).unwrap();
    let ck = Checkpoint::load(&dir.join(CHECKPOINT_FILE)).unwrap();
    let rows = export_embeddings(&ck, 16, 0, None).unwrap();
    let trend = depth_trend(&rows).unwrap();
    let means: Vec<String> = mean_distance_by_depth(&rows).iter().map(|d| format!("{d:.4}")).collect();
    Verdict::new(
        trend.rho > 0.0 && trend.p_greater < 0.05,
        format!(
            "{} steps; mean distance by depth [{}]; spearman rho {:.4}, one-sided p {:.2e}",
            rows.len(),
            means.join(", "),
            trend.rho,
            trend.p_greater
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 9] = [
    (1, "oracle optimality on the matrix game", oracle_optimality),
    (2, "mbvd not worse than qmix on predator-prey", directional_benefit),
    (3, "KL identities", kl_identities),
    (4, "gradient integrity", gradient_integrity),
    (5, "IGM for vdn and qmix", igm_property),
    (6, "world-model overfit", world_model_overfit),
    (7, "rollout and aggregator contracts", rollout_contracts),
    (8, "ablation harness and k-sweep", ablation_harness),
    (9, "embedding export depth trend", embedding_export),
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    // `cargo test` passes harness flags such as `--list`; answer them quietly
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut unexpected = Vec::new();
    for (n, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let v = check();
        let known = KNOWN_FAILURES.iter().find(|k| k.0 == n);
        println!(
            "criterion {n} ({name}): {} [{:.0}s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            v.detail
        );
        match (v.pass, known) {
            (false, Some((_, why))) => println!("  known failure: {why}"),
            (false, None) => unexpected.push(n),
            _ => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
