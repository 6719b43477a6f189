//! The five subcommands. Each is a pure function of the run config: outputs
//! depend only on `RunConfig` (including its seed), never on the output
//! directory or wall-clock time.

use std::fs;
use std::path::{Path, PathBuf};

use graspolab_core::gdqn::{train, TrainOutcome};
use graspolab_core::mapping::{lr_fit_with, model_rmse, LineModel};
use graspolab_core::nn::{load_weights, save_weights, GDQN_INPUT};
use graspolab_core::sim::{random_policy_success_rate, SimEnv, SyntheticDataset};
use graspolab_core::{
    epsilon_at, evaluate_greedy, ga_fit, gen_position_dataset, pi_fit, EpisodeRecord, FitnessKind,
    GaResult, MappingMatrix, Network, ObservationSet, PositionModel,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{FitMethod, RunConfig};
use crate::error::HarnessError;
use crate::io::{
    fmt_f64, read_csv, read_observations, write_csv, write_lines, write_mapping,
    write_observations, ResultTable,
};

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const MSTAR_FILE: &str = "mstar.csv";
pub const FITNESS_TABLE_FILE: &str = "fitness_comparison.csv";
pub const MODEL_FILE: &str = "model.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const GA_HISTORY_FILE: &str = "ga_history.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const BATCHES_FILE: &str = "batches.csv";
pub const EPSILON_FILE: &str = "epsilon.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.gqn";
pub const CHECKPOINT_SIDECAR_FILE: &str = "checkpoint.csv";
pub const EVAL_BLOCKS_FILE: &str = "eval_blocks.csv";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.csv";

/// Episodes per success-rate aggregate.
pub const BATCH_SIZE: usize = 50;
/// Attempts per evaluation block.
pub const EVAL_BLOCK: usize = 10;
/// Smallest dataset `compare-fitness` accepts.
pub const MIN_COMPARE_ROWS: usize = 13;

fn prepare_out(out: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<SyntheticDataset, HarnessError> {
    if cfg.data_n < 3 {
        return Err(HarnessError::Config(format!(
            "data.n = {} but the pseudo-inverse needs at least 3 points",
            cfg.data_n
        )));
    }
    let mstar = cfg.mstar()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ds = gen_position_dataset(cfg.data_n, &mstar, cfg.data_sigma_r, &mut rng)
        .map_err(|e| HarnessError::Config(format!("data.sigma_r: {e}")))?;
    prepare_out(out)?;
    let comment = cfg.summary_line("gen-data");
    write_observations(&out.join(OBSERVATIONS_FILE), &comment, &ds.observations)?;
    write_mapping(&out.join(MSTAR_FILE), &comment, &ds.mstar)?;
    Ok(ds)
}

/// Seeded shuffle split into sorted train and test column indices.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    idx.shuffle(&mut rng);
    let n_train =
        ((n as f64 * train_fraction).round() as usize).clamp(1.min(n), n.saturating_sub(1));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub train: ObservationSet,
    pub test: ObservationSet,
}

fn split(cfg: &RunConfig, obs: &ObservationSet) -> Result<Split, HarnessError> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(HarnessError::Config(
            "split.train_fraction must lie in (0, 1)".into(),
        ));
    }
    let (train_idx, test_idx) = split_indices(obs.len(), cfg.train_fraction, cfg.seed);
    let sel = |idx: &[usize]| {
        obs.select(idx)
            .map_err(|e| HarnessError::data(&cfg.data_path, e.to_string()))
    };
    Ok(Split {
        train: sel(&train_idx)?,
        test: sel(&test_idx)?,
        train_idx,
        test_idx,
    })
}

fn load_dataset(cfg: &RunConfig, min_rows: usize) -> Result<ObservationSet, HarnessError> {
    let obs = read_observations(&cfg.data_path)?;
    if obs.len() < min_rows {
        return Err(HarnessError::data(
            &cfg.data_path,
            format!("need at least {min_rows} observations, found {}", obs.len()),
        ));
    }
    Ok(obs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessEntry {
    pub kind: FitnessKind,
    pub outcome: Result<FitnessScores, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessScores {
    pub mapping: MappingMatrix,
    pub best_fitness: f64,
    pub train_rmse: f64,
    pub test_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct FitnessComparison {
    /// Successful entries by ascending test RMSE, then failures in F order.
    pub entries: Vec<FitnessEntry>,
    pub table: ResultTable,
}

impl FitnessComparison {
    pub fn winner(&self) -> Option<FitnessKind> {
        self.entries
            .first()
            .filter(|e| e.outcome.is_ok())
            .map(|e| e.kind)
    }

    pub fn test_rmse(&self, kind: FitnessKind) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.kind == kind)
            .and_then(|e| e.outcome.as_ref().ok())
            .map(|s| s.test_rmse)
    }
}

pub fn compare_fitness(cfg: &RunConfig, out: &Path) -> Result<FitnessComparison, HarnessError> {
    let obs = load_dataset(cfg, MIN_COMPARE_ROWS)?;
    let sp = split(cfg, &obs)?;
    let ga = cfg.ga();
    ga.validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut entries: Vec<FitnessEntry> = FitnessKind::ALL
        .iter()
        .map(|&kind| {
            let outcome = ga_fit(&sp.train, &ga, kind)
                .and_then(|r| {
                    let model = PositionModel::Matrix(r.mapping);
                    Ok(FitnessScores {
                        mapping: r.mapping,
                        best_fitness: r.best_fitness,
                        train_rmse: model_rmse(&model, &sp.train)?,
                        test_rmse: model_rmse(&model, &sp.test)?,
                    })
                })
                .map_err(|e| e.to_string());
            FitnessEntry { kind, outcome }
        })
        .collect();
    entries.sort_by(|a, b| match (&a.outcome, &b.outcome) {
        (Ok(x), Ok(y)) => x.test_rmse.total_cmp(&y.test_rmse),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => std::cmp::Ordering::Equal,
    });

    let mut table = ResultTable::default();
    for (rank, e) in entries.iter().enumerate() {
        let label = e.kind.label();
        table.push(label, "expression", e.kind.expression());
        match &e.outcome {
            Ok(s) => {
                table.push(label, "status", "ok");
                table.push(label, "rank", (rank + 1).to_string());
                table.push(label, "best_fitness", fmt_f64(s.best_fitness));
                table.push(label, "train_rmse", fmt_f64(s.train_rmse));
                table.push(label, "test_rmse", fmt_f64(s.test_rmse));
            }
            Err(msg) => {
                table.push(label, "status", "failed");
                table.push(label, "error", msg.as_str());
            }
        }
    }
    let cmp = FitnessComparison { entries, table };
    let mut table = cmp.table.clone();
    table.push(
        "winner",
        "fitness",
        cmp.winner().map_or("none", FitnessKind::label),
    );
    prepare_out(out)?;
    table.write(
        &out.join(FITNESS_TABLE_FILE),
        &cfg.summary_line("compare-fitness"),
    )?;
    Ok(FitnessComparison { table, ..cmp })
}

#[derive(Debug, Clone)]
pub struct PositionFit {
    pub method: FitMethod,
    pub model: PositionModel,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub split: Split,
    pub ga: Option<GaResult>,
    pub lines: Option<LineModel>,
    pub table: ResultTable,
}

fn fit_err(method: FitMethod, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Fit(format!("{}: {e}", method.name()))
}

/// Fits one method on the seeded split without touching the filesystem.
pub fn fit_split(
    cfg: &RunConfig,
    method: FitMethod,
    sp: Split,
) -> Result<PositionFit, HarnessError> {
    let (model, ga, lines) = match method {
        FitMethod::Ga => {
            let ga = cfg.ga();
            ga.validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let r = ga_fit(&sp.train, &ga, cfg.ga_fitness).map_err(|e| fit_err(method, e))?;
            (PositionModel::Matrix(r.mapping), Some(r), None)
        }
        FitMethod::Lr => {
            let lm =
                lr_fit_with(&sp.train, cfg.degenerate_policy()).map_err(|e| fit_err(method, e))?;
            (PositionModel::Lines(lm.lines), None, Some(lm))
        }
        FitMethod::Pi => {
            let m = pi_fit(&sp.train).map_err(|e| fit_err(method, e))?;
            (PositionModel::Matrix(m), None, None)
        }
    };
    let train_rmse = model_rmse(&model, &sp.train).map_err(|e| fit_err(method, e))?;
    let test_rmse = model_rmse(&model, &sp.test).map_err(|e| fit_err(method, e))?;

    let label = method.name();
    let mut table = ResultTable::default();
    table.push(label, "n_train", sp.train.len().to_string());
    table.push(label, "n_test", sp.test.len().to_string());
    table.push(label, "train_rmse", fmt_f64(train_rmse));
    table.push(label, "test_rmse", fmt_f64(test_rmse));
    if let Some(r) = &ga {
        table.push(label, "fitness", cfg.ga_fitness.label());
        table.push(label, "best_fitness", fmt_f64(r.best_fitness));
    }
    if let Some(lm) = &lines {
        let constant: Vec<&str> = ["x", "y", "z"]
            .iter()
            .zip(lm.constant_axes)
            .filter(|(_, c)| *c)
            .map(|(a, _)| *a)
            .collect();
        table.push(label, "constant_axes", constant.join(" "));
    }
    Ok(PositionFit {
        method,
        model,
        train_rmse,
        test_rmse,
        split: sp,
        ga,
        lines,
        table,
    })
}

pub fn load_split(cfg: &RunConfig) -> Result<Split, HarnessError> {
    let obs = load_dataset(cfg, 4)?;
    split(cfg, &obs)
}

pub fn fit_position(cfg: &RunConfig, out: &Path) -> Result<PositionFit, HarnessError> {
    let fit = fit_split(cfg, cfg.fit_method, load_split(cfg)?)?;
    prepare_out(out)?;
    let comment = cfg.summary_line("fit-position");
    match (&fit.model, &fit.lines) {
        (PositionModel::Matrix(m), _) => write_mapping(&out.join(MODEL_FILE), &comment, m)?,
        (PositionModel::Lines(_), Some(lm)) => write_lines(&out.join(MODEL_FILE), &comment, lm)?,
        (PositionModel::Lines(_), None) => unreachable!("line models carry their LineModel"),
    }
    fit.table.write(&out.join(METRICS_FILE), &comment)?;

    let mut rows = Vec::with_capacity(fit.split.train.len() + fit.split.test.len());
    for (name, idx, obs) in [
        ("train", &fit.split.train_idx, &fit.split.train),
        ("test", &fit.split.test_idx, &fit.split.test),
    ] {
        for (j, row) in idx.iter().enumerate() {
            let (p, r) = (obs.image_point(j), obs.position(j));
            let q = fit.model.predict(&p);
            let mut rec = vec![name.to_string(), row.to_string()];
            rec.extend(
                [p.ix, p.iy, p.iz, r.rx, r.ry, r.rz, q.rx, q.ry, q.rz]
                    .iter()
                    .map(|v| fmt_f64(*v)),
            );
            rows.push(rec);
        }
    }
    write_csv(
        &out.join(PREDICTIONS_FILE),
        &comment,
        &[
            "split", "row", "ix", "iy", "iz", "rx", "ry", "rz", "px", "py", "pz",
        ],
        rows,
    )?;
    if let Some(r) = &fit.ga {
        let rows = r
            .history
            .iter()
            .enumerate()
            .map(|(g, f)| vec![(g + 1).to_string(), fmt_f64(*f)]);
        write_csv(
            &out.join(GA_HISTORY_FILE),
            &comment,
            &["generation", "best_fitness"],
            rows,
        )?;
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub batch: usize,
    pub first_episode: usize,
    pub episodes: usize,
    /// Mean reward of the actions actually taken (exploration included).
    pub success_rate: f64,
    /// Fraction of episodes whose greedy action was the rewarded one.
    pub greedy_rate: f64,
    /// Cumulative score at the batch's last episode.
    pub score: u64,
}

/// Consecutive `size`-episode aggregates; a trailing partial batch is kept.
pub fn batch_stats(log: &[EpisodeRecord], size: usize) -> Vec<BatchStats> {
    log.chunks(size.max(1))
        .enumerate()
        .map(|(b, chunk)| {
            let n = chunk.len() as f64;
            BatchStats {
                batch: b,
                first_episode: chunk[0].episode,
                episodes: chunk.len(),
                success_rate: chunk.iter().map(|r| r.reward as f64).sum::<f64>() / n,
                greedy_rate: chunk.iter().filter(|r| r.greedy_success()).count() as f64 / n,
                score: chunk[chunk.len() - 1].score,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OrientationRun {
    pub outcome: TrainOutcome,
    pub batches: Vec<BatchStats>,
}

pub fn train_orient(cfg: &RunConfig, out: &Path) -> Result<OrientationRun, HarnessError> {
    let agent = cfg.agent();
    agent
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut env =
        SimEnv::new(cfg.env(agent.n_actions)?).map_err(|e| HarnessError::Config(e.to_string()))?;
    let outcome = train(&mut env, &agent).map_err(|e| HarnessError::Train(e.to_string()))?;
    let batches = batch_stats(&outcome.log, BATCH_SIZE);

    prepare_out(out)?;
    let comment = cfg.summary_line("train-orient");
    let rows = outcome.log.iter().map(|r| {
        vec![
            r.episode.to_string(),
            r.action.to_string(),
            r.reward.to_string(),
            fmt_f64(r.epsilon),
            r.score.to_string(),
            r.loss.map(fmt_f64).unwrap_or_default(),
        ]
    });
    write_csv(
        &out.join(EPISODES_FILE),
        &comment,
        &["episode", "action", "reward", "epsilon", "score", "loss"],
        rows,
    )?;
    let rows = batches.iter().map(|b| {
        vec![
            b.batch.to_string(),
            b.first_episode.to_string(),
            b.episodes.to_string(),
            fmt_f64(b.success_rate),
            fmt_f64(b.greedy_rate),
            b.score.to_string(),
        ]
    });
    write_csv(
        &out.join(BATCHES_FILE),
        &comment,
        &[
            "batch",
            "first_episode",
            "episodes",
            "success_rate",
            "greedy_rate",
            "score",
        ],
        rows,
    )?;
    let rows = (0..=agent.n_episodes).map(|e| vec![e.to_string(), fmt_f64(epsilon_at(e, &agent))]);
    write_csv(
        &out.join(EPSILON_FILE),
        &comment,
        &["episode", "epsilon"],
        rows,
    )?;

    let ckpt = out.join(CHECKPOINT_FILE);
    fs::write(&ckpt, save_weights(&outcome.network)).map_err(|e| HarnessError::io(&ckpt, e))?;
    let sidecar: Vec<Vec<String>> = cfg
        .entries()
        .into_iter()
        .filter(|(k, _)| *k == "seed" || k.starts_with("agent."))
        .map(|(k, v)| vec![k.trim_start_matches("agent.").to_string(), v])
        .collect();
    write_csv(
        &out.join(CHECKPOINT_SIDECAR_FILE),
        &comment,
        &["key", "value"],
        sidecar,
    )?;
    Ok(OrientationRun { outcome, batches })
}

/// Sidecar path for a checkpoint: same stem, `.csv` extension.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("csv")
}

/// Loads a checkpoint and cross-checks its sidecar, when present.
pub fn load_checkpoint(path: &Path) -> Result<Network, HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let net = load_weights(&bytes)
        .map_err(|e| HarnessError::Checkpoint(format!("{}: {e}", path.display())))?;
    if net.input_shape() != GDQN_INPUT {
        return Err(HarnessError::Checkpoint(format!(
            "{}: input shape {:?}, expected {:?}",
            path.display(),
            net.input_shape(),
            GDQN_INPUT
        )));
    }
    let side = sidecar_path(path);
    if side.exists() {
        let (_, rows) = read_csv(&side)?;
        if let Some(row) = rows
            .iter()
            .find(|r| r.first().map(String::as_str) == Some("n_actions"))
        {
            let declared: usize = row
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| HarnessError::data(&side, "unreadable n_actions"))?;
            if declared != net.output_len() {
                return Err(HarnessError::Checkpoint(format!(
                    "{}: sidecar declares {declared} actions, network has {}",
                    path.display(),
                    net.output_len()
                )));
            }
        }
    }
    Ok(net)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rewards: Vec<u8>,
    /// `(first attempt, attempts, successes)` per block.
    pub blocks: Vec<(usize, usize, usize)>,
    pub random_policy_rate: f64,
    pub table: ResultTable,
}

impl Evaluation {
    pub fn success_rate(&self) -> Option<f64> {
        if self.rewards.is_empty() {
            None
        } else {
            Some(self.rewards.iter().map(|r| *r as f64).sum::<f64>() / self.rewards.len() as f64)
        }
    }
}

/// Greedy evaluation of `eval.checkpoint`, or of a freshly initialized
/// network when no checkpoint is configured.
pub fn eval_orient(cfg: &RunConfig, out: &Path) -> Result<Evaluation, HarnessError> {
    let net = match &cfg.checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => Network::gdqn(cfg.n_actions, cfg.seed)
            .map_err(|e| HarnessError::Config(e.to_string()))?,
    };
    if net.output_len() != cfg.n_actions {
        return Err(HarnessError::Checkpoint(format!(
            "network has {} actions but agent.n_actions = {}",
            net.output_len(),
            cfg.n_actions
        )));
    }
    let env_cfg = cfg.env(cfg.n_actions)?;
    let random_policy_rate = random_policy_success_rate(&env_cfg, 0.1);
    let angles = env_cfg.angles.clone();
    let mut env = SimEnv::evaluation(env_cfg).map_err(|e| HarnessError::Config(e.to_string()))?;
    let rewards = evaluate_greedy(&mut env, &net, &angles, cfg.attempts)
        .map_err(|e| HarnessError::Train(e.to_string()))?;
    let blocks: Vec<(usize, usize, usize)> = rewards
        .chunks(EVAL_BLOCK)
        .enumerate()
        .map(|(b, c)| {
            (
                b * EVAL_BLOCK,
                c.len(),
                c.iter().filter(|r| **r == 1).count(),
            )
        })
        .collect();

    let mut table = ResultTable::default();
    table.push("greedy", "attempts", rewards.len().to_string());
    table.push(
        "greedy",
        "successes",
        rewards.iter().filter(|r| **r == 1).count().to_string(),
    );
    let mut eval = Evaluation {
        rewards,
        blocks,
        random_policy_rate,
        table,
    };
    if let Some(rate) = eval.success_rate() {
        eval.table.push("greedy", "success_rate", fmt_f64(rate));
    }
    eval.table
        .push("random_policy", "success_rate", fmt_f64(random_policy_rate));

    prepare_out(out)?;
    let comment = cfg.summary_line("eval-orient");
    let rows = eval.blocks.iter().enumerate().map(|(b, (first, n, s))| {
        vec![
            b.to_string(),
            first.to_string(),
            n.to_string(),
            s.to_string(),
            fmt_f64(*s as f64 / *n as f64),
        ]
    });
    write_csv(
        &out.join(EVAL_BLOCKS_FILE),
        &comment,
        &[
            "block",
            "first_attempt",
            "attempts",
            "successes",
            "success_rate",
        ],
        rows,
    )?;
    eval.table.write(&out.join(EVAL_SUMMARY_FILE), &comment)?;
    Ok(eval)
}
