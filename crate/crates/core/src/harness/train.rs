//! Training orchestration: collect a buffer per iteration, solve the
//! inner problem at every step, update the agent, append metrics, and
//! keep a resumable checkpoint.
//!
//! Random-stream discipline: one ChaCha generator seeded by the run
//! seed. Stream 0 covers initialization (user placement, network init),
//! and iteration `i` runs entirely on stream `i + 1`, rewound to word
//! position zero, so each iteration's randomness is a pure function of
//! `(seed, i)`. Because iterations touch disjoint streams and the
//! checkpoint carries all mutable state, a resumed run replays the exact
//! stream sequence of an uninterrupted one — a fixed seed yields
//! identical metrics and weights either way.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::experiment::ExperimentConfig;
use super::metrics::{append_metrics_row, truncate_metrics, MetricsRow};
use super::{io_err, ConfigError, HarnessError};
use crate::agent::{
    ppo_update, AgentError, Checkpoint, Normalizer, PolicyNet, Trajectory, ValueNet,
};
use crate::env::RisEnv;

/// Where one training run left its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The run's seed.
    pub seed: u64,
    /// Final checkpoint path.
    pub checkpoint_path: PathBuf,
    /// Metrics CSV path (one row per iteration).
    pub metrics_path: PathBuf,
    /// Iterations completed over the run's whole life.
    pub iterations_completed: u64,
    /// Iterations already present when this invocation started (0 for a
    /// fresh run).
    pub resumed_from: u64,
}

/// Checkpoint filename for a seed inside an output directory.
pub fn checkpoint_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("checkpoint_seed{seed}.bin"))
}

/// Metrics filename for a seed inside an output directory.
pub fn metrics_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("metrics_seed{seed}.csv"))
}

/// Trains one seed to the configured iteration budget, resuming from an
/// existing checkpoint in `out_dir` when one matches the config and seed.
///
/// A checkpoint whose config hash differs is an error — stale artifacts
/// are never silently overwritten; delete the directory or point at a
/// fresh one to start over. Inner-solver breakdowns abort the run; the
/// last interval checkpoint stays resumable.
pub fn run_train(
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<TrainOutcome, HarnessError> {
    run_train_capped(config, seed, out_dir, None)
}

/// `run_train` with an optional hard stop after `cap` total iterations.
/// The cap models an interruption (tests use it to exercise resume); it
/// does not alter the stream sequence, so capped-then-resumed equals
/// uninterrupted.
pub(crate) fn run_train_capped(
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
    cap: Option<u64>,
) -> Result<TrainOutcome, HarnessError> {
    config.validate().map_err(|message| ConfigError::Invalid {
        path: "<config>".into(),
        message,
    })?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let ckpt_path = checkpoint_path(out_dir, seed);
    let metrics_file = metrics_path(out_dir, seed);
    let hash = config.config_hash(seed);
    let total_iterations = config.experiment.iterations;
    let buffer_size = config.experiment.buffer_size;
    let ppo_cfg = config.ppo_config();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Stream 0: geometry placement and network initialization.
    rng.set_stream(0);
    rng.set_word_pos(0);
    let env_cfg = config.build_env(&mut rng)?;
    let layout = env_cfg.action_layout();
    let state_dim = env_cfg.state_dim();

    let (mut policy, mut value, mut normalizer, mut env_steps, start_iter) =
        if ckpt_path.exists() {
            let ck = Checkpoint::load(&ckpt_path, Some(hash))?;
            if ck.policy.layout() != &layout {
                return Err(HarnessError::Agent(AgentError::BadCheckpoint(
                    "checkpoint action layout does not match the configured scheme".into(),
                )));
            }
            if ck.normalizer.dim() != state_dim {
                return Err(HarnessError::Agent(AgentError::BadCheckpoint(format!(
                    "checkpoint state dimension {} does not match the config's {}",
                    ck.normalizer.dim(),
                    state_dim
                ))));
            }
            (ck.policy, ck.value, ck.normalizer, ck.env_steps, ck.iterations)
        } else {
            let hidden = config.experiment.hidden_width;
            (
                PolicyNet::new(state_dim, hidden, layout, &mut rng),
                ValueNet::new(state_dim, hidden, &mut rng),
                Normalizer::new(state_dim),
                0,
                0,
            )
        };

    // Drop metrics rows past the checkpoint (a crash can append a row
    // before the matching save) and start a fresh file for a fresh run.
    if start_iter == 0 && metrics_file.exists() {
        std::fs::remove_file(&metrics_file).map_err(io_err(&metrics_file))?;
    } else {
        truncate_metrics(&metrics_file, start_iter)?;
    }

    let mut env = RisEnv::new(env_cfg, &mut rng)?;
    let mut trajectory = Trajectory::new();
    let stop = cap.unwrap_or(total_iterations).min(total_iterations);

    for iter in start_iter..stop {
        // Each iteration owns its stream, starting from word zero.
        rng.set_stream(iter + 1);
        rng.set_word_pos(0);
        env.reset(&mut rng)?;
        trajectory.clear();
        let mut records = Vec::with_capacity(buffer_size);
        for _ in 0..buffer_size {
            let normalized = normalizer.normalize(env.state(), true);
            let eval = policy.evaluate(&normalized)?;
            let (action, log_prob) = policy.sample(&eval, &mut rng);
            let (value_est, _) = value.evaluate(&normalized)?;
            let record = env.step(&action, &mut rng)?;
            trajectory.push(normalized, action, log_prob, record.reward, value_est);
            records.push(record);
        }
        trajectory.finalize(ppo_cfg.gamma, ppo_cfg.gae_lambda);
        env_steps += buffer_size as u64;

        let row = MetricsRow::from_records(iter, &records);
        append_metrics_row(&metrics_file, &row)?;

        ppo_update(&mut policy, &mut value, &trajectory, &ppo_cfg, &mut rng)?;

        let completed = iter + 1;
        let interval = config.experiment.checkpoint_interval;
        if completed == total_iterations || (interval != 0 && completed % interval == 0) {
            Checkpoint {
                config_hash: hash,
                env_steps,
                iterations: completed,
                normalizer: normalizer.clone(),
                policy: policy.clone(),
                value: value.clone(),
            }
            .save(&ckpt_path)?;
        }
    }

    // An already-complete invocation still guarantees a checkpoint.
    if start_iter >= stop && !ckpt_path.exists() {
        Checkpoint {
            config_hash: hash,
            env_steps,
            iterations: start_iter,
            normalizer,
            policy,
            value,
        }
        .save(&ckpt_path)?;
    }

    Ok(TrainOutcome {
        seed,
        checkpoint_path: ckpt_path,
        metrics_path: metrics_file,
        iterations_completed: stop.max(start_iter),
        resumed_from: start_iter,
    })
}

/// Trains every configured seed (independent concurrent jobs) into
/// `out_dir`; outcomes come back in seed order.
pub fn run_train_seeds(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Vec<TrainOutcome>, HarnessError> {
    let mut outcomes: Vec<TrainOutcome> = config
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| run_train(config, seed, out_dir))
        .collect::<Result<_, _>>()?;
    outcomes.sort_by_key(|o| o.seed);
    Ok(outcomes)
}
