//! Parameter sweeps and enumeration-oracle runs, both evaluated on a
//! fixed held-out channel set.
//!
//! Evaluation is strictly read-only: the greedy policy acts with frozen
//! weights and frozen normalizer statistics, and the held-out draws come
//! from a dedicated seed independent of every training stream, so every
//! method and axis value faces the same channels.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::csvio::write_rows_csv;
use super::experiment::ExperimentConfig;
use super::metrics::MetricsRow;
use super::train::{checkpoint_path, run_train_seeds};
use super::{ConfigError, HarnessError};
use crate::agent::{AgentError, Checkpoint};
use crate::channel::sample_channel_set;
use crate::env::{enumerate_oracle, RisEnv, StepRecord};
use crate::inner::solve;
use crate::sysmodel::ModeAssignment;

/// Aggregate of a greedy evaluation over one held-out channel set.
/// Energy, amplification, and transmission-time means cover feasible
/// draws only and are NaN when nothing was feasible.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    /// Held-out draws evaluated.
    pub draws: usize,
    /// Mean reward across all draws.
    pub mean_reward: f64,
    /// Mean min-max energy in millijoules across feasible draws.
    pub mean_minmax_energy_mj: f64,
    /// Fraction of draws whose chosen configuration was infeasible.
    pub infeasible_fraction: f64,
    /// Mean fraction of elements in active mode.
    pub active_ratio: f64,
    /// Mean fraction of elements in passive mode.
    pub passive_ratio: f64,
    /// Mean fraction of elements idle.
    pub idle_ratio: f64,
    /// Mean amplification over active element instances.
    pub mean_rho_active: f64,
    /// Mean total second-phase transmission time across feasible draws.
    pub mean_t2_seconds: f64,
}

impl EvalSummary {
    /// Aggregates evaluation records (same conventions as a metrics row).
    pub fn from_records(records: &[StepRecord]) -> Self {
        let row = MetricsRow::from_records(0, records);
        EvalSummary {
            draws: records.len(),
            mean_reward: row.mean_reward,
            mean_minmax_energy_mj: row.mean_minmax_energy_mj,
            infeasible_fraction: row.infeasible_fraction,
            active_ratio: row.active_ratio,
            passive_ratio: row.passive_ratio,
            idle_ratio: row.idle_ratio,
            mean_rho_active: row.mean_rho_active,
            mean_t2_seconds: row.mean_t2_seconds,
        }
    }
}

/// Builds the training-time environment for `(config, seed)` — stream 0
/// of the seed's generator, exactly as `run_train` does — so evaluation
/// sees the same geometry the checkpoint was trained on.
fn training_env(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<crate::env::EnvConfig, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng.set_word_pos(0);
    Ok(config.build_env(&mut rng)?)
}

/// Evaluates a trained checkpoint greedily on `draws` held-out channels
/// seeded by `eval_seed`. Neither the weights nor the normalizer
/// statistics change.
pub fn evaluate_checkpoint(
    config: &ExperimentConfig,
    seed: u64,
    checkpoint: &Path,
    draws: usize,
    eval_seed: u64,
) -> Result<EvalSummary, HarnessError> {
    assert!(draws >= 1, "evaluation needs at least one draw");
    let env_cfg = training_env(config, seed)?;
    let layout = env_cfg.action_layout();
    let state_dim = env_cfg.state_dim();

    let ck = Checkpoint::load(checkpoint, Some(config.config_hash(seed)))?;
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
    let policy = ck.policy;
    let mut normalizer = ck.normalizer;

    let mut eval_rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let mut env = RisEnv::new(env_cfg, &mut eval_rng)?;
    let mut records = Vec::with_capacity(draws);
    for _ in 0..draws {
        env.reset(&mut eval_rng)?;
        // `update: false` — evaluation must not move the statistics.
        let normalized = normalizer.normalize(env.state(), false);
        let eval = policy.evaluate(&normalized)?;
        let action = policy.greedy(&eval);
        records.push(env.evaluate(env.channels(), &action)?);
    }
    Ok(EvalSummary::from_records(&records))
}

/// Evaluates a scheme with no trainable actions (all-passive or no-RIS)
/// on the same held-out protocol as [`evaluate_checkpoint`].
pub fn evaluate_fixed_policy(
    config: &ExperimentConfig,
    seed: u64,
    draws: usize,
    eval_seed: u64,
) -> Result<EvalSummary, HarnessError> {
    assert!(draws >= 1, "evaluation needs at least one draw");
    let env_cfg = training_env(config, seed)?;
    if !env_cfg.action_layout().head_sizes().is_empty() {
        return Err(ConfigError::Invalid {
            path: "<config>".into(),
            message: format!(
                "scheme {:?} has trainable actions; evaluate a checkpoint instead",
                env_cfg.scheme
            ),
        }
        .into());
    }
    let mut eval_rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let mut env = RisEnv::new(env_cfg, &mut eval_rng)?;
    let mut records = Vec::with_capacity(draws);
    for _ in 0..draws {
        env.reset(&mut eval_rng)?;
        records.push(env.evaluate(env.channels(), &[])?);
    }
    Ok(EvalSummary::from_records(&records))
}

/// One sweep result: a trained seed evaluated at one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Axis slug (`es_power`, `n_elements`, `ris_distance`, `q_min`).
    pub axis: String,
    /// Axis value the config was pinned to.
    pub value: f64,
    /// Training seed.
    pub seed: u64,
    /// Mean min-max energy (mJ) over feasible held-out draws.
    pub mean_minmax_energy_mj: f64,
    /// Fraction of held-out draws that were infeasible.
    pub infeasible_fraction: f64,
    /// Mean active-mode element fraction.
    pub active_ratio: f64,
    /// Mean passive-mode element fraction.
    pub passive_ratio: f64,
    /// Mean idle element fraction.
    pub idle_ratio: f64,
    /// Mean amplification over active element instances.
    pub mean_rho_active: f64,
    /// Mean total second-phase transmission time (s) over feasible draws.
    pub mean_t2_seconds: f64,
}

/// Artifacts of one sweep run.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// The sweep table (`sweep_<axis>.csv`).
    pub csv_path: PathBuf,
    /// Rows in value-major, seed-minor order.
    pub rows: Vec<SweepRow>,
}

/// Formats an axis value for a directory name (integral values lose the
/// trailing `.0` so `es_power_40`, not `es_power_40.0`).
fn format_axis_value(value: f64) -> String {
    if value.is_finite() && value == value.trunc() && value.abs() < 1e12 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

/// Runs the configured sweep: for each axis value, trains (or reuses)
/// one policy per seed in `out_dir/<axis>_<value>/`, evaluates each
/// greedily on the shared held-out set, and writes one CSV row per
/// `(value, seed)` to `out_dir/sweep_<axis>.csv`.
///
/// Schemes with no trainable actions skip training and evaluate the
/// fixed policy directly. With `sweep.train_fresh = false`, existing
/// checkpoints are required and missing ones are an error.
pub fn run_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<SweepOutcome, HarnessError> {
    config.validate().map_err(|message| ConfigError::Invalid {
        path: "<config>".into(),
        message,
    })?;
    std::fs::create_dir_all(out_dir).map_err(super::io_err(out_dir))?;
    let axis = config.sweep.axis;
    let slug = axis.slug();
    let draws = config.sweep.eval_draws;
    let eval_seed = config.sweep.eval_seed;
    let trainable = !config.env.scheme.head_sizes_per_element().is_empty();

    let mut rows = Vec::new();
    for &value in &config.sweep.values {
        let cfg_v = config.with_axis_value(axis, value)?;
        let value_dir = out_dir.join(format!("{slug}_{}", format_axis_value(value)));
        if trainable {
            if config.sweep.train_fresh {
                run_train_seeds(&cfg_v, &value_dir)?;
            } else {
                for &seed in &cfg_v.experiment.seeds {
                    let ckpt = checkpoint_path(&value_dir, seed);
                    if !ckpt.exists() {
                        return Err(HarnessError::MissingCheckpoint {
                            path: ckpt.display().to_string(),
                        });
                    }
                }
            }
        }
        for &seed in &cfg_v.experiment.seeds {
            let summary = if trainable {
                let ckpt = checkpoint_path(&value_dir, seed);
                evaluate_checkpoint(&cfg_v, seed, &ckpt, draws, eval_seed)?
            } else {
                evaluate_fixed_policy(&cfg_v, seed, draws, eval_seed)?
            };
            rows.push(SweepRow {
                axis: slug.to_string(),
                value,
                seed,
                mean_minmax_energy_mj: summary.mean_minmax_energy_mj,
                infeasible_fraction: summary.infeasible_fraction,
                active_ratio: summary.active_ratio,
                passive_ratio: summary.passive_ratio,
                idle_ratio: summary.idle_ratio,
                mean_rho_active: summary.mean_rho_active,
                mean_t2_seconds: summary.mean_t2_seconds,
            });
        }
    }

    let csv_path = out_dir.join(format!("sweep_{slug}.csv"));
    write_rows_csv(&csv_path, &rows)?;
    Ok(SweepOutcome { csv_path, rows })
}

/// One held-out draw solved exhaustively by the enumeration oracle,
/// next to the all-idle (surface off) baseline on the same channels.
/// Mode and objective columns are NaN when no candidate was feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    /// Held-out draw index.
    pub draw: u64,
    /// Best min-max energy (mJ) over the menu; NaN when infeasible.
    pub objective_mj: f64,
    /// Whether any menu candidate was feasible.
    pub feasible: bool,
    /// Active-mode fraction of the best assignment.
    pub active_ratio: f64,
    /// Passive-mode fraction of the best assignment.
    pub passive_ratio: f64,
    /// Idle fraction of the best assignment.
    pub idle_ratio: f64,
    /// Mean amplification over the best assignment's active elements.
    pub mean_rho_active: f64,
    /// Min-max energy (mJ) with every element idle; NaN when infeasible.
    pub all_idle_objective_mj: f64,
    /// Whether the all-idle baseline was feasible.
    pub all_idle_feasible: bool,
    /// Raw composite actions in the menu.
    pub candidates: u64,
    /// Distinct inner problems solved.
    pub solves: u64,
}

/// Artifacts of one oracle run.
#[derive(Debug, Clone)]
pub struct OracleRunOutcome {
    /// The per-draw table (`oracle.csv`).
    pub csv_path: PathBuf,
    /// Rows in draw order.
    pub rows: Vec<OracleRow>,
    /// True when at least one draw had a feasible candidate.
    pub any_feasible: bool,
}

/// Exhaustively enumerates the configured scheme's mode menu on the
/// held-out channel set and writes one CSV row per draw, including an
/// all-idle baseline column pair solved on identical channels.
pub fn run_oracle(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<OracleRunOutcome, HarnessError> {
    config.validate().map_err(|message| ConfigError::Invalid {
        path: "<config>".into(),
        message,
    })?;
    std::fs::create_dir_all(out_dir).map_err(super::io_err(out_dir))?;
    // Geometry follows the first training seed so oracle and training
    // results are comparable draw for draw.
    let env_cfg = training_env(config, config.experiment.seeds[0])?;
    let n = env_cfg.n_elements();
    let all_idle = ModeAssignment::new(vec![false; n], vec![false; n], vec![1.0; n], env_cfg.rho_max)
        .expect("an all-idle assignment is always valid");

    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.sweep.eval_seed);
    let mut rows = Vec::with_capacity(config.sweep.eval_draws);
    for draw in 0..config.sweep.eval_draws {
        let channels = sample_channel_set(&env_cfg.geometry, &env_cfg.links, &mut eval_rng)
            .map_err(crate::env::EnvError::from)?;
        let outcome = enumerate_oracle(&channels, &env_cfg, config.oracle.uniform_rho)?;

        let baseline = crate::env::ris_env::problem_for(&env_cfg, &channels, &all_idle)?;
        let baseline_solution = solve(&baseline).map_err(crate::env::EnvError::from)?;

        let (active_ratio, passive_ratio, idle_ratio, mean_rho_active, objective_mj) =
            if outcome.feasible {
                let (a, p, i) = outcome.modes.mode_ratios();
                (a, p, i, outcome.modes.mean_rho_active(), outcome.objective * 1e3)
            } else {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            };
        rows.push(OracleRow {
            draw: draw as u64,
            objective_mj,
            feasible: outcome.feasible,
            active_ratio,
            passive_ratio,
            idle_ratio,
            mean_rho_active,
            all_idle_objective_mj: if baseline_solution.is_feasible() {
                baseline_solution.objective * 1e3
            } else {
                f64::NAN
            },
            all_idle_feasible: baseline_solution.is_feasible(),
            candidates: outcome.candidates,
            solves: outcome.solves,
        });
    }

    let csv_path = out_dir.join("oracle.csv");
    write_rows_csv(&csv_path, &rows)?;
    let any_feasible = rows.iter().any(|r| r.feasible);
    Ok(OracleRunOutcome { csv_path, rows, any_feasible })
}
