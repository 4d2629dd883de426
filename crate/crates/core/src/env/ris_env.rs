//! The environment proper: state assembly from channel magnitudes, the
//! decode → assemble → solve → reward step, and held-out evaluation.

use nalgebra::DVector;
use rand::Rng;

use super::{EnvConfig, EnvError, Scheme};
use crate::channel::{sample_channel_set, ChannelSet};
use crate::inner::{solve, InnerSolution};
use crate::sysmodel::{assemble_inner_problem, ModeAssignment};

/// Per-element state vector of dimension `J·N + N + J + 1`:
/// `|h_{j,n}^UR|` user-major (user 0's N entries first), then `|h_n^RB|`,
/// then `|h_j^UB|`, then the scalar `‖h^ES‖`.
pub fn build_state(channels: &ChannelSet) -> DVector<f64> {
    let j = channels.n_users();
    let n = channels.n_elements();
    let mut out = Vec::with_capacity(j * n + n + j + 1);
    for row in &channels.h_ur {
        out.extend(row.iter().map(|h| h.norm()));
    }
    out.extend(channels.h_rb.iter().map(|h| h.norm()));
    out.extend(channels.h_ub.iter().map(|h| h.norm()));
    out.push(channels.h_es_norm_sq().sqrt());
    DVector::from_vec(out)
}

/// Compact all-norms state of dimension `2J + 2`: `‖h^RB‖`, then the
/// per-user `‖h_j^UR‖`, then the per-user `|h_j^UB|`, then `‖h^ES‖`. An
/// alternative reading of the state definition, selected by
/// [`EnvConfig::compact_state`].
pub fn build_state_compact(channels: &ChannelSet) -> DVector<f64> {
    let j = channels.n_users();
    let mut out = Vec::with_capacity(2 * j + 2);
    out.push(channels.h_rb.iter().map(|h| h.norm_sqr()).sum::<f64>().sqrt());
    for row in &channels.h_ur {
        out.push(row.iter().map(|h| h.norm_sqr()).sum::<f64>().sqrt());
    }
    out.extend(channels.h_ub.iter().map(|h| h.norm()));
    out.push(channels.h_es_norm_sq().sqrt());
    DVector::from_vec(out)
}

/// Everything one step produced: the state the action was taken in, the
/// action, the (clamped) reward, the decoded modes, and the inner-solver
/// outcome. `solution.is_feasible()` distinguishes the two reward
/// branches; the unclamped objective stays available through
/// `solution.objective`.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// State observed when the action was chosen.
    pub state: DVector<f64>,
    /// Sampled head indices (layout per the scheme).
    pub action: Vec<usize>,
    /// `max(−F*/e_ref, −κ)` when solvable, `−κ` when infeasible.
    pub reward: f64,
    /// Decoded per-element mode assignment.
    pub modes: ModeAssignment,
    /// Full inner-solver outcome (zero allocation when infeasible).
    pub solution: InnerSolution,
}

/// The decision environment over independent block-fading frames.
///
/// Holds the current channel realization and its state vector; each
/// [`step`](RisEnv::step) consumes them and draws fresh ones. A single
/// instance must not be stepped concurrently; run one instance per thread
/// with independent random streams instead.
#[derive(Debug, Clone)]
pub struct RisEnv {
    config: EnvConfig,
    channels: ChannelSet,
    state: DVector<f64>,
}

impl RisEnv {
    /// Validates the config and draws the initial channel realization.
    pub fn new<R: Rng + ?Sized>(config: EnvConfig, rng: &mut R) -> Result<Self, EnvError> {
        config.validate()?;
        let channels = sample_channel_set(&config.geometry, &config.links, rng)?;
        let state = state_for(&config, &channels);
        Ok(Self { config, channels, state })
    }

    /// The configuration this environment runs with.
    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// The current state vector (the one the next action will act on).
    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    /// The current channel realization underlying [`state`](Self::state).
    pub fn channels(&self) -> &ChannelSet {
        &self.channels
    }

    /// The policy action layout for this environment.
    pub fn action_layout(&self) -> crate::agent::ActionLayout {
        self.config.action_layout()
    }

    /// Discards the current realization and draws a fresh one.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), EnvError> {
        self.channels = sample_channel_set(&self.config.geometry, &self.config.links, rng)?;
        self.state = state_for(&self.config, &self.channels);
        Ok(())
    }

    /// Takes one step: decodes the action against the current channels,
    /// solves the inner problem, forms the reward, then advances to a
    /// fresh independent channel draw. The returned record holds the
    /// pre-step state and the reward; [`state`](Self::state) afterwards is
    /// the next state.
    ///
    /// Infeasible instances are a *valid* outcome (penalty reward −κ);
    /// only genuine solver breakdowns surface as errors.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        action: &[usize],
        rng: &mut R,
    ) -> Result<StepRecord, EnvError> {
        let record = evaluate_on(&self.config, &self.channels, &self.state, action)?;
        self.channels = sample_channel_set(&self.config.geometry, &self.config.links, rng)?;
        self.state = state_for(&self.config, &self.channels);
        Ok(record)
    }

    /// Evaluates an action on an explicit channel realization without
    /// touching the environment's own state or consuming randomness —
    /// the path for held-out evaluation sets and oracle comparisons.
    pub fn evaluate(
        &self,
        channels: &ChannelSet,
        action: &[usize],
    ) -> Result<StepRecord, EnvError> {
        let state = state_for(&self.config, channels);
        evaluate_on(&self.config, channels, &state, action)
    }
}

/// State under the configured layout.
pub(crate) fn state_for(config: &EnvConfig, channels: &ChannelSet) -> DVector<f64> {
    if config.compact_state {
        build_state_compact(channels)
    } else {
        build_state(channels)
    }
}

/// Inner problem for a mode assignment under this config's semantics
/// (applies the optional no-hardware adjustment for the no-RIS scheme).
pub(crate) fn problem_for(
    config: &EnvConfig,
    channels: &ChannelSet,
    modes: &ModeAssignment,
) -> Result<crate::inner::InnerProblem, EnvError> {
    let mut problem = assemble_inner_problem(channels, modes, &config.params)?;
    if config.no_hardware_baseline && config.scheme == Scheme::NoRis {
        problem.fixed_energy = 0.0;
    }
    Ok(problem)
}

/// Shared decode → assemble → solve → reward path.
fn evaluate_on(
    config: &EnvConfig,
    channels: &ChannelSet,
    state: &DVector<f64>,
    action: &[usize],
) -> Result<StepRecord, EnvError> {
    let modes = config
        .scheme
        .decode_action(action, config.n_elements(), config.rho_max)?;
    let problem = problem_for(config, channels, &modes)?;
    let solution = solve(&problem)?;
    let reward = if solution.is_feasible() {
        (-solution.objective / config.e_ref).max(-config.kappa)
    } else {
        -config.kappa
    };
    Ok(StepRecord {
        state: state.clone(),
        action: action.to_vec(),
        reward,
        modes,
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::users_on_circle;
    use crate::inner::SolveStatus;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> EnvConfig {
        let mut cfg = EnvConfig::default_desk();
        cfg.geometry.ris_elements = 4;
        cfg.geometry.ehs_elements = 8;
        cfg.geometry.user_pos = users_on_circle(2, 0.5);
        cfg.params.q_min = 1.5;
        cfg
    }

    #[test]
    fn state_layout_and_dimension() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env = RisEnv::new(cfg, &mut rng).unwrap();
        let ch = env.channels();
        let s = env.state();
        // J=2, N=4 → 2·4 + 4 + 2 + 1 = 15.
        assert_eq!(s.len(), 15);
        // User-major UR block, then RB, then UB, then the ES norm.
        assert_relative_eq!(s[0], ch.h_ur[0][0].norm(), max_relative = 1e-15);
        assert_relative_eq!(s[3], ch.h_ur[0][3].norm(), max_relative = 1e-15);
        assert_relative_eq!(s[4], ch.h_ur[1][0].norm(), max_relative = 1e-15);
        assert_relative_eq!(s[8], ch.h_rb[0].norm(), max_relative = 1e-15);
        assert_relative_eq!(s[12], ch.h_ub[0].norm(), max_relative = 1e-15);
        assert_relative_eq!(s[14], ch.h_es_norm_sq().sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn all_zero_channels_give_zero_state() {
        let ch = ChannelSet {
            h_ub: vec![Complex64::ZERO; 2],
            h_ur: vec![vec![Complex64::ZERO; 3]; 2],
            h_rb: vec![Complex64::ZERO; 3],
            h_es: vec![Complex64::ZERO; 5],
        };
        assert!(build_state(&ch).iter().all(|&v| v == 0.0));
        assert!(build_state_compact(&ch).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn es_entry_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = small_config();
        let mut ch =
            sample_channel_set(&cfg.geometry, &cfg.links, &mut rng).unwrap();
        let before = build_state(&ch);
        ch.h_es.reverse();
        let after = build_state(&ch);
        let es = before.len() - 1;
        assert_abs_diff_eq!(before[es], after[es], epsilon = 1e-12);
    }

    #[test]
    fn compact_state_layout() {
        let mut cfg = small_config();
        cfg.compact_state = true;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let env = RisEnv::new(cfg, &mut rng).unwrap();
        let ch = env.channels();
        let s = env.state();
        assert_eq!(s.len(), 6);
        let rb_norm = ch.h_rb.iter().map(|h| h.norm_sqr()).sum::<f64>().sqrt();
        assert_relative_eq!(s[0], rb_norm, max_relative = 1e-15);
        assert_relative_eq!(s[4], ch.h_ub[1].norm(), max_relative = 1e-15);
    }

    #[test]
    fn reward_scaling_matches_objective() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut env = RisEnv::new(cfg.clone(), &mut rng).unwrap();
        let action = vec![1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0]; // all passive
        let rec = env.step(&action, &mut rng).unwrap();
        assert!(rec.solution.is_feasible(), "passive step should be solvable here");
        assert_relative_eq!(
            rec.reward,
            -rec.solution.objective / cfg.e_ref,
            max_relative = 1e-12
        );
        assert!(rec.reward <= 0.0 && rec.reward >= -cfg.kappa);
    }

    #[test]
    fn infeasible_step_pays_exactly_kappa() {
        let mut cfg = small_config();
        cfg.params.q_min = 40.0; // unreachable under the power cap
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut env = RisEnv::new(cfg.clone(), &mut rng).unwrap();
        let action = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]; // all idle
        let rec = env.step(&action, &mut rng).unwrap();
        assert!(!rec.solution.is_feasible());
        assert!(matches!(rec.solution.status, SolveStatus::Infeasible(_)));
        assert_eq!(rec.reward, -cfg.kappa);
    }

    #[test]
    fn rewards_stay_within_penalty_band() {
        // A tiny reward scale makes large feasible objectives clamp at −κ.
        let mut cfg = small_config();
        cfg.e_ref = 1e-9;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut env = RisEnv::new(cfg.clone(), &mut rng).unwrap();
        for _ in 0..5 {
            let action = vec![1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0];
            let rec = env.step(&action, &mut rng).unwrap();
            assert!(rec.reward >= -cfg.kappa && rec.reward <= 0.0);
        }
    }

    #[test]
    fn identical_seed_streams_give_identical_records() {
        let cfg = small_config();
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let mut e1 = RisEnv::new(cfg.clone(), &mut r1).unwrap();
        let mut e2 = RisEnv::new(cfg, &mut r2).unwrap();
        let action = vec![1, 1, 4, 0, 0, 0, 1, 0, 0, 1, 1, 9];
        for _ in 0..3 {
            let a = e1.step(&action, &mut r1).unwrap();
            let b = e2.step(&action, &mut r2).unwrap();
            assert_eq!(a.state, b.state);
            assert_eq!(a.reward, b.reward);
            assert_eq!(a.solution.objective, b.solution.objective);
            assert_eq!(e1.state(), e2.state());
        }
    }

    #[test]
    fn step_advances_to_a_fresh_state() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut env = RisEnv::new(cfg, &mut rng).unwrap();
        let before = env.state().clone();
        let rec = env.step(&[0; 12], &mut rng).unwrap();
        assert_eq!(rec.state, before);
        assert_ne!(env.state(), &before);
    }

    #[test]
    fn evaluate_leaves_the_environment_untouched() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let env = RisEnv::new(cfg.clone(), &mut rng).unwrap();
        let held_out =
            sample_channel_set(&cfg.geometry, &cfg.links, &mut rng).unwrap();
        let before = env.state().clone();
        let rec = env.evaluate(&held_out, &[1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0]).unwrap();
        assert_eq!(env.state(), &before);
        assert_eq!(rec.state, build_state(&held_out));
    }

    #[test]
    fn no_hardware_baseline_drops_fixed_energy() {
        // Under no-RIS with the flag on, the budget constraint loses the
        // harvesting-circuit term; the objective can only improve or stay
        // equal, and here both variants must solve.
        let mut cfg = small_config();
        cfg.scheme = Scheme::NoRis;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let env = RisEnv::new(cfg.clone(), &mut rng).unwrap();
        let ch = env.channels().clone();
        let with_circuit = env.evaluate(&ch, &[]).unwrap();
        let mut bare_cfg = cfg.clone();
        bare_cfg.no_hardware_baseline = true;
        let mut rng2 = ChaCha8Rng::seed_from_u64(31);
        let bare_env = RisEnv::new(bare_cfg, &mut rng2).unwrap();
        let bare = bare_env.evaluate(&ch, &[]).unwrap();
        if with_circuit.solution.is_feasible() {
            assert!(bare.solution.is_feasible());
            assert!(bare.solution.objective <= with_circuit.solution.objective * (1.0 + 1e-9));
        }
    }

    #[test]
    fn wrong_arity_is_an_error_not_a_penalty() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut env = RisEnv::new(cfg, &mut rng).unwrap();
        let err = env.step(&[1, 0], &mut rng);
        assert!(matches!(err, Err(EnvError::InvalidAction(_))));
    }
}
