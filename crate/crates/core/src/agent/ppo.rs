//! Clipped-surrogate policy optimization over factored categorical heads.
//!
//! One update consumes a finalized [`Trajectory`] (states, actions, old
//! log-probabilities, rewards, values, advantages, targets) and performs
//! several shuffled minibatch passes of plain SGD. The actor minimizes
//! `−(min(ratio·Â, clip(ratio)·Â) + c₂·H)`; the critic minimizes the
//! squared error against the return target. Per-sample gradient routines
//! are exposed to the tests so the analytic backward pass can be compared
//! against central finite differences.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;

use super::net::Grads;
use super::policy::{head_entropy, PolicyNet, ValueNet};
use super::AgentError;

/// Hyperparameters of one PPO update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    /// Clip half-width `ε` of the surrogate ratio window `[1−ε, 1+ε]`.
    pub clip_epsilon: f64,
    /// Entropy bonus coefficient `c₂`.
    pub entropy_coeff: f64,
    /// Actor SGD learning rate.
    pub actor_lr: f64,
    /// Critic SGD learning rate.
    pub critic_lr: f64,
    /// Discount factor `γ` (0 makes each step an independent bandit round).
    pub gamma: f64,
    /// GAE decay `λ` (irrelevant when `γ = 0`).
    pub gae_lambda: f64,
    /// Full passes over the buffer per update.
    pub epochs: usize,
    /// Minibatch size (the tail may be smaller).
    pub minibatch: usize,
    /// Normalize advantages to zero mean / unit variance per minibatch.
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            entropy_coeff: 1e-4,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            gamma: 0.0,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch: 128,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    /// Checks ranges; returns a message naming the offending field.
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::BadConfig(msg));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad(format!("clip_epsilon must lie in (0, 1), got {}", self.clip_epsilon));
        }
        if !(self.entropy_coeff >= 0.0 && self.entropy_coeff.is_finite()) {
            return bad(format!("entropy_coeff must be >= 0, got {}", self.entropy_coeff));
        }
        if !(self.actor_lr >= 0.0 && self.actor_lr.is_finite())
            || !(self.critic_lr >= 0.0 && self.critic_lr.is_finite())
        {
            return bad("learning rates must be finite and >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.minibatch == 0 {
            return bad("minibatch must be >= 1".into());
        }
        Ok(())
    }
}

/// The clip function: `ratio` clamped to `[1−ε, 1+ε]`.
pub fn clip(ratio: f64, epsilon: f64) -> f64 {
    ratio.clamp(1.0 - epsilon, 1.0 + epsilon)
}

/// Generalized advantage estimation over one finished trajectory:
/// `Â_t = Σ_l (γλ)^l δ_{t+l}` with `δ_t = r_t + γ·v_{t+1} − v_t` and the
/// post-trajectory value taken as 0. With `γ = 0` this reduces exactly to
/// `Â_t = r_t − v_t`.
pub fn gae_advantages(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(
        rewards.len(),
        values.len(),
        "rewards and values must cover the same steps"
    );
    let steps = rewards.len();
    let mut advantages = vec![0.0; steps];
    let mut running = 0.0;
    for t in (0..steps).rev() {
        let next_value = if t + 1 < steps { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        advantages[t] = running;
    }
    advantages
}

/// One collected buffer of experience, stored column-wise.
///
/// `advantages` and `targets` are empty until [`Trajectory::finalize`]
/// runs; [`ppo_update`] refuses unfinalized buffers.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// Normalized state vectors as fed to the networks.
    pub states: Vec<DVector<f64>>,
    /// Composite actions (one index per head).
    pub actions: Vec<Vec<usize>>,
    /// Joint log-probabilities recorded at collection time.
    pub log_probs: Vec<f64>,
    /// Rewards.
    pub rewards: Vec<f64>,
    /// Value estimates recorded at collection time.
    pub values: Vec<f64>,
    /// GAE advantages (filled by `finalize`).
    pub advantages: Vec<f64>,
    /// Critic regression targets `Â_t + v_t` (filled by `finalize`).
    pub targets: Vec<f64>,
}

impl Trajectory {
    /// Empty buffer.
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of collected steps.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// True when nothing has been collected.
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Appends one step (invalidates any previous `finalize`).
    pub fn push(
        &mut self,
        state: DVector<f64>,
        action: Vec<usize>,
        log_prob: f64,
        reward: f64,
        value: f64,
    ) {
        self.states.push(state);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.advantages.clear();
        self.targets.clear();
    }

    /// Computes advantages and critic targets for the collected steps.
    pub fn finalize(&mut self, gamma: f64, lambda: f64) {
        self.advantages = gae_advantages(&self.rewards, &self.values, gamma, lambda);
        self.targets = self
            .advantages
            .iter()
            .zip(&self.values)
            .map(|(adv, v)| adv + v)
            .collect();
    }

    /// Drops every step, keeping capacity.
    pub fn clear(&mut self) {
        self.states.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.advantages.clear();
        self.targets.clear();
    }

    fn validate(&self, policy: &PolicyNet, value: &ValueNet) -> Result<(), AgentError> {
        if self.is_empty() {
            return Err(AgentError::BadBatch("empty trajectory".into()));
        }
        if self.advantages.len() != self.len() || self.targets.len() != self.len() {
            return Err(AgentError::BadBatch(
                "trajectory not finalized: call finalize(gamma, lambda) first".into(),
            ));
        }
        for i in 0..self.len() {
            if self.states[i].len() != policy.net.input_dim()
                || self.states[i].len() != value.net.input_dim()
            {
                return Err(AgentError::BadBatch(format!(
                    "step {i}: state dimension {} does not match the networks",
                    self.states[i].len()
                )));
            }
            if !self.states[i].iter().all(|v| v.is_finite()) {
                return Err(AgentError::BadBatch(format!("step {i}: non-finite state entry")));
            }
            policy.layout().validate_action(&self.actions[i])?;
            let scalars =
                [self.log_probs[i], self.rewards[i], self.values[i], self.advantages[i], self.targets[i]];
            if !scalars.iter().all(|v| v.is_finite()) {
                return Err(AgentError::BadBatch(format!(
                    "step {i}: non-finite log-prob/reward/value/advantage/target"
                )));
            }
        }
        Ok(())
    }
}

/// Aggregate statistics of one [`ppo_update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Mean importance ratio over every processed sample.
    pub mean_ratio: f64,
    /// Fraction of processed samples with `|ratio − 1| > ε`.
    pub clip_fraction: f64,
    /// Mean joint policy entropy (nats).
    pub mean_entropy: f64,
    /// Mean squared critic error.
    pub critic_loss: f64,
    /// Samples processed (buffer length × epochs).
    pub samples: usize,
}

/// Per-sample contribution summary from the actor gradient routine.
pub(crate) struct SampleStats {
    pub ratio: f64,
    pub entropy: f64,
    pub clipped: bool,
}

/// Accumulates into `grads` the gradient of the per-sample actor loss
/// `−(min(ratio·Â, clip(ratio)·Â) + c₂·H)` and returns its value together
/// with the sample statistics.
///
/// Head gradients: `∂logπ/∂z_k = 1{k = chosen} − p_k` and
/// `∂H/∂z_k = −p_k·(ln p_k + H_head)`; the surrogate contributes
/// `ratio·Â` through `logπ` only on the unclipped branch.
pub(crate) fn actor_grad_sample(
    policy: &PolicyNet,
    state: &DVector<f64>,
    action: &[usize],
    log_prob_old: f64,
    advantage: f64,
    cfg: &PpoConfig,
    grads: &mut Grads,
) -> Result<(f64, SampleStats), AgentError> {
    let eval = policy.evaluate(state)?;
    let log_prob_new = policy.log_prob(&eval, action)?;
    let ratio = (log_prob_new - log_prob_old).exp();
    let unclipped = ratio * advantage;
    let clipped = clip(ratio, cfg.clip_epsilon) * advantage;
    let surrogate = unclipped.min(clipped);
    // On the clipped branch the contribution is constant in the parameters.
    let dsurr_dlogp = if unclipped <= clipped { ratio * advantage } else { 0.0 };

    let layout = policy.layout();
    let mut entropy = 0.0;
    let mut dloss = DVector::zeros(layout.logits_dim());
    for (h, &chosen) in action.iter().enumerate() {
        let range = layout.range(h);
        let p = eval.head(layout, h);
        let h_head = head_entropy(p);
        entropy += h_head;
        for (off, &pk) in p.iter().enumerate() {
            let indicator = if off == chosen { 1.0 } else { 0.0 };
            let dlogp_dz = indicator - pk;
            let dh_dz = if pk > 0.0 { -pk * (pk.ln() + h_head) } else { 0.0 };
            dloss[range.start + off] = -(dsurr_dlogp * dlogp_dz + cfg.entropy_coeff * dh_dz);
        }
    }
    policy.net.backward(state, &eval.fwd, &dloss, grads);

    let loss = -(surrogate + cfg.entropy_coeff * entropy);
    let clipped_sample = (ratio - 1.0).abs() > cfg.clip_epsilon;
    Ok((loss, SampleStats { ratio, entropy, clipped: clipped_sample }))
}

/// Accumulates into `grads` the gradient of the per-sample critic loss
/// `(v(s) − target)²` and returns the loss value.
pub(crate) fn critic_grad_sample(
    value: &ValueNet,
    state: &DVector<f64>,
    target: f64,
    grads: &mut Grads,
) -> Result<f64, AgentError> {
    let (v, fwd) = value.evaluate(state)?;
    let err = v - target;
    let dv = DVector::from_element(1, 2.0 * err);
    value.net.backward(state, &fwd, &dv, grads);
    Ok(err * err)
}

/// Runs one PPO update over a finalized trajectory: `cfg.epochs` shuffled
/// passes in minibatches of `cfg.minibatch`, SGD steps on both networks.
///
/// A non-finite gradient (for example an overflowing importance ratio)
/// aborts the update: both networks are restored to their entry state and
/// the error names the offending quantity.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyNet,
    value: &mut ValueNet,
    trajectory: &Trajectory,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<Diagnostics, AgentError> {
    cfg.validate()?;
    trajectory.validate(policy, value)?;

    let policy_backup = policy.net.clone();
    let value_backup = value.net.clone();

    let mut actor_grads = Grads::zeros_like(&policy.net);
    let mut critic_grads = Grads::zeros_like(&value.net);
    let mut sum_ratio = 0.0;
    let mut sum_entropy = 0.0;
    let mut sum_critic_loss = 0.0;
    let mut clipped_count = 0usize;
    let mut samples = 0usize;

    let mut indices: Vec<usize> = (0..trajectory.len()).collect();
    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.minibatch) {
            // Per-minibatch advantage normalization (population variance).
            let (shift, scale) = if cfg.normalize_advantages {
                let mean = chunk.iter().map(|&i| trajectory.advantages[i]).sum::<f64>()
                    / chunk.len() as f64;
                let var = chunk
                    .iter()
                    .map(|&i| (trajectory.advantages[i] - mean).powi(2))
                    .sum::<f64>()
                    / chunk.len() as f64;
                (mean, var.sqrt() + 1e-8)
            } else {
                (0.0, 1.0)
            };

            actor_grads.clear();
            critic_grads.clear();
            for &i in chunk {
                let advantage = (trajectory.advantages[i] - shift) / scale;
                let (_, stats) = actor_grad_sample(
                    policy,
                    &trajectory.states[i],
                    &trajectory.actions[i],
                    trajectory.log_probs[i],
                    advantage,
                    cfg,
                    &mut actor_grads,
                )?;
                sum_critic_loss += critic_grad_sample(
                    value,
                    &trajectory.states[i],
                    trajectory.targets[i],
                    &mut critic_grads,
                )?;
                sum_ratio += stats.ratio;
                sum_entropy += stats.entropy;
                clipped_count += stats.clipped as usize;
                samples += 1;
            }
            let inv = 1.0 / chunk.len() as f64;
            actor_grads.scale(inv);
            critic_grads.scale(inv);
            if !actor_grads.is_finite() {
                policy.net = policy_backup;
                value.net = value_backup;
                return Err(AgentError::NonFinite { what: "actor gradient" });
            }
            if !critic_grads.is_finite() {
                policy.net = policy_backup;
                value.net = value_backup;
                return Err(AgentError::NonFinite { what: "critic gradient" });
            }
            policy.net.sgd_step(&actor_grads, cfg.actor_lr);
            value.net.sgd_step(&critic_grads, cfg.critic_lr);
        }
    }

    let denom = samples as f64;
    Ok(Diagnostics {
        mean_ratio: sum_ratio / denom,
        clip_fraction: clipped_count as f64 / denom,
        mean_entropy: sum_entropy / denom,
        critic_loss: sum_critic_loss / denom,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::policy::ActionLayout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clip_matches_piecewise_definition() {
        assert_eq!(clip(1.5, 0.2), 1.2);
        assert_eq!(clip(0.7, 0.2), 0.8);
        assert_eq!(clip(1.0, 0.2), 1.0);
        assert_eq!(clip(1.19, 0.2), 1.19);
    }

    #[test]
    fn gae_collapses_exactly_at_zero_gamma() {
        let rewards = [2.0, -0.3, 1.7, 0.0];
        let values = [0.5, 0.1, -2.0, 3.25];
        let adv = gae_advantages(&rewards, &values, 0.0, 0.95);
        for t in 0..rewards.len() {
            assert_eq!(adv[t], rewards[t] - values[t], "step {t} must be exactly r - v");
        }
        assert_eq!(adv[0], 1.5, "r=2, v=0.5 must give advantage 1.5");
    }

    #[test]
    fn gae_zero_gamma_ignores_future_steps() {
        let adv_short = gae_advantages(&[1.0], &[0.25], 0.0, 0.95);
        let adv_long = gae_advantages(&[1.0, 100.0, -50.0], &[0.25, 1.0, 2.0], 0.0, 0.95);
        assert_eq!(adv_short[0], adv_long[0]);
    }

    /// Direct-summation oracle for the discounted case: with two steps,
    /// `Â₀ = δ₀ + (γλ)·δ₁` and `Â₁ = δ₁`, where `δ₀ = r₀ + γ·v₁ − v₀` and
    /// `δ₁ = r₁ − v₁` (no value after the final step).
    #[test]
    fn gae_two_step_hand_oracle() {
        let (r0, r1) = (1.0, -2.0);
        let (v0, v1) = (0.3, 0.8);
        let gamma = 0.9;

        let d0 = r0 + gamma * v1 - v0;
        let d1 = r1 - v1;
        let adv = gae_advantages(&[r0, r1], &[v0, v1], gamma, 1.0);
        assert!((adv[0] - (d0 + gamma * d1)).abs() < 1e-15);
        assert!((adv[1] - d1).abs() < 1e-15);

        let adv_half = gae_advantages(&[r0, r1], &[v0, v1], gamma, 0.5);
        assert!((adv_half[0] - (d0 + gamma * 0.5 * d1)).abs() < 1e-15);
    }

    fn tiny_policy(rng: &mut ChaCha8Rng) -> PolicyNet {
        PolicyNet::new(4, 8, ActionLayout::hybrid(2), rng)
    }

    /// Replaces the near-uniform initialization with O(1) random weights.
    /// At the uniform point the entropy gradient vanishes identically, so a
    /// freshly initialized policy (head gain 0.01) would reduce the
    /// finite-difference comparison to noise against noise; a random
    /// network keeps every gradient well above the FD noise floor.
    fn randomize(net: &mut crate::agent::Dense, rng: &mut ChaCha8Rng) {
        for i in 0..net.param_count() {
            *net.param_mut(i) = rng.random_range(-1.0..1.0);
        }
    }

    /// Fourth-order central difference `(f(−2h) − 8f(−h) + 8f(h) − f(2h)) /
    /// (12h)`. The O(h⁴) truncation lets `h` be large enough that the
    /// floating-point roundoff floor (`≈ ε·|f|/h`) sits well below the
    /// smallest gradient components under test.
    fn fd4(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
        (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
    }

    /// Mirrors the per-sample actor loss for the finite-difference checks.
    fn actor_loss_value(
        policy: &PolicyNet,
        state: &DVector<f64>,
        action: &[usize],
        log_prob_old: f64,
        advantage: f64,
        cfg: &PpoConfig,
    ) -> f64 {
        let eval = policy.evaluate(state).unwrap();
        let log_prob_new = policy.log_prob(&eval, action).unwrap();
        let ratio = (log_prob_new - log_prob_old).exp();
        let surrogate = (ratio * advantage).min(clip(ratio, cfg.clip_epsilon) * advantage);
        -(surrogate + cfg.entropy_coeff * policy.entropy(&eval))
    }

    /// Shared FD loop: checks the analytic actor gradient at `points`
    /// random samples and returns the worst relative error.
    fn actor_fd_worst(cfg: &PpoConfig, points: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = tiny_policy(&mut rng);
        randomize(&mut policy.net, &mut rng);
        let mut worst = 0.0f64;
        for _ in 0..points {
            let state = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let eval = policy.evaluate(&state).unwrap();
            let (action, log_prob) = policy.sample(&eval, &mut rng);
            // Synthetic old log-prob puts the ratio off 1 so both surrogate
            // branches get exercised; redraw when the ratio parks within
            // 1e-2 of a clip boundary, where the finite difference would
            // straddle the kink.
            let (log_prob_old, advantage) = loop {
                let offset: f64 = rng.random_range(-0.5..0.5);
                let adv: f64 = rng.random_range(-2.0..2.0);
                let ratio = offset.exp();
                let dist = (ratio - (1.0 - cfg.clip_epsilon))
                    .abs()
                    .min((ratio - (1.0 + cfg.clip_epsilon)).abs());
                if dist > 1e-2 {
                    break (log_prob - offset, adv);
                }
            };

            let mut grads = Grads::zeros_like(&policy.net);
            actor_grad_sample(&policy, &state, &action, log_prob_old, advantage, cfg, &mut grads)
                .unwrap();

            for i in 0..policy.net.param_count() {
                let base = policy.net.param(i);
                let fd = fd4(
                    |d| {
                        let mut p = policy.clone();
                        *p.net.param_mut(i) = base + d;
                        actor_loss_value(&p, &state, &action, log_prob_old, advantage, cfg)
                    },
                    1e-4,
                );
                let analytic = grads.entry(i);
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn actor_surrogate_gradient_matches_finite_differences() {
        let cfg = PpoConfig { entropy_coeff: 0.0, ..PpoConfig::default() };
        let worst = actor_fd_worst(&cfg, 20, 21);
        assert!(worst < 1e-4, "worst surrogate gradient error {worst:.3e}");
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        // Zero advantage kills the surrogate term; c₂ = 1 leaves pure
        // entropy. The loop's advantage draw is overridden below.
        let cfg = PpoConfig { entropy_coeff: 1.0, ..PpoConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut policy = tiny_policy(&mut rng);
        randomize(&mut policy.net, &mut rng);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let state = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let eval = policy.evaluate(&state).unwrap();
            let (action, log_prob) = policy.sample(&eval, &mut rng);

            let mut grads = Grads::zeros_like(&policy.net);
            actor_grad_sample(&policy, &state, &action, log_prob, 0.0, &cfg, &mut grads).unwrap();

            for i in 0..policy.net.param_count() {
                let base = policy.net.param(i);
                let fd = fd4(
                    |d| {
                        let mut p = policy.clone();
                        *p.net.param_mut(i) = base + d;
                        actor_loss_value(&p, &state, &action, log_prob, 0.0, &cfg)
                    },
                    1e-4,
                );
                let analytic = grads.entry(i);
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst entropy gradient error {worst:.3e}");
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut value = ValueNet::new(4, 8, &mut rng);
        randomize(&mut value.net, &mut rng);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let state = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let target: f64 = rng.random_range(-3.0..3.0);
            let mut grads = Grads::zeros_like(&value.net);
            critic_grad_sample(&value, &state, target, &mut grads).unwrap();
            for i in 0..value.net.param_count() {
                let base = value.net.param(i);
                let fd = fd4(
                    |d| {
                        let mut v = value.clone();
                        *v.net.param_mut(i) = base + d;
                        let (est, _) = v.evaluate(&state).unwrap();
                        (est - target) * (est - target)
                    },
                    1e-4,
                );
                let analytic = grads.entry(i);
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst critic gradient error {worst:.3e}");
    }

    fn collect_traj(
        policy: &PolicyNet,
        value: &ValueNet,
        steps: usize,
        rng: &mut ChaCha8Rng,
        reward_of: impl Fn(&[usize]) -> f64,
    ) -> Trajectory {
        let mut traj = Trajectory::new();
        for _ in 0..steps {
            let state = DVector::from_fn(policy.net.input_dim(), |_, _| rng.random_range(-1.0..1.0));
            let eval = policy.evaluate(&state).unwrap();
            let (action, log_prob) = policy.sample(&eval, rng);
            let (v, _) = value.evaluate(&state).unwrap();
            let reward = reward_of(&action);
            traj.push(state, action, log_prob, reward, v);
        }
        traj.finalize(0.0, 0.95);
        traj
    }

    #[test]
    fn unchanged_policy_has_unit_ratio_and_no_clipping() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut policy = tiny_policy(&mut rng);
        let mut value = ValueNet::new(4, 8, &mut rng);
        let traj = collect_traj(&policy, &value, 64, &mut rng, |_| 1.0);
        // Zero learning rates freeze the parameters, so every epoch
        // re-evaluates the collection-time policy: the ratio is exactly 1.
        let cfg = PpoConfig { actor_lr: 0.0, critic_lr: 0.0, ..PpoConfig::default() };
        let diag = ppo_update(&mut policy, &mut value, &traj, &cfg, &mut rng).unwrap();
        assert_eq!(diag.samples, 64 * cfg.epochs);
        assert!((diag.mean_ratio - 1.0).abs() < 1e-12, "mean ratio {}", diag.mean_ratio);
        assert_eq!(diag.clip_fraction, 0.0);
    }

    #[test]
    fn update_shifts_probability_toward_rewarded_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let layout = ActionLayout::new(vec![2]);
        let mut policy = PolicyNet::new(3, 8, layout, &mut rng);
        let mut value = ValueNet::new(3, 8, &mut rng);
        let probe = DVector::from_element(3, 0.25);
        let before = policy.evaluate(&probe).unwrap().head(policy.layout(), 0)[0];

        let cfg = PpoConfig {
            actor_lr: 0.05,
            critic_lr: 0.05,
            minibatch: 32,
            ..PpoConfig::default()
        };
        for _ in 0..10 {
            let traj = collect_traj(&policy, &value, 64, &mut rng, |a| {
                if a[0] == 0 {
                    1.0
                } else {
                    -1.0
                }
            });
            ppo_update(&mut policy, &mut value, &traj, &cfg, &mut rng).unwrap();
        }
        let after = policy.evaluate(&probe).unwrap().head(policy.layout(), 0)[0];
        assert!(
            after > before + 0.1,
            "P(rewarded action) should grow: before {before:.4}, after {after:.4}"
        );
    }

    #[test]
    fn update_is_deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let policy0 = tiny_policy(&mut rng);
        let value0 = ValueNet::new(4, 8, &mut rng);
        let traj = collect_traj(&policy0, &value0, 96, &mut rng, |a| a[0] as f64 - 0.5);
        let cfg = PpoConfig { minibatch: 32, ..PpoConfig::default() };

        let run = |seed: u64| {
            let mut p = policy0.clone();
            let mut v = value0.clone();
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let d = ppo_update(&mut p, &mut v, &traj, &cfg, &mut r).unwrap();
            (p, v, d)
        };
        let (p1, v1, d1) = run(7);
        let (p2, v2, d2) = run(7);
        assert_eq!(d1, d2);
        assert_eq!(p1.net, p2.net);
        assert_eq!(v1.net, v2.net);
    }

    #[test]
    fn constant_advantages_normalize_to_zero_actor_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut policy = tiny_policy(&mut rng);
        let mut value = ValueNet::new(4, 8, &mut rng);
        // Identical rewards and a frozen critic make every advantage equal,
        // so per-minibatch normalization zeroes them; with no entropy bonus
        // the actor must not move at all.
        for i in 0..value.net.param_count() {
            *value.net.param_mut(i) = 0.0;
        }
        let traj = collect_traj(&policy, &value, 64, &mut rng, |_| -3.0);
        let before = policy.net.clone();
        let cfg = PpoConfig {
            entropy_coeff: 0.0,
            critic_lr: 0.0,
            actor_lr: 0.1,
            ..PpoConfig::default()
        };
        ppo_update(&mut policy, &mut value, &traj, &cfg, &mut rng).unwrap();
        for i in 0..policy.net.param_count() {
            assert!(
                (policy.net.param(i) - before.param(i)).abs() < 1e-12,
                "actor parameter {i} moved on constant advantages"
            );
        }
    }

    #[test]
    fn non_finite_batch_is_rejected_before_any_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let mut policy = tiny_policy(&mut rng);
        let mut value = ValueNet::new(4, 8, &mut rng);
        let mut traj = collect_traj(&policy, &value, 8, &mut rng, |_| 1.0);
        traj.advantages[3] = f64::NAN;
        let before = policy.net.clone();
        let err = ppo_update(&mut policy, &mut value, &traj, &PpoConfig::default(), &mut rng)
            .unwrap_err();
        assert!(matches!(err, AgentError::BadBatch(_)), "got {err:?}");
        assert_eq!(policy.net, before, "parameters must be untouched after a rejected batch");
    }

    #[test]
    fn unfinalized_trajectory_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let mut policy = tiny_policy(&mut rng);
        let mut value = ValueNet::new(4, 8, &mut rng);
        let mut traj = collect_traj(&policy, &value, 8, &mut rng, |_| 1.0);
        traj.push(
            DVector::zeros(4),
            vec![0, 0, 0, 0, 0, 0],
            -1.0,
            0.5,
            0.0,
        );
        let err = ppo_update(&mut policy, &mut value, &traj, &PpoConfig::default(), &mut rng)
            .unwrap_err();
        assert!(matches!(err, AgentError::BadBatch(_)));
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = PpoConfig { clip_epsilon: 0.0, ..PpoConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = PpoConfig { gamma: 1.5, ..PpoConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = PpoConfig { minibatch: 0, ..PpoConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
