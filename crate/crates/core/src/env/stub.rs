//! A synthetic contextual bandit with a known optimal composite action.
//!
//! States are pure i.i.d. Gaussian context that carries no information;
//! the reward depends only on how many heads of the composite action match
//! a fixed target. This gives the agent stack a closed-loop test with a
//! certifiable optimum: a sound policy-gradient implementation must drive
//! the greedy action to the target on (almost) every state.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::EnvError;
use crate::agent::ActionLayout;

/// The stub environment: hybrid-layout action space over a small surface,
/// reward = −(number of heads that miss the target).
#[derive(Debug, Clone)]
pub struct StubBandit {
    layout: ActionLayout,
    optimal: Vec<usize>,
    state_dim: usize,
}

impl StubBandit {
    /// A stub over `n_elements` hybrid elements with the given target
    /// composite action and context dimension.
    pub fn new(
        n_elements: usize,
        state_dim: usize,
        optimal: Vec<usize>,
    ) -> Result<Self, EnvError> {
        if state_dim == 0 {
            return Err(EnvError::InvalidConfig("state_dim must be >= 1".into()));
        }
        let layout = ActionLayout::hybrid(n_elements);
        layout
            .validate_action(&optimal)
            .map_err(|e| EnvError::InvalidAction(e.to_string()))?;
        Ok(Self { layout, optimal, state_dim })
    }

    /// The two-element stub used by the agent sanity suite: six heads,
    /// a fixed interior target, six-dimensional context.
    pub fn default_n2() -> Self {
        Self::new(2, 6, vec![1, 0, 6, 0, 1, 2]).expect("fixed target is valid")
    }

    /// Action layout (hybrid heads for every element).
    pub fn layout(&self) -> &ActionLayout {
        &self.layout
    }

    /// The context dimension.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// The target composite action.
    pub fn optimal_action(&self) -> &[usize] {
        &self.optimal
    }

    /// Draws one i.i.d. standard-normal context vector.
    pub fn state<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.state_dim, |_, _| rng.sample(StandardNormal))
    }

    /// Reward of a composite action: 0 at the target, −1 per missed head.
    pub fn reward(&self, action: &[usize]) -> Result<f64, EnvError> {
        self.layout
            .validate_action(action)
            .map_err(|e| EnvError::InvalidAction(e.to_string()))?;
        let misses = action
            .iter()
            .zip(&self.optimal)
            .filter(|(a, o)| a != o)
            .count();
        Ok(-(misses as f64))
    }

    /// Whether an action hits the target exactly.
    pub fn is_optimal(&self, action: &[usize]) -> bool {
        action == self.optimal.as_slice()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reward_counts_missed_heads() {
        let stub = StubBandit::default_n2();
        assert_eq!(stub.reward(stub.optimal_action()).unwrap(), 0.0);
        let mut one_off = stub.optimal_action().to_vec();
        one_off[2] = 7;
        assert_eq!(stub.reward(&one_off).unwrap(), -1.0);
        let all_off = vec![0, 1, 0, 1, 0, 0];
        assert_eq!(stub.reward(&all_off).unwrap(), -6.0);
    }

    #[test]
    fn layout_matches_two_hybrid_elements() {
        let stub = StubBandit::default_n2();
        assert_eq!(stub.layout().num_heads(), 6);
        assert_eq!(stub.layout().logits_dim(), 28);
        assert!(stub.is_optimal(&[1, 0, 6, 0, 1, 2]));
        assert!(!stub.is_optimal(&[1, 0, 6, 0, 1, 3]));
    }

    #[test]
    fn invalid_actions_are_rejected() {
        let stub = StubBandit::default_n2();
        assert!(stub.reward(&[1, 0, 6]).is_err());
        assert!(stub.reward(&[1, 0, 10, 0, 1, 2]).is_err());
        assert!(StubBandit::new(1, 4, vec![2, 0, 0]).is_err());
        assert!(StubBandit::new(1, 0, vec![1, 0, 0]).is_err());
    }

    #[test]
    fn states_are_seeded_noise() {
        let stub = StubBandit::default_n2();
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        let sa = stub.state(&mut a);
        let sb = stub.state(&mut b);
        assert_eq!(sa, sb);
        assert_eq!(sa.len(), 6);
        assert_ne!(stub.state(&mut a), sa);
    }
}
