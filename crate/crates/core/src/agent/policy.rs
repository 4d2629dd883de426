//! Factored categorical policy and scalar value function.
//!
//! The composite action is a tuple of independent categorical choices
//! ("heads"). A single dense network emits every head's logits in one
//! output vector; [`ActionLayout`] records how that vector is carved into
//! heads. Joint log-probabilities and entropies are sums over heads, which
//! is what shrinks the output layer from the product of the per-element
//! spaces to their sum.

use nalgebra::DVector;
use rand::Rng;

use super::net::{Dense, Forward};
use super::AgentError;

/// Number of amplification buckets in the quantized `ρ̂` head.
pub const RHO_BUCKETS: usize = 10;

/// Sizes and flat offsets of the categorical heads in the logits vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl ActionLayout {
    /// Builds a layout from per-head cardinalities (each must be ≥ 1).
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.iter().all(|&s| s >= 1), "every head needs at least one choice");
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in &sizes {
            offsets.push(total);
            total += s;
        }
        Self { sizes, offsets, total }
    }

    /// The full per-element layout: `(β, α, ρ̂)` heads of sizes
    /// `(2, 2, 10)` for each of `n_elements` elements — `14·N` logits.
    pub fn hybrid(n_elements: usize) -> Self {
        let mut sizes = Vec::with_capacity(3 * n_elements);
        for _ in 0..n_elements {
            sizes.extend_from_slice(&[2, 2, RHO_BUCKETS]);
        }
        Self::new(sizes)
    }

    /// Number of heads.
    pub fn num_heads(&self) -> usize {
        self.sizes.len()
    }

    /// Per-head cardinalities.
    pub fn head_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total logits dimension (sum of head sizes).
    pub fn logits_dim(&self) -> usize {
        self.total
    }

    /// Flat range of head `h` inside the logits vector.
    pub fn range(&self, h: usize) -> std::ops::Range<usize> {
        self.offsets[h]..self.offsets[h] + self.sizes[h]
    }

    /// Checks that `action` has one in-range index per head.
    pub fn validate_action(&self, action: &[usize]) -> Result<(), AgentError> {
        if action.len() != self.num_heads() {
            return Err(AgentError::BadAction(format!(
                "expected {} head indices, got {}",
                self.num_heads(),
                action.len()
            )));
        }
        for (h, (&idx, &size)) in action.iter().zip(&self.sizes).enumerate() {
            if idx >= size {
                return Err(AgentError::BadAction(format!(
                    "head {h} index {idx} out of range 0..{size}"
                )));
            }
        }
        Ok(())
    }
}

/// One evaluated state: cached activations plus per-head probabilities.
///
/// `probs` is the logits vector with a stable softmax applied within each
/// head's range, so every head slice sums to 1.
#[derive(Debug, Clone)]
pub struct PolicyEval {
    /// Activations cached for the backward pass.
    pub fwd: Forward,
    /// Flattened per-head probabilities.
    pub probs: DVector<f64>,
}

impl PolicyEval {
    /// Probabilities of head `h`.
    pub fn head(&self, layout: &ActionLayout, h: usize) -> &[f64] {
        &self.probs.as_slice()[layout.range(h)]
    }
}

/// Policy network: dense net emitting factored categorical logits.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    /// Underlying two-layer network (`output_dim == layout.logits_dim()`).
    pub net: Dense,
    layout: ActionLayout,
}

impl PolicyNet {
    /// Orthogonal-initialized policy: gain `√2` on the hidden layer and a
    /// small `0.01` on the head so the initial policy is near-uniform.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        layout: ActionLayout,
        rng: &mut R,
    ) -> Self {
        let net = Dense::new(
            input_dim,
            hidden_dim,
            layout.logits_dim(),
            std::f64::consts::SQRT_2,
            0.01,
            rng,
        );
        Self { net, layout }
    }

    /// Reassembles a policy from a deserialized network and layout,
    /// checking that the output dimension carries the layout's logits.
    pub fn from_parts(net: Dense, layout: ActionLayout) -> Result<Self, AgentError> {
        if net.output_dim() != layout.logits_dim() {
            return Err(AgentError::BadCheckpoint(format!(
                "policy output {} does not match layout logits {}",
                net.output_dim(),
                layout.logits_dim()
            )));
        }
        Ok(Self { net, layout })
    }

    /// Head layout.
    pub fn layout(&self) -> &ActionLayout {
        &self.layout
    }

    /// Forward pass producing per-head distributions.
    ///
    /// Errors when the state dimension does not match the network input.
    pub fn evaluate(&self, state: &DVector<f64>) -> Result<PolicyEval, AgentError> {
        if state.len() != self.net.input_dim() {
            return Err(AgentError::DimensionMismatch {
                expected: self.net.input_dim(),
                got: state.len(),
            });
        }
        let fwd = self.net.forward(state);
        let probs = softmax_heads(&self.layout, &fwd.output);
        Ok(PolicyEval { fwd, probs })
    }

    /// Samples every head independently; returns the per-head indices and
    /// the joint log-probability (sum of per-head log-probabilities).
    pub fn sample<R: Rng + ?Sized>(&self, eval: &PolicyEval, rng: &mut R) -> (Vec<usize>, f64) {
        let mut action = Vec::with_capacity(self.layout.num_heads());
        for h in 0..self.layout.num_heads() {
            let p = eval.head(&self.layout, h);
            let mut u: f64 = rng.random_range(0.0..1.0);
            let mut chosen = p.len() - 1;
            for (k, &pk) in p.iter().enumerate() {
                if u < pk {
                    chosen = k;
                    break;
                }
                u -= pk;
            }
            action.push(chosen);
        }
        let logp = self.log_prob(eval, &action).expect("sampled action is in range");
        (action, logp)
    }

    /// Greedy (argmax-per-head) action.
    pub fn greedy(&self, eval: &PolicyEval) -> Vec<usize> {
        (0..self.layout.num_heads())
            .map(|h| {
                let p = eval.head(&self.layout, h);
                let mut best = 0;
                for k in 1..p.len() {
                    if p[k] > p[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Joint log-probability of `action` under the evaluated distributions.
    pub fn log_prob(&self, eval: &PolicyEval, action: &[usize]) -> Result<f64, AgentError> {
        self.layout.validate_action(action)?;
        let mut logp = 0.0;
        for (h, &idx) in action.iter().enumerate() {
            logp += eval.head(&self.layout, h)[idx].ln();
        }
        Ok(logp)
    }

    /// Joint entropy: sum of per-head categorical entropies, in nats.
    pub fn entropy(&self, eval: &PolicyEval) -> f64 {
        (0..self.layout.num_heads()).map(|h| head_entropy(eval.head(&self.layout, h))).sum()
    }
}

/// Entropy of one categorical distribution in nats (`0·ln 0 = 0`).
pub fn head_entropy(p: &[f64]) -> f64 {
    p.iter().map(|&pk| if pk > 0.0 { -pk * pk.ln() } else { 0.0 }).sum()
}

/// Stable softmax applied independently within each head's range.
pub fn softmax_heads(layout: &ActionLayout, logits: &DVector<f64>) -> DVector<f64> {
    assert_eq!(logits.len(), layout.logits_dim(), "logits dimension mismatch");
    let mut probs = DVector::zeros(logits.len());
    for h in 0..layout.num_heads() {
        let range = layout.range(h);
        let z = &logits.as_slice()[range.clone()];
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (off, &zk) in z.iter().enumerate() {
            let e = (zk - max).exp();
            probs[range.start + off] = e;
            sum += e;
        }
        for off in 0..z.len() {
            probs[range.start + off] /= sum;
        }
    }
    probs
}

/// Value network: dense net with a single scalar output.
#[derive(Debug, Clone)]
pub struct ValueNet {
    /// Underlying two-layer network (`output_dim == 1`).
    pub net: Dense,
}

impl ValueNet {
    /// Orthogonal-initialized critic: gain `√2` hidden, `1.0` on the head.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        Self { net: Dense::new(input_dim, hidden_dim, 1, std::f64::consts::SQRT_2, 1.0, rng) }
    }

    /// Value estimate plus cached activations for the backward pass.
    pub fn evaluate(&self, state: &DVector<f64>) -> Result<(f64, Forward), AgentError> {
        if state.len() != self.net.input_dim() {
            return Err(AgentError::DimensionMismatch {
                expected: self.net.input_dim(),
                got: state.len(),
            });
        }
        let fwd = self.net.forward(state);
        Ok((fwd.output[0], fwd))
    }
}
