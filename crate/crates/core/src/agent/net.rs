//! Minimal dense networks with hand-rolled backpropagation.
//!
//! Both the policy and the value function are two-layer perceptrons
//! (`input → hidden` with tanh, then a linear head). The backward pass is
//! written out explicitly so it can be validated against central finite
//! differences — correctness of these gradients is a hard requirement, so
//! the implementation favors being auditable over being fast.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Orthogonal weight initialization: draw a Gaussian matrix, take the `Q`
/// factor of its QR decomposition (sign-corrected so the diagonal of `R` is
/// positive, making the draw unique), and scale by `gain`. For non-square
/// shapes the rows (or columns, whichever side is shorter) come out
/// orthonormal before scaling.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> DMatrix<f64> {
    if rows == 0 || cols == 0 {
        // Degenerate heads (schemes with nothing to choose) get an empty
        // weight block rather than a special-cased network type.
        return DMatrix::zeros(rows, cols);
    }
    let tall = rows >= cols;
    let (m, n) = if tall { (rows, cols) } else { (cols, rows) };
    let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..m {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let oriented = if tall { q } else { q.transpose() };
    oriented * gain
}

/// Two-layer perceptron `y = W2 · tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Hidden-layer weights, `hidden × input`.
    pub w1: DMatrix<f64>,
    /// Hidden-layer bias.
    pub b1: DVector<f64>,
    /// Output-layer weights, `output × hidden`.
    pub w2: DMatrix<f64>,
    /// Output-layer bias.
    pub b2: DVector<f64>,
}

/// Cached activations from one [`Dense::forward`] pass, consumed by
/// [`Dense::backward`].
#[derive(Debug, Clone)]
pub struct Forward {
    /// Post-tanh hidden activations.
    pub hidden: DVector<f64>,
    /// Network output.
    pub output: DVector<f64>,
}

/// Parameter-shaped gradient accumulator for one [`Dense`].
#[derive(Debug, Clone)]
pub struct Grads {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl Dense {
    /// Builds a network with orthogonally initialized weights (`hidden_gain`
    /// on the first layer, `output_gain` on the head) and zero biases.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: orthogonal(hidden, input, hidden_gain, rng),
            b1: DVector::zeros(hidden),
            w2: orthogonal(output, hidden, output_gain, rng),
            b2: DVector::zeros(output),
        }
    }

    /// Input dimension.
    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    /// Hidden width.
    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Output dimension.
    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    /// Forward pass, caching what the backward pass needs.
    pub fn forward(&self, x: &DVector<f64>) -> Forward {
        debug_assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let hidden = (&self.w1 * x + &self.b1).map(f64::tanh);
        let output = &self.w2 * &hidden + &self.b2;
        Forward { hidden, output }
    }

    /// Accumulates `d loss / d params` into `grads` given the upstream
    /// gradient `dy = d loss / d output` for the pass that produced `fwd`
    /// from `x`. Gradients add up across calls, which is how minibatch
    /// averages are assembled (scale once at the end).
    pub fn backward(&self, x: &DVector<f64>, fwd: &Forward, dy: &DVector<f64>, grads: &mut Grads) {
        debug_assert_eq!(dy.len(), self.output_dim(), "output gradient dimension mismatch");
        grads.w2.ger(1.0, dy, &fwd.hidden, 1.0);
        grads.b2 += dy;
        // d tanh(z) / dz = 1 − tanh²(z), and fwd.hidden stores tanh(z).
        let dh = self.w2.tr_mul(dy);
        let dz1 = dh.zip_map(&fwd.hidden, |g, h| g * (1.0 - h * h));
        grads.w1.ger(1.0, &dz1, x, 1.0);
        grads.b1 += dz1;
    }

    /// One SGD step `params ← params − lr · grads`.
    pub fn sgd_step(&mut self, grads: &Grads, lr: f64) {
        self.w1.zip_apply(&grads.w1, |p, g| *p -= lr * g);
        self.b1.axpy(-lr, &grads.b1, 1.0);
        self.w2.zip_apply(&grads.w2, |p, g| *p -= lr * g);
        self.b2.axpy(-lr, &grads.b2, 1.0);
    }

    /// True when every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite())
    }

    /// Number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Reads parameter `i` in the canonical flattening order
    /// (`w1` row-major, `b1`, `w2` row-major, `b2`). Used by gradient
    /// checks and the checkpoint writer.
    pub fn param(&self, i: usize) -> f64 {
        *self.param_slot(i)
    }

    /// Mutable access to parameter `i` in canonical order.
    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        let (c1, cb1, c2) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < c1 {
            let cols = self.w1.ncols();
            &mut self.w1[(i / cols, i % cols)]
        } else if i < c1 + cb1 {
            &mut self.b1[i - c1]
        } else if i < c1 + cb1 + c2 {
            let k = i - c1 - cb1;
            let cols = self.w2.ncols();
            &mut self.w2[(k / cols, k % cols)]
        } else {
            &mut self.b2[i - c1 - cb1 - c2]
        }
    }

    fn param_slot(&self, i: usize) -> &f64 {
        let (c1, cb1, c2) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < c1 {
            let cols = self.w1.ncols();
            &self.w1[(i / cols, i % cols)]
        } else if i < c1 + cb1 {
            &self.b1[i - c1]
        } else if i < c1 + cb1 + c2 {
            let k = i - c1 - cb1;
            let cols = self.w2.ncols();
            &self.w2[(k / cols, k % cols)]
        } else {
            &self.b2[i - c1 - cb1 - c2]
        }
    }
}

impl Grads {
    /// Zero gradients shaped like `net`.
    pub fn zeros_like(net: &Dense) -> Self {
        Self {
            w1: DMatrix::zeros(net.w1.nrows(), net.w1.ncols()),
            b1: DVector::zeros(net.b1.len()),
            w2: DMatrix::zeros(net.w2.nrows(), net.w2.ncols()),
            b2: DVector::zeros(net.b2.len()),
        }
    }

    /// Resets every entry to zero in place.
    pub fn clear(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2.fill(0.0);
    }

    /// Multiplies every entry by `factor` (used to turn sums into means).
    pub fn scale(&mut self, factor: f64) {
        self.w1 *= factor;
        self.b1 *= factor;
        self.w2 *= factor;
        self.b2 *= factor;
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite())
    }

    /// Gradient entry `i` in the same canonical order as [`Dense::param`].
    pub fn entry(&self, i: usize) -> f64 {
        let (c1, cb1, c2) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < c1 {
            let cols = self.w1.ncols();
            self.w1[(i / cols, i % cols)]
        } else if i < c1 + cb1 {
            self.b1[i - c1]
        } else if i < c1 + cb1 + c2 {
            let k = i - c1 - cb1;
            let cols = self.w2.ncols();
            self.w2[(k / cols, k % cols)]
        } else {
            self.b2[i - c1 - cb1 - c2]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Tall: columns orthonormal, so WᵀW = gain²·I.
        let w = orthogonal(32, 7, 2.0, &mut rng);
        let gram = w.tr_mul(&w);
        for i in 0..7 {
            for j in 0..7 {
                let want = if i == j { 4.0 } else { 0.0 };
                assert!(
                    (gram[(i, j)] - want).abs() < 1e-10,
                    "gram[{i},{j}] = {} (want {want})",
                    gram[(i, j)]
                );
            }
        }
        // Wide: rows orthonormal, so WWᵀ = gain²·I.
        let w = orthogonal(5, 24, 0.5, &mut rng);
        let gram = &w * w.transpose();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 0.25 } else { 0.0 };
                assert!(
                    (gram[(i, j)] - want).abs() < 1e-10,
                    "gram[{i},{j}] = {} (want {want})",
                    gram[(i, j)]
                );
            }
        }
    }

    #[test]
    fn param_indexing_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Dense::new(3, 4, 2, 1.0, 1.0, &mut rng);
        let count = net.param_count();
        assert_eq!(count, 4 * 3 + 4 + 2 * 4 + 2);
        for i in 0..count {
            *net.param_mut(i) = i as f64;
        }
        for i in 0..count {
            assert_eq!(net.param(i), i as f64, "slot {i}");
        }
        // Spot-check the canonical order: w1 is row-major first.
        assert_eq!(net.w1[(0, 0)], 0.0);
        assert_eq!(net.w1[(0, 2)], 2.0);
        assert_eq!(net.w1[(1, 0)], 3.0);
        assert_eq!(net.b1[0], 12.0);
        assert_eq!(net.w2[(0, 0)], 16.0);
        assert_eq!(net.b2[1], 25.0);
    }

    /// Central-difference check of the raw layer backward pass through a
    /// random linear readout loss `L = c · y`.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Dense::new(4, 6, 3, 1.4, 0.7, &mut rng);
        let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let c = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));

        let mut grads = Grads::zeros_like(&net);
        let fwd = net.forward(&x);
        net.backward(&x, &fwd, &c, &mut grads);

        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..net.param_count() {
            let mut plus = net.clone();
            *plus.param_mut(i) += h;
            let mut minus = net.clone();
            *minus.param_mut(i) -= h;
            let fd = (c.dot(&plus.forward(&x).output) - c.dot(&minus.forward(&x).output)) / (2.0 * h);
            let analytic = grads.entry(i);
            let rel = (analytic - fd).abs() / fd.abs().max(analytic.abs()).max(1e-8);
            worst = worst.max(rel);
            assert!(rel < 1e-4, "param {i}: analytic {analytic} vs fd {fd} (rel {rel:.3e})");
        }
        assert!(worst < 1e-5, "worst relative error {worst:.3e} unexpectedly large");
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Dense::new(3, 5, 2, 1.0, 1.0, &mut rng);
        let x1 = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let x2 = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let dy = DVector::from_element(2, 1.0);

        let mut separate = Grads::zeros_like(&net);
        let f1 = net.forward(&x1);
        net.backward(&x1, &f1, &dy, &mut separate);
        let g1 = separate.clone();
        separate.clear();
        let f2 = net.forward(&x2);
        net.backward(&x2, &f2, &dy, &mut separate);

        let mut together = Grads::zeros_like(&net);
        net.backward(&x1, &f1, &dy, &mut together);
        net.backward(&x2, &f2, &dy, &mut together);

        for i in 0..net.param_count() {
            let sum = g1.entry(i) + separate.entry(i);
            assert!(
                (together.entry(i) - sum).abs() < 1e-12,
                "accumulation mismatch at {i}"
            );
        }
    }

    #[test]
    fn sgd_step_moves_against_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Dense::new(2, 3, 1, 1.0, 1.0, &mut rng);
        let before = net.w1[(0, 0)];
        let mut grads = Grads::zeros_like(&net);
        grads.w1[(0, 0)] = 2.0;
        net.sgd_step(&grads, 0.1);
        assert!((net.w1[(0, 0)] - (before - 0.2)).abs() < 1e-15);
    }
}
