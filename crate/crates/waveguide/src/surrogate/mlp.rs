//! Dense feed-forward network with rectifier hidden layers and a linear
//! output layer, trained by mean-square error.
//!
//! Weights are plain row-major `Vec<f64>` matrices; the network is small
//! enough (tens of thousands of parameters at most) that hand-rolled loops
//! beat any heavier machinery and keep results bit-reproducible.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Feed-forward network: `sizes[0]` inputs through affine layers to
/// `sizes.last()` outputs. Hidden activations are `max(0, x)`; the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// `weights[l]` is row-major `sizes[l+1] x sizes[l]`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-layer gradient buffers shaped like the network parameters.
#[derive(Debug, Clone)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Symmetric uniform initialization scaled by fan-in; biases start at
    /// zero. Deterministic for a given RNG state.
    pub fn init<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output layers");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        (0..self.n_layers())
            .map(|l| self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1])
            .sum()
    }

    fn zero_grads(&self) -> Grads {
        Grads {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Plain forward pass.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.sizes[0]);
        let last = self.n_layers() - 1;
        let mut a = input.to_vec();
        for l in 0..=last {
            let mut next = self.affine(l, &a);
            if l != last {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            a = next;
        }
        a
    }

    fn affine(&self, l: usize, a: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.weights[l];
        let mut out = self.biases[l].clone();
        for r in 0..n_out {
            let row = &w[r * n_in..(r + 1) * n_in];
            let mut acc = 0.0;
            for i in 0..n_in {
                acc += row[i] * a[i];
            }
            out[r] += acc;
        }
        out
    }

    /// Forward pass keeping every post-activation (index 0 = input) for the
    /// backward pass.
    fn forward_recorded(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let last = self.n_layers() - 1;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        for l in 0..=last {
            let mut next = self.affine(l, acts.last().unwrap());
            if l != last {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            acts.push(next);
        }
        acts
    }

    /// Backward pass from output-layer sensitivities `seed`, accumulating
    /// into `grads` and returning nothing else. With rectifier hidden units
    /// the post-activation values determine the gating (derivative 0 at 0).
    fn backward_into(&self, acts: &[Vec<f64>], seed: &[f64], grads: &mut Grads) {
        let last = self.n_layers() - 1;
        let mut delta = seed.to_vec();
        for l in (0..=last).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a_prev = &acts[l];
            let gw = &mut grads.weights[l];
            for r in 0..n_out {
                let dr = delta[r];
                grads.biases[l][r] += dr;
                let row = &mut gw[r * n_in..(r + 1) * n_in];
                for i in 0..n_in {
                    row[i] += dr * a_prev[i];
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                let mut prev = vec![0.0; n_in];
                for r in 0..n_out {
                    let dr = delta[r];
                    let row = &w[r * n_in..(r + 1) * n_in];
                    for i in 0..n_in {
                        prev[i] += dr * row[i];
                    }
                }
                for i in 0..n_in {
                    if acts[l][i] <= 0.0 {
                        prev[i] = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }

    /// Mean-square error over a batch.
    pub fn mse(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
        let k = *self.sizes.last().unwrap();
        let mut acc = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            let y = self.forward(x);
            for j in 0..k {
                let e = y[j] - t[j];
                acc += e * e;
            }
        }
        acc / (inputs.len() * k) as f64
    }

    /// MSE and its parameter gradient over a batch (backpropagation).
    pub fn loss_and_grads(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> (f64, Grads) {
        let k = *self.sizes.last().unwrap();
        let scale = 2.0 / (inputs.len() * k) as f64;
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            let acts = self.forward_recorded(x);
            let y = acts.last().unwrap();
            let seed: Vec<f64> = (0..k)
                .map(|j| {
                    let e = y[j] - t[j];
                    loss += e * e;
                    scale * e
                })
                .collect();
            self.backward_into(&acts, &seed, &mut grads);
        }
        (loss / (inputs.len() * k) as f64, grads)
    }

    // Flat parameter indexing, used by the optimizers and the
    // finite-difference gradient check. Order: per layer, weights
    // row-major then biases.

    pub fn param(&self, idx: usize) -> f64 {
        let (l, off, is_bias) = self.locate(idx);
        if is_bias {
            self.biases[l][off]
        } else {
            self.weights[l][off]
        }
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let (l, off, is_bias) = self.locate(idx);
        if is_bias {
            &mut self.biases[l][off]
        } else {
            &mut self.weights[l][off]
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, usize, bool) {
        for l in 0..self.n_layers() {
            let nw = self.weights[l].len();
            if idx < nw {
                return (l, idx, false);
            }
            idx -= nw;
            let nb = self.biases[l].len();
            if idx < nb {
                return (l, idx, true);
            }
            idx -= nb;
        }
        panic!("parameter index out of range");
    }

    pub fn flatten_grads(&self, grads: &Grads) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in 0..self.n_layers() {
            out.extend_from_slice(&grads.weights[l]);
            out.extend_from_slice(&grads.biases[l]);
        }
        out
    }

    fn add_flat(&mut self, step: &[f64]) {
        let mut idx = 0;
        for l in 0..self.n_layers() {
            for w in &mut self.weights[l] {
                *w += step[idx];
                idx += 1;
            }
            for b in &mut self.biases[l] {
                *b += step[idx];
                idx += 1;
            }
        }
    }
}

/// Adaptive-moment mini-batch optimizer.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &Grads) {
        let g = mlp.flatten_grads(grads);
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut idx = 0;
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, gi: f64, lr: f64, b1: f64, b2: f64, eps: f64| {
            *m = b1 * *m + (1.0 - b1) * gi;
            *v = b2 * *v + (1.0 - b2) * gi * gi;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for l in 0..mlp.n_layers() {
            for w in &mut mlp.weights[l] {
                apply(w, &mut self.m[idx], &mut self.v[idx], g[idx], self.lr, self.beta1, self.beta2, self.eps);
                idx += 1;
            }
            for b in &mut mlp.biases[l] {
                apply(b, &mut self.m[idx], &mut self.v[idx], g[idx], self.lr, self.beta1, self.beta2, self.eps);
                idx += 1;
            }
        }
    }
}

/// Outcome of one adaptive Levenberg-Marquardt iteration.
pub struct LmOutcome {
    pub loss: f64,
    pub lambda: f64,
    pub accepted: bool,
}

/// Full-batch Levenberg-Marquardt step with Marquardt diagonal scaling.
///
/// Builds the normal equations `(JtJ + lambda diag(JtJ)) h = -Jtr` by
/// accumulating per-sample Jacobian rows, so memory is `O(n_params^2)`
/// regardless of the dataset size. Intended for reduced problems; callers
/// cap `n_params`.
pub fn lm_iteration(
    mlp: &mut Mlp,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    lambda_in: f64,
) -> LmOutcome {
    let p = mlp.n_params();
    let k = *mlp.sizes.last().unwrap();
    let n_res = (inputs.len() * k) as f64;
    let current_loss = mlp.mse(inputs, targets);

    let mut jtj = vec![0.0; p * p];
    let mut jtr = vec![0.0; p];
    let mut row_grads = mlp.zero_grads();
    for (x, t) in inputs.iter().zip(targets) {
        let acts = mlp.forward_recorded(x);
        let y = acts.last().unwrap().clone();
        for j in 0..k {
            for g in row_grads.weights.iter_mut().chain(row_grads.biases.iter_mut()) {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            let mut seed = vec![0.0; k];
            seed[j] = 1.0;
            mlp.backward_into(&acts, &seed, &mut row_grads);
            let row = mlp.flatten_grads(&row_grads);
            let r = y[j] - t[j];
            for a in 0..p {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                jtr[a] += ra * r;
                let base = a * p;
                for b in a..p {
                    jtj[base + b] += ra * row[b];
                }
            }
        }
    }
    // Mirror the upper triangle.
    for a in 0..p {
        for b in 0..a {
            jtj[a * p + b] = jtj[b * p + a];
        }
    }

    // Try increasing damping until a step reduces the loss.
    let mut lambda = lambda_in;
    for _ in 0..10 {
        let mut sys = jtj.clone();
        for a in 0..p {
            let diag = jtj[a * p + a].max(1e-12);
            sys[a * p + a] = jtj[a * p + a] + lambda * diag;
        }
        if let Some(chol) = cholesky(&mut sys, p) {
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let step = chol_solve(&chol, p, &rhs);
            let mut candidate = mlp.clone();
            candidate.add_flat(&step);
            let new_loss = candidate.mse(inputs, targets);
            if new_loss.is_finite() && new_loss < current_loss {
                *mlp = candidate;
                return LmOutcome {
                    loss: new_loss,
                    lambda: (lambda * 0.1).max(1e-12),
                    accepted: true,
                };
            }
        }
        lambda *= 10.0;
    }
    let _ = n_res;
    LmOutcome {
        loss: current_loss,
        lambda,
        accepted: false,
    }
}

/// In-place lower Cholesky factorization; None when not positive-definite.
fn cholesky(a: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / ljj;
        }
    }
    Some(a.to_vec())
}

fn chol_solve(l: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = rhs[i];
        for k in 0..i {
            v -= l[i * n + k] * y[k];
        }
        y[i] = v / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in i + 1..n {
            v -= l[k * n + i] * x[k];
        }
        x[i] = v / l[i * n + i];
    }
    x
}
