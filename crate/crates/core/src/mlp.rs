//! Minimal dense perceptron with softsign hidden activations and
//! hand-derived backward pass. Used for the shared density/color decoder and
//! for the per-level condition modulation heads. Output activations
//! (softplus, sigmoid) are applied by the callers, which keeps this layer
//! purely linear at the top.
//!
//! Softsign `x / (1 + |x|)` is bounded and C1-smooth like tanh but costs one
//! division instead of a libm call, which matters at tens of millions of
//! activations per training iteration.
//!
//! Weights are stored transposed, row-major (in, out): the matvec inner loop
//! then runs contiguously over the output dimension, which vectorizes. This
//! is the render hot path; the layout is internal and never serialized with
//! a meaning beyond "flat parameter array".

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    /// Layer widths, input first: `[in, h1, ..., out]`.
    pub dims: Vec<usize>,
    /// Per layer, row-major `(in, out)`: entry `(i, o)` at `i * dims[l+1] + o`.
    pub weights: Vec<Vec<F>>,
    /// Per layer, length `dims[l + 1]`.
    pub biases: Vec<Vec<F>>,
}

impl<F: Real> Mlp<F> {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let weights = (0..dims.len() - 1).map(|l| vec![F::zero(); dims[l + 1] * dims[l]]).collect();
        let biases = (0..dims.len() - 1).map(|l| vec![F::zero(); dims[l + 1]]).collect();
        Mlp { dims: dims.to_vec(), weights, biases }
    }

    /// Uniform Xavier initialization. `zero_last` zeroes the output layer,
    /// which makes modulation start as the identity.
    pub fn init_uniform(dims: &[usize], rng: &mut impl Rng, zero_last: bool) -> Self {
        let mut mlp = Self::zeros(dims);
        let n_layers = mlp.weights.len();
        for l in 0..n_layers {
            if zero_last && l == n_layers - 1 {
                continue;
            }
            let bound = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
            for w in mlp.weights[l].iter_mut() {
                *w = F::c(rng.gen_range(-bound..bound));
            }
        }
        mlp
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn validate_finite(&self) -> Result<()> {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: format!("mlp layer {l}") });
            }
        }
        Ok(())
    }

    /// Forward pass into reusable activation buffers. `cache.acts[0]` holds
    /// the input, `cache.acts[l + 1]` the post-activation of layer `l`
    /// (raw pre-activation for the last layer).
    pub fn forward(&self, input: &[F], cache: &mut MlpCache<F>) {
        debug_assert_eq!(input.len(), self.in_dim());
        cache.ensure(&self.dims);
        cache.acts[0].copy_from_slice(input);
        let n = self.n_layers();
        for l in 0..n {
            let dout = self.dims[l + 1];
            let w = &self.weights[l];
            // Split so we can read acts[l] while writing acts[l + 1].
            let (head, tail) = cache.acts.split_at_mut(l + 1);
            let x = &head[l];
            let y = &mut tail[0];
            y.copy_from_slice(&self.biases[l]);
            for (i, &xi) in x.iter().enumerate() {
                let row = &w[i * dout..(i + 1) * dout];
                for (yo, wo) in y.iter_mut().zip(row) {
                    *yo += xi * *wo;
                }
            }
            if l + 1 < n {
                for v in y.iter_mut() {
                    *v = *v / (F::one() + v.abs());
                }
            }
        }
    }

    /// Output slice of the cached forward pass.
    pub fn output<'a>(&self, cache: &'a MlpCache<F>) -> &'a [F] {
        &cache.acts[self.n_layers()]
    }

    /// Backward pass. `d_out` is the gradient at the (linear) output;
    /// parameter gradients accumulate into `grads`; the gradient with respect
    /// to the input is written to `d_in`.
    pub fn backward(
        &self,
        cache: &MlpCache<F>,
        d_out: &[F],
        grads: &mut MlpGrads<F>,
        scratch: &mut MlpCache<F>,
        d_in: &mut [F],
    ) {
        debug_assert_eq!(d_out.len(), self.out_dim());
        scratch.ensure(&self.dims);
        let n = self.n_layers();
        scratch.acts[n].copy_from_slice(d_out);
        for l in (0..n).rev() {
            let dout = self.dims[l + 1];
            let w = &self.weights[l];
            // dz: gradient at the pre-activation of layer l.
            let (head, tail) = scratch.acts.split_at_mut(l + 1);
            let dz = &mut tail[0];
            if l + 1 < n {
                // Post-activation a = z / (1 + |z|): da/dz = (1 - |a|)^2.
                let a = &cache.acts[l + 1];
                for (g, ai) in dz.iter_mut().zip(a.iter()) {
                    let s = F::one() - ai.abs();
                    *g *= s * s;
                }
            }
            let x = &cache.acts[l];
            for (g, go) in grads.db[l].iter_mut().zip(dz.iter()) {
                *g += *go;
            }
            let dw = &mut grads.dw[l];
            let dx = &mut head[l];
            for (i, &xi) in x.iter().enumerate() {
                let dw_row = &mut dw[i * dout..(i + 1) * dout];
                for (di, go) in dw_row.iter_mut().zip(dz.iter()) {
                    *di += xi * *go;
                }
                // d_x[i] = <dz, w[i, .]>, unrolled into four accumulators to
                // break the sequential dependency chain.
                let w_row = &w[i * dout..(i + 1) * dout];
                let mut acc = [F::zero(); 4];
                let chunks = dout / 4;
                for k in 0..chunks {
                    let at = 4 * k;
                    acc[0] += dz[at] * w_row[at];
                    acc[1] += dz[at + 1] * w_row[at + 1];
                    acc[2] += dz[at + 2] * w_row[at + 2];
                    acc[3] += dz[at + 3] * w_row[at + 3];
                }
                let mut rest = F::zero();
                for k in 4 * chunks..dout {
                    rest += dz[k] * w_row[k];
                }
                dx[i] = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + rest;
            }
        }
        d_in.copy_from_slice(&scratch.acts[0]);
    }

    /// Flat views over the parameter arrays, weights before biases per layer.
    pub fn param_arrays(&self) -> Vec<&[F]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    pub fn param_arrays_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }
}

/// Reusable activation buffers for [`Mlp::forward`]/[`Mlp::backward`].
#[derive(Debug, Clone, Default)]
pub struct MlpCache<F> {
    pub acts: Vec<Vec<F>>,
}

impl<F: Real> MlpCache<F> {
    pub fn new() -> Self {
        MlpCache { acts: Vec::new() }
    }

    fn ensure(&mut self, dims: &[usize]) {
        if self.acts.len() != dims.len() || self.acts.iter().zip(dims).any(|(a, &d)| a.len() != d) {
            self.acts = dims.iter().map(|&d| vec![F::zero(); d]).collect();
        }
    }
}

/// Parameter gradients, same shapes as [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads<F> {
    pub dw: Vec<Vec<F>>,
    pub db: Vec<Vec<F>>,
}

impl<F: Real> MlpGrads<F> {
    pub fn zeros_like(mlp: &Mlp<F>) -> Self {
        MlpGrads {
            dw: mlp.weights.iter().map(|w| vec![F::zero(); w.len()]).collect(),
            db: mlp.biases.iter().map(|b| vec![F::zero(); b.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads<F>) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    /// Scalar loss of the MLP output for finite differencing.
    fn probe_loss(mlp: &Mlp<f64>, input: &[f64], out_weights: &[f64]) -> f64 {
        let mut cache = MlpCache::new();
        mlp.forward(input, &mut cache);
        mlp.output(&cache).iter().zip(out_weights).map(|(y, w)| y * w).sum()
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let mlp = Mlp::<f64>::zeros(&[3, 5, 2]);
        let mut cache = MlpCache::new();
        mlp.forward(&[1.0, -2.0, 0.5], &mut cache);
        assert_eq!(mlp.output(&cache), &[0.0, 0.0]);
    }

    #[test]
    fn forward_matches_naive_matvec() {
        let mut rng = stream_rng(20, Stream::Probe(2));
        let mlp = Mlp::<f64>::init_uniform(&[3, 4], &mut rng, false);
        let x = [0.7, -0.3, 0.2];
        let mut cache = MlpCache::new();
        mlp.forward(&x, &mut cache);
        for o in 0..4 {
            let mut expect = mlp.biases[0][o];
            for i in 0..3 {
                expect += mlp.weights[0][i * 4 + o] * x[i];
            }
            assert!((mlp.output(&cache)[o] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = stream_rng(21, Stream::Probe(3));
        let mlp = Mlp::<f64>::init_uniform(&[4, 8, 8, 3], &mut rng, false);
        let input: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out_w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut cache = MlpCache::new();
        mlp.forward(&input, &mut cache);
        let mut grads = MlpGrads::zeros_like(&mlp);
        let mut scratch = MlpCache::new();
        let mut d_in = vec![0.0; 4];
        mlp.backward(&cache, &out_w, &mut grads, &mut scratch, &mut d_in);

        let h = 1e-5;
        // Weight gradients.
        for l in 0..mlp.n_layers() {
            for idx in (0..mlp.weights[l].len()).step_by(7) {
                let mut plus = mlp.clone();
                plus.weights[l][idx] += h;
                let mut minus = mlp.clone();
                minus.weights[l][idx] -= h;
                let fd = (probe_loss(&plus, &input, &out_w) - probe_loss(&minus, &input, &out_w)) / (2.0 * h);
                let an = grads.dw[l][idx];
                assert!((an - fd).abs() <= 1e-7 + 1e-6 * an.abs().max(fd.abs()), "layer {l} w[{idx}]: {an} vs {fd}");
            }
        }
        // Input gradients.
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus[i] += h;
            let mut minus = input.clone();
            minus[i] -= h;
            let fd = (probe_loss(&mlp, &plus, &out_w) - probe_loss(&mlp, &minus, &out_w)) / (2.0 * h);
            assert!((d_in[i] - fd).abs() <= 1e-7 + 1e-6 * d_in[i].abs().max(fd.abs()));
        }
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut rng = stream_rng(22, Stream::Probe(4));
        let mlp = Mlp::<f64>::init_uniform(&[2, 4, 1], &mut rng, false);
        let mut cache = MlpCache::new();
        mlp.forward(&[0.3, -0.4], &mut cache);
        let mut grads = MlpGrads::zeros_like(&mlp);
        let mut scratch = MlpCache::new();
        let mut d_in = vec![0.0; 2];
        mlp.backward(&cache, &[1.0], &mut grads, &mut scratch, &mut d_in);
        let once = grads.clone();
        mlp.backward(&cache, &[1.0], &mut grads, &mut scratch, &mut d_in);
        for (a, b) in grads.dw.iter().zip(&once.dw) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - 2.0 * y).abs() < 1e-14);
            }
        }
    }
}
