//! Fully connected network with tanh hidden layers and a linear output,
//! stored as one flat parameter slice so optimizers and checkpoints can treat
//! every network uniformly.

use crate::kernel::RngStream;
use crate::scalar::Real;

/// Layer widths, input first. Parameters of layer `k` are its weight matrix
/// (row-major, `out x in`) followed by its bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
}

impl MlpShape {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "an MLP needs at least input and output widths");
        MlpShape { sizes }
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Orthogonal-free init: uniform in `+-sqrt(6 / (in + out))`, zero
    /// biases, output layer scaled by `out_scale`.
    pub fn init<T: Real>(&self, rng: &mut RngStream, out_scale: f64) -> Vec<T> {
        let mut p = Vec::with_capacity(self.param_count());
        let layers = self.sizes.len() - 1;
        for (k, w) in self.sizes.windows(2).enumerate() {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt() * if k + 1 == layers { out_scale } else { 1.0 };
            for _ in 0..w[0] * w[1] {
                p.push(T::lit((2.0 * rng.uniform() - 1.0) * limit));
            }
            p.extend(std::iter::repeat_n(T::zero(), w[1]));
        }
        p
    }
}

/// Activations kept for the backward pass. `acts[0]` is the input;
/// `acts[k]` is the output of layer `k` (tanh applied except for the last).
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    pub acts: Vec<Vec<T>>,
}

impl<T: Real> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("non-empty")
    }
}

pub fn forward<T: Real>(shape: &MlpShape, params: &[T], x: &[T]) -> MlpCache<T> {
    debug_assert_eq!(params.len(), shape.param_count());
    debug_assert_eq!(x.len(), shape.input());
    let layers = shape.sizes.len() - 1;
    let mut acts = Vec::with_capacity(layers + 1);
    acts.push(x.to_vec());
    let mut off = 0;
    for k in 0..layers {
        let (n_in, n_out) = (shape.sizes[k], shape.sizes[k + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let input = &acts[k];
        let mut out = Vec::with_capacity(n_out);
        for j in 0..n_out {
            let row = &w[j * n_in..(j + 1) * n_in];
            let mut z = b[j];
            for i in 0..n_in {
                z += row[i] * input[i];
            }
            out.push(if k + 1 < layers { z.libm_tanh() } else { z });
        }
        acts.push(out);
    }
    MlpCache { acts }
}

/// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`.
pub fn backward<T: Real>(shape: &MlpShape, params: &[T], cache: &MlpCache<T>, d_out: &[T], grad: &mut [T]) {
    let layers = shape.sizes.len() - 1;
    let mut offsets = Vec::with_capacity(layers);
    let mut off = 0;
    for w in shape.sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    let mut delta: Vec<T> = d_out.to_vec();
    for k in (0..layers).rev() {
        let (n_in, n_out) = (shape.sizes[k], shape.sizes[k + 1]);
        if k + 1 < layers {
            // Through tanh: d/dz = d/da * (1 - a^2)
            for (d, &a) in delta.iter_mut().zip(&cache.acts[k + 1]) {
                *d *= T::one() - a * a;
            }
        }
        let o = offsets[k];
        let input = &cache.acts[k];
        for j in 0..n_out {
            let dj = delta[j];
            let row = &mut grad[o + j * n_in..o + (j + 1) * n_in];
            for i in 0..n_in {
                row[i] += dj * input[i];
            }
            grad[o + n_in * n_out + j] += dj;
        }
        if k > 0 {
            let w = &params[o..o + n_in * n_out];
            let mut prev = vec![T::zero(); n_in];
            for j in 0..n_out {
                let dj = delta[j];
                let row = &w[j * n_in..(j + 1) * n_in];
                for i in 0..n_in {
                    prev[i] += dj * row[i];
                }
            }
            delta = prev;
        }
    }
}
