use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden widths of the control network.
pub const HIDDEN_UNITS: [usize; 3] = [64, 32, 16];

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// Parameters live in one flat buffer, layer by layer, each layer stored as
/// its row-major `out × in` weight matrix followed by its bias vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations kept for backprop.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `acts[l]` is the input to layer `l`; the last entry is the output.
    acts: Vec<Vec<f64>>,
    /// Dropout multipliers applied to the activation of each hidden layer.
    masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

pub fn control_dims(input_dim: usize, output_dim: usize) -> Vec<usize> {
    let mut d = vec![input_dim];
    d.extend_from_slice(&HIDDEN_UNITS);
    d.push(output_dim);
    d
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Result<Mlp> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter(format!("bad layer dims {dims:?}")));
        }
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp { dims: dims.to_vec(), params: vec![0.0; n] })
    }

    /// Uniform weights with standard deviation `1/√fan_in`, zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Mlp> {
        let mut net = Mlp::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.layer_count() {
            let fan_in = net.dims[l];
            let bound = (3.0 / fan_in as f64).sqrt();
            let (w, _) = net.layer_range(l);
            for p in &mut net.params[w] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_parts(dims: Vec<usize>, params: Vec<f64>) -> Result<Mlp> {
        let net = Mlp::zeros(&dims)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch { expected: net.params.len(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        Ok(Mlp { dims, params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Index ranges of layer `l`'s weights and biases in the flat buffer.
    pub fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for k in 0..l {
            off += self.dims[k] * self.dims[k + 1] + self.dims[k + 1];
        }
        let w = self.dims[l] * self.dims[l + 1];
        (off..off + w, off + w..off + w + self.dims[l + 1])
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    fn affine(&self, l: usize, x: &[f64], out: &mut Vec<f64>) {
        let (wr, br) = self.layer_range(l);
        let w = &self.params[wr];
        let b = &self.params[br];
        let n_in = self.dims[l];
        out.clear();
        out.extend(b.iter().enumerate().map(|(j, bj)| {
            let row = &w[j * n_in..(j + 1) * n_in];
            bj + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        }));
    }

    /// Inference pass without dropout.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.layer_count() {
            self.affine(l, &cur, &mut next);
            if l + 1 < self.layer_count() {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Pre-activations of every hidden layer (no dropout).
    pub fn hidden_preactivations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut out = Vec::new();
        for l in 0..self.layer_count() - 1 {
            let mut z = Vec::new();
            self.affine(l, &cur, &mut z);
            cur = z.iter().map(|v| v.tanh()).collect();
            out.push(z);
        }
        Ok(out)
    }

    /// Forward pass keeping activations. `masks[h]`, when present, multiplies
    /// the activation of hidden layer `h`.
    pub fn forward_cached(&self, x: &[f64], masks: Vec<Option<Vec<f64>>>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let hidden = self.layer_count() - 1;
        let mut masks = masks;
        masks.resize(hidden, None);
        let mut acts = Vec::with_capacity(self.layer_count() + 1);
        acts.push(x.to_vec());
        for l in 0..self.layer_count() {
            let mut z = Vec::new();
            self.affine(l, acts.last().unwrap(), &mut z);
            if l < hidden {
                z.iter_mut().for_each(|v| *v = v.tanh());
                if let Some(m) = &masks[l] {
                    z.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
                }
            }
            acts.push(z);
        }
        Ok(ForwardCache { acts, masks })
    }

    /// Accumulates `∂loss/∂θ` into `grads` given `∂loss/∂output`, and returns
    /// `∂loss/∂input`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut delta = d_out.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (wr, br) = self.layer_range(l);
            let n_in = self.dims[l];
            let input = &cache.acts[l];
            {
                let (gw, gb) = grads[wr.start..br.end].split_at_mut(wr.len());
                for (j, dj) in delta.iter().enumerate() {
                    gb[j] += dj;
                    let row = &mut gw[j * n_in..(j + 1) * n_in];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g += dj * x);
                }
            }
            let w = &self.params[wr];
            let mut d_in = vec![0.0; n_in];
            for (j, dj) in delta.iter().enumerate() {
                let row = &w[j * n_in..(j + 1) * n_in];
                d_in.iter_mut().zip(row).for_each(|(d, wv)| *d += dj * wv);
            }
            if l > 0 {
                // input = mask ⊙ tanh(z): dz = d_in · mask · (1 − tanh²)
                let mask = &cache.masks[l - 1];
                for (i, d) in d_in.iter_mut().enumerate() {
                    let (m, t) = match mask {
                        Some(m) if m[i] == 0.0 => (0.0, 0.0),
                        Some(m) => (m[i], input[i] / m[i]),
                        None => (1.0, input[i]),
                    };
                    *d *= m * (1.0 - t * t);
                }
            }
            delta = d_in;
        }
        delta
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Inverted-dropout mask: each unit is kept with probability `1 − rate` and
/// scaled by `1 / (1 − rate)`.
pub fn dropout_mask<R: Rng>(width: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; width];
    }
    let keep = 1.0 - rate;
    (0..width).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
}

/// Sum of squared differences.
pub fn l2_loss(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum()
}
