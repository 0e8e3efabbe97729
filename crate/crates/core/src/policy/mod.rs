//! The learner's control network: MLP, Adam, the aggregated dataset and the
//! supervised minibatch update.

mod mlp;

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ControlVector, Observation, VehicleKind};
use crate::teachers::Policy;

pub use mlp::{control_dims, dropout_mask, l2_loss, ForwardCache, Mlp, HIDDEN_UNITS};

/// Hidden layer (0-based) that receives dropout during training.
pub const DROPOUT_LAYER: usize = 1;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 1e-4;

    pub fn new(param_count: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; param_count], v: vec![0.0; param_count] }
    }

    pub fn for_net(net: &Mlp) -> Self {
        Adam::new(net.param_count(), Adam::DEFAULT_LR)
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "Adam state does not match parameter count");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Append-only store of `(features, target action)` pairs, each tagged with
/// the index of the policy that produced the label. With a capacity set, the
/// oldest pairs are evicted first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    input_dim: usize,
    target_dim: usize,
    capacity: Option<usize>,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    sources: Vec<usize>,
    /// Ring start once the capacity is reached.
    head: usize,
    total_added: u64,
}

impl Dataset {
    pub fn new(input_dim: usize, target_dim: usize) -> Self {
        Dataset {
            input_dim,
            target_dim,
            capacity: None,
            inputs: Vec::new(),
            targets: Vec::new(),
            sources: Vec::new(),
            head: 0,
            total_added: 0,
        }
    }

    pub fn with_capacity_limit(input_dim: usize, target_dim: usize, capacity: Option<usize>) -> Self {
        Dataset { capacity: capacity.filter(|&c| c > 0), ..Dataset::new(input_dim, target_dim) }
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn total_added(&self) -> u64 {
        self.total_added
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn push(&mut self, input: &[f64], target: &[f64], source: usize) -> Result<()> {
        if input.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: input.len() });
        }
        if target.len() != self.target_dim {
            return Err(Error::DimensionMismatch { expected: self.target_dim, got: target.len() });
        }
        self.total_added += 1;
        match self.capacity {
            Some(cap) if self.len() == cap => {
                let i = self.head;
                self.inputs[i * self.input_dim..(i + 1) * self.input_dim].copy_from_slice(input);
                self.targets[i * self.target_dim..(i + 1) * self.target_dim].copy_from_slice(target);
                self.sources[i] = source;
                self.head = (self.head + 1) % cap;
            }
            _ => {
                self.inputs.extend_from_slice(input);
                self.targets.extend_from_slice(target);
                self.sources.push(source);
            }
        }
        Ok(())
    }

    /// The `i`-th oldest pair still stored.
    pub fn get(&self, i: usize) -> (&[f64], &[f64], usize) {
        let j = (self.head + i) % self.len();
        (
            &self.inputs[j * self.input_dim..(j + 1) * self.input_dim],
            &self.targets[j * self.target_dim..(j + 1) * self.target_dim],
            self.sources[j],
        )
    }

    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).map(move |i| self.get(i).2)
    }

    /// Uniform sample with replacement of `size` indices.
    pub fn sample_indices<R: Rng>(&self, size: usize, rng: &mut R) -> Vec<usize> {
        (0..size).map(|_| rng.random_range(0..self.len())).collect()
    }
}

/// Accumulated gradient and loss of a batch without touching the network.
///
/// The whole batch goes through each layer as one matrix product.
pub fn batch_gradient<R: Rng>(
    net: &Mlp,
    batch: &[(&[f64], &[f64])],
    dropout_rate: f64,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let b = batch.len();
    let dims = net.dims();
    let layers = net.layer_count();
    for (x, y) in batch {
        if x.len() != net.input_dim() {
            return Err(Error::DimensionMismatch { expected: net.input_dim(), got: x.len() });
        }
        if y.len() != net.output_dim() {
            return Err(Error::DimensionMismatch { expected: net.output_dim(), got: y.len() });
        }
    }
    let use_dropout = dropout_rate > 0.0 && DROPOUT_LAYER + 1 < layers;
    let mask = if use_dropout {
        let w = dims[DROPOUT_LAYER + 1];
        let mut m = DMatrix::zeros(b, w);
        for r in 0..b {
            for (c, v) in dropout_mask(w, dropout_rate, rng).into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Some(m)
    } else {
        None
    };

    // acts[l]: b × dims[l]; tanhs[l]: tanh before dropout for hidden layers
    let mut acts: Vec<DMatrix<f64>> = Vec::with_capacity(layers + 1);
    acts.push(DMatrix::from_fn(b, dims[0], |r, c| batch[r].0[c]));
    let mut tanhs: Vec<DMatrix<f64>> = Vec::with_capacity(layers);
    for l in 0..layers {
        let (wr, br) = net.layer_range(l);
        let wt = DMatrixView::from_slice(&net.params()[wr], dims[l], dims[l + 1]);
        let bias = &net.params()[br];
        let mut z = DMatrix::zeros(b, dims[l + 1]);
        z.gemm(1.0, &acts[l], &wt, 0.0);
        for (c, bc) in bias.iter().enumerate() {
            z.column_mut(c).add_scalar_mut(*bc);
        }
        if l + 1 < layers {
            z.apply(|v| *v = v.tanh());
            let mut a = z.clone();
            if l == DROPOUT_LAYER {
                if let Some(m) = &mask {
                    a.component_mul_assign(m);
                }
            }
            tanhs.push(z);
            acts.push(a);
        } else {
            acts.push(z);
        }
    }

    let scale = 1.0 / b as f64;
    let out = &acts[layers];
    let target = DMatrix::from_fn(b, net.output_dim(), |r, c| batch[r].1[c]);
    let diff = out - target;
    let loss = diff.norm_squared() * scale;
    let mut delta = diff * (2.0 * scale);
    let mut grads = vec![0.0; net.param_count()];
    for l in (0..layers).rev() {
        let (wr, br) = net.layer_range(l);
        {
            let mut gw = DMatrixViewMut::from_slice(&mut grads[wr.clone()], dims[l], dims[l + 1]);
            gw.gemm_tr(1.0, &acts[l], &delta, 0.0);
        }
        for (c, g) in grads[br].iter_mut().enumerate() {
            *g = delta.column(c).sum();
        }
        if l > 0 {
            let wt = DMatrixView::from_slice(&net.params()[wr], dims[l], dims[l + 1]);
            let mut d_in = &delta * wt.transpose();
            let t = &tanhs[l - 1];
            d_in.zip_apply(t, |d, t| *d *= 1.0 - t * t);
            if l - 1 == DROPOUT_LAYER {
                if let Some(m) = &mask {
                    d_in.component_mul_assign(m);
                }
            }
            delta = d_in;
        }
    }
    Ok((loss, grads))
}

/// One Adam step on the mean L2 loss of `batch`, with inverted dropout on the
/// second hidden layer. Returns the batch loss before the update.
pub fn train_minibatch<R: Rng>(
    net: &mut Mlp,
    adam: &mut Adam,
    batch: &[(&[f64], &[f64])],
    dropout_rate: f64,
    rng: &mut R,
) -> Result<f64> {
    let (loss, grads) = batch_gradient(net, batch, dropout_rate, rng)?;
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { update: adam.step + 1 });
    }
    adam.apply(net.params_mut(), &grads);
    Ok(loss)
}

/// Draws a uniform minibatch from `data` and takes one training step.
pub fn train_on_dataset<R: Rng>(
    net: &mut Mlp,
    adam: &mut Adam,
    data: &Dataset,
    batch_size: usize,
    dropout_rate: f64,
    rng: &mut R,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let idx = data.sample_indices(batch_size.max(1), rng);
    let batch: Vec<(&[f64], &[f64])> = idx
        .iter()
        .map(|&i| {
            let (x, y, _) = data.get(i);
            (x, y)
        })
        .collect();
    train_minibatch(net, adam, &batch, dropout_rate, rng)
}

/// How raw network outputs become control channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// One output per channel, clamped.
    #[default]
    Identity,
    /// `tanh` of each output. With `fixed_throttle` set the car's throttle is
    /// held at that value and the single network output drives steering.
    Tanh { fixed_throttle: Option<f64> },
}

impl OutputHead {
    pub fn output_dim(&self, kind: VehicleKind) -> usize {
        match (self, kind) {
            (OutputHead::Tanh { fixed_throttle: Some(_) }, VehicleKind::Car) => 1,
            _ => kind.action_dim(),
        }
    }

    pub fn control(&self, kind: VehicleKind, out: &[f64]) -> ControlVector {
        match self {
            OutputHead::Identity => ControlVector::from_slice(kind, out).clamped(),
            OutputHead::Tanh { fixed_throttle } => {
                let squashed: Vec<f64> = out.iter().map(|v| v.tanh()).collect();
                match (kind, fixed_throttle) {
                    (VehicleKind::Car, Some(g)) => ControlVector::Car { gas: *g, steer: squashed[0] }.clamped(),
                    _ => ControlVector::from_slice(kind, &squashed).clamped(),
                }
            }
        }
    }
}

/// Deterministic network policy; outputs are clamped to `[-1, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct MlpPolicy<'a> {
    pub net: &'a Mlp,
    pub kind: VehicleKind,
    pub head: OutputHead,
}

impl<'a> MlpPolicy<'a> {
    pub fn new(net: &'a Mlp, kind: VehicleKind) -> Self {
        MlpPolicy { net, kind, head: OutputHead::Identity }
    }

    pub fn with_head(net: &'a Mlp, kind: VehicleKind, head: OutputHead) -> Self {
        MlpPolicy { net, kind, head }
    }
}

impl Policy for MlpPolicy<'_> {
    fn act(&mut self, obs: &Observation) -> ControlVector {
        match self.net.forward(&obs.features) {
            Ok(out) => self.head.control(self.kind, &out),
            Err(_) => ControlVector::from_slice(self.kind, &[f64::NAN; 3]),
        }
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized network plus optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub vehicle: VehicleKind,
    pub net: Mlp,
    pub adam: Adam,
    #[serde(default)]
    pub head: OutputHead,
    /// Free-form provenance (trainer, seed, config hash, tool version).
    #[serde(default)]
    pub meta: std::collections::BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(vehicle: VehicleKind, net: Mlp, adam: Adam) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, vehicle, net, adam, head: OutputHead::Identity, meta: Default::default() }
    }

    pub fn policy(&self) -> MlpPolicy<'_> {
        MlpPolicy::with_head(&self.net, self.vehicle, self.head)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::format(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {}", ck.version)));
        }
        Mlp::from_parts(ck.net.dims().to_vec(), ck.net.params().to_vec()).map_err(|e| Error::format(path, e))?;
        if ck.adam.moments().0.len() != ck.net.param_count() {
            return Err(Error::format(path, "optimizer state does not match network"));
        }
        if ck.head.output_dim(ck.vehicle) != ck.net.output_dim() {
            return Err(Error::format(path, "network output does not match the vehicle"));
        }
        Ok(ck)
    }
}
