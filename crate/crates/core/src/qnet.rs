//! Feed-forward Q-network over concatenated `(observation, action)` inputs,
//! with hand-rolled backpropagation, an Adam optimizer and a versioned binary
//! checkpoint format.
//!
//! Hidden layers use the rectifier, the output is a single linear unit.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mppi::ValueFn;

/// Checkpoint magic bytes and version; see [`QNetwork::save`] for the layout.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MPQCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// Row-major `n_out x n_in` weights.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { w: vec![0.0; n_in * n_out], b: vec![0.0; n_out], n_in, n_out }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub layers: Vec<Layer>,
}

/// Per-layer gradient buffers, same shapes as the parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl QNetwork {
    /// Fan-in scaled uniform initialization: `U(-1/sqrt(n_in), 1/sqrt(n_in))`.
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut dyn Rng) -> Self {
        let mut net = Self::zeros(obs_dim, action_dim, hidden);
        for layer in &mut net.layers {
            let scale = 1.0 / (layer.n_in as f64).sqrt();
            for w in &mut layer.w {
                *w = rng.random_range(-scale..scale);
            }
            for b in &mut layer.b {
                *b = rng.random_range(-scale..scale);
            }
        }
        net
    }

    /// All-zero parameters (outputs 0 everywhere).
    pub fn zeros(obs_dim: usize, action_dim: usize, hidden: &[usize]) -> Self {
        let mut dims = vec![obs_dim + action_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let layers = dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect();
        Self { obs_dim, action_dim, layers }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].n_in];
        dims.extend(self.layers.iter().map(|l| l.n_out));
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Scalar Q estimate for one `(obs, action)` pair.
    pub fn forward(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        if obs.len() != self.obs_dim {
            return Err(Error::LengthMismatch {
                what: "observation",
                expected: self.obs_dim,
                got: obs.len(),
            });
        }
        if action.len() != self.action_dim {
            return Err(Error::LengthMismatch {
                what: "action",
                expected: self.action_dim,
                got: action.len(),
            });
        }
        let mut input = Vec::with_capacity(self.obs_dim + self.action_dim);
        input.extend_from_slice(obs);
        input.extend_from_slice(action);
        Ok(self.forward_input(&input))
    }

    fn forward_input(&self, input: &[f64]) -> f64 {
        let last = self.layers.len() - 1;
        let mut activation = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.b.clone();
            for (row, o) in out.iter_mut().enumerate() {
                let w_row = &layer.w[row * layer.n_in..(row + 1) * layer.n_in];
                let mut acc = 0.0;
                for (w, a) in w_row.iter().zip(&activation) {
                    acc += w * a;
                }
                *o += acc;
            }
            if i < last {
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activation = out;
        }
        activation[0]
    }

    /// Mean squared error over the batch and its exact parameter gradient.
    /// Batch entries are `(obs, action, target)`.
    pub fn loss_and_grad(&self, batch: &[(Vec<f64>, Vec<f64>, f64)]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::invalid_arg("loss_and_grad needs a non-empty batch"));
        }
        let n_layers = self.layers.len();
        let mut grads = Gradients {
            layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        };
        let inv_n = 1.0 / batch.len() as f64;
        let mut loss = 0.0;

        // Per-sample forward pass keeping pre/post activations, then backprop.
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        for (obs, action, target) in batch {
            if obs.len() != self.obs_dim || action.len() != self.action_dim {
                return Err(Error::LengthMismatch {
                    what: "batch sample",
                    expected: self.obs_dim + self.action_dim,
                    got: obs.len() + action.len(),
                });
            }
            activations.clear();
            let mut input = Vec::with_capacity(self.obs_dim + self.action_dim);
            input.extend_from_slice(obs);
            input.extend_from_slice(action);
            activations.push(input);
            for (i, layer) in self.layers.iter().enumerate() {
                let prev = &activations[i];
                let mut out = layer.b.clone();
                for (row, o) in out.iter_mut().enumerate() {
                    let w_row = &layer.w[row * layer.n_in..(row + 1) * layer.n_in];
                    let mut acc = 0.0;
                    for (w, a) in w_row.iter().zip(prev) {
                        acc += w * a;
                    }
                    *o += acc;
                }
                if i < n_layers - 1 {
                    for v in &mut out {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                activations.push(out);
            }
            let q = activations[n_layers][0];
            let err = q - target;
            loss += err * err * inv_n;

            // d loss / d q for this sample.
            let mut delta = vec![2.0 * err * inv_n];
            for i in (0..n_layers).rev() {
                let layer = &self.layers[i];
                let prev = &activations[i];
                let g = &mut grads.layers[i];
                for (row, &d) in delta.iter().enumerate() {
                    g.b[row] += d;
                    let g_row = &mut g.w[row * layer.n_in..(row + 1) * layer.n_in];
                    for (gw, a) in g_row.iter_mut().zip(prev) {
                        *gw += d * a;
                    }
                }
                if i > 0 {
                    let mut next_delta = vec![0.0; layer.n_in];
                    for (row, &d) in delta.iter().enumerate() {
                        let w_row = &layer.w[row * layer.n_in..(row + 1) * layer.n_in];
                        for (nd, w) in next_delta.iter_mut().zip(w_row) {
                            *nd += d * w;
                        }
                    }
                    // Rectifier mask: activations[i] holds the post-activation
                    // values of hidden layer i (zero exactly where clamped).
                    for (nd, &a) in next_delta.iter_mut().zip(&activations[i]) {
                        if a <= 0.0 {
                            *nd = 0.0;
                        }
                    }
                    delta = next_delta;
                }
            }
        }
        Ok((loss, grads))
    }

    /// Writes the checkpoint: binary parameters plus a JSON sidecar at
    /// `<path>.json`.
    ///
    /// Byte layout (all integers and floats little-endian):
    ///
    /// ```text
    /// offset 0   8 bytes   magic "MPQCKPT1"
    /// offset 8   u32       format version (1)
    /// offset 12  u32       obs_dim
    /// offset 16  u32       action_dim
    /// offset 20  u32       L = number of weight layers
    /// offset 24  u32*(L+1) layer widths d_0..d_L (d_0 = obs_dim+action_dim)
    /// then per layer i in order: d_{i+1}*d_i f64 row-major weights,
    ///                            d_{i+1}     f64 biases
    /// ```
    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.n_params() * 8);
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.obs_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.action_dim as u32).to_le_bytes());
        let dims = self.dims();
        buf.extend_from_slice(&((dims.len() - 1) as u32).to_le_bytes());
        for d in &dims {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for layer in &self.layers {
            for v in layer.w.iter().chain(layer.b.iter()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(meta)
            .map_err(|e| Error::Checkpoint(format!("sidecar encode failed: {e}")))?;
        std::fs::write(sidecar, json)?;
        Ok(())
    }

    /// Loads and verifies a checkpoint written by [`QNetwork::save`].
    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let take = |off: usize, n: usize| -> Result<&[u8]> {
            bytes
                .get(off..off + n)
                .ok_or_else(|| Error::Checkpoint(format!("{}: truncated at offset {off}", path.display())))
        };
        if take(0, 8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("{}: bad magic bytes", path.display())));
        }
        let read_u32 =
            |off: usize| -> Result<u32> { Ok(u32::from_le_bytes(take(off, 4)?.try_into().unwrap())) };
        let version = read_u32(8)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let obs_dim = read_u32(12)? as usize;
        let action_dim = read_u32(16)? as usize;
        let n_layers = read_u32(20)? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
        }
        let mut dims = Vec::with_capacity(n_layers + 1);
        for i in 0..=n_layers {
            dims.push(read_u32(24 + 4 * i)? as usize);
        }
        if dims[0] != obs_dim + action_dim || *dims.last().unwrap() != 1 {
            return Err(Error::Checkpoint("layer widths inconsistent with header".into()));
        }
        let mut off = 24 + 4 * (n_layers + 1);
        let mut layers = Vec::with_capacity(n_layers);
        for d in dims.windows(2) {
            let (n_in, n_out) = (d[0], d[1]);
            let mut layer = Layer::zeros(n_in, n_out);
            for v in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                *v = f64::from_le_bytes(take(off, 8)?.try_into().unwrap());
                off += 8;
            }
            layers.push(layer);
        }
        if off != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after parameters",
                bytes.len() - off
            )));
        }
        let net = Self { obs_dim, action_dim, layers };
        if !net.params_finite() {
            return Err(Error::Checkpoint("checkpoint contains non-finite parameters".into()));
        }
        let sidecar = sidecar_path(path);
        let meta: CheckpointMeta = serde_json::from_str(
            &std::fs::read_to_string(&sidecar)
                .map_err(|e| Error::Checkpoint(format!("missing sidecar {}: {e}", sidecar.display())))?,
        )
        .map_err(|e| Error::Checkpoint(format!("sidecar decode failed: {e}")))?;
        Ok((net, meta))
    }
}

impl ValueFn for QNetwork {
    fn q(&self, obs: &[f64], action: &[f64]) -> f64 {
        self.forward(obs, action).expect("Q-network input dimension mismatch")
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}

/// JSON sidecar written next to each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub dims: Vec<usize>,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub train_seed: u64,
    pub step: u64,
    pub lambda: f64,
    pub code_version: String,
}

/// Adam optimizer state (moments, step counter, hyperparameters).
#[derive(Clone, Debug)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl AdamState {
    pub fn new(net: &QNetwork, learning_rate: f64) -> Self {
        let zeros: Vec<Layer> =
            net.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(net: &mut QNetwork, state: &mut AdamState, grads: &Gradients) -> Result<()> {
    if grads.layers.len() != net.layers.len() {
        return Err(Error::LengthMismatch {
            what: "gradient layers",
            expected: net.layers.len(),
            got: grads.layers.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for (li, layer) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[li];
        if g.w.len() != layer.w.len() || g.b.len() != layer.b.len() {
            return Err(Error::LengthMismatch {
                what: "gradient shape",
                expected: layer.w.len(),
                got: g.w.len(),
            });
        }
        let (m, v) = (&mut state.m[li], &mut state.v[li]);
        for (((p, g), m), v) in layer
            .w
            .iter_mut()
            .chain(layer.b.iter_mut())
            .zip(g.w.iter().chain(g.b.iter()))
            .zip(m.w.iter_mut().chain(m.b.iter_mut()))
            .zip(v.w.iter_mut().chain(v.b.iter_mut()))
        {
            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
