//! Small dense neural-network toolkit: MLPs with explicit backprop, losses,
//! a max/min channel pool, Adam, a finite-difference gradient checker, and a
//! binary checkpoint format. Everything is f64 and deterministic given a seed.

mod adam;
mod checkpoint;
mod gradcheck;
mod pool;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CKPT_MAGIC, CKPT_VERSION,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use pool::{MaxMinPool, PoolCache};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Element-wise activation applied after each affine layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the post-activation value, which all four
    /// activations here admit (they are strictly monotone or piecewise linear).
    fn derive_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if y > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// One affine layer (row-major `out_dim x in_dim` weights) plus activation
/// and its gradient accumulators.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) act: Activation,
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
    pub(crate) gw: Vec<f64>,
    pub(crate) gb: Vec<f64>,
}

impl DenseLayer {
    fn new(in_dim: usize, out_dim: usize, act: Activation, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        DenseLayer {
            in_dim,
            out_dim,
            act,
            w,
            b: vec![0.0; out_dim],
            gw: vec![0.0; in_dim * out_dim],
            gb: vec![0.0; out_dim],
        }
    }

    pub(crate) fn from_params(
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        w: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self, NnError> {
        if w.len() != in_dim * out_dim || b.len() != out_dim {
            return Err(NnError::Shape(format!(
                "layer {in_dim}x{out_dim} got {} weights, {} biases",
                w.len(),
                b.len()
            )));
        }
        Ok(DenseLayer {
            in_dim,
            out_dim,
            act,
            w,
            b,
            gw: vec![0.0; in_dim * out_dim],
            gb: vec![0.0; out_dim],
        })
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = Vec::with_capacity(self.out_dim);
        for i in 0..self.out_dim {
            let row = &self.w[i * self.in_dim..(i + 1) * self.in_dim];
            let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b[i];
            out.push(self.act.apply(z));
        }
        out
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.act
    }
}

/// Per-call activations retained for the backward pass.
pub struct MlpCache {
    /// `inputs[l]` is the input fed to layer `l`.
    inputs: Vec<Vec<f64>>,
    /// `outputs[l]` is the post-activation output of layer `l`.
    outputs: Vec<Vec<f64>>,
}

/// A named multilayer perceptron. Gradients accumulate across backward calls
/// until explicitly zeroed, so callers can average over a batch.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub(crate) name: String,
    pub(crate) layers: Vec<DenseLayer>,
    pub(crate) trainable: bool,
}

impl Mlp {
    /// Builds layers `dims[0] -> dims[1] -> ...` with uniform
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and zero biases.
    pub fn new(name: &str, dims: &[usize], acts: &[Activation], rng: &mut ChaCha8Rng) -> Self {
        assert!(
            dims.len() >= 2 && acts.len() == dims.len() - 1,
            "need one activation per layer"
        );
        assert!(dims.iter().all(|&d| d > 0), "zero-width layer");
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(pair, &act)| DenseLayer::new(pair[0], pair[1], act, rng))
            .collect();
        Mlp {
            name: name.to_string(),
            layers,
            trainable: true,
        }
    }

    pub(crate) fn from_layers(name: String, layers: Vec<DenseLayer>, trainable: bool) -> Self {
        Mlp {
            name,
            layers,
            trainable,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rename(&mut self, name: &str) {
        self.name = name.to_string();
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward(&cur);
        }
        cur
    }

    pub fn forward_train(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            inputs.push(cur.clone());
            cur = layer.forward(&cur);
            outputs.push(cur.clone());
        }
        let out = cur;
        (out, MlpCache { inputs, outputs })
    }

    /// Backpropagates `grad_out` (dLoss/dOutput) through the network.
    /// Parameter gradients accumulate only when the network is trainable;
    /// the input gradient is always returned so upstream networks can chain.
    pub fn backward(&mut self, cache: &MlpCache, grad_out: &[f64]) -> Vec<f64> {
        debug_assert_eq!(grad_out.len(), self.out_dim());
        let mut grad = grad_out.to_vec();
        for (l, layer) in self.layers.iter_mut().enumerate().rev() {
            let x = &cache.inputs[l];
            let y = &cache.outputs[l];
            // Through the activation.
            let gpre: Vec<f64> = grad
                .iter()
                .zip(y)
                .map(|(g, &yo)| g * layer.act.derive_from_output(yo))
                .collect();
            if self.trainable {
                for i in 0..layer.out_dim {
                    let gi = gpre[i];
                    let row = &mut layer.gw[i * layer.in_dim..(i + 1) * layer.in_dim];
                    for (rw, xv) in row.iter_mut().zip(x) {
                        *rw += gi * xv;
                    }
                    layer.gb[i] += gi;
                }
            }
            let mut gin = vec![0.0; layer.in_dim];
            for i in 0..layer.out_dim {
                let gi = gpre[i];
                let row = &layer.w[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (gj, wv) in gin.iter_mut().zip(row) {
                    *gj += gi * wv;
                }
            }
            grad = gin;
        }
        grad
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.gw.iter_mut().for_each(|g| *g = 0.0);
            layer.gb.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.gw.iter_mut().for_each(|g| *g *= factor);
            layer.gb.iter_mut().for_each(|g| *g *= factor);
        }
    }
}

/// SHA-256 hex digest over names, shapes, and little-endian parameter bytes.
/// Stable across runs; any parameter change changes the digest.
pub fn param_hash(mlps: &[&Mlp]) -> String {
    let mut hasher = Sha256::new();
    for mlp in mlps {
        hasher.update(mlp.name.as_bytes());
        for layer in &mlp.layers {
            hasher.update((layer.in_dim as u64).to_le_bytes());
            hasher.update((layer.out_dim as u64).to_le_bytes());
            for v in layer.w.iter().chain(&layer.b) {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Mean squared error.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Gradient of [`mse`] with respect to `a`.
pub fn mse_grad(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| 2.0 * (x - y) / n).collect()
}

const BCE_CLAMP: f64 = 1e-7;

/// Binary cross-entropy on a single probability, with the probability clamped
/// to `[1e-7, 1 - 1e-7]` before the logs. Returns `(loss, dloss/dp)` where the
/// gradient is that of the clamped composite, i.e. zero outside the window.
pub fn bce_with_grad(p: f64, target: f64) -> (f64, f64) {
    let lo = BCE_CLAMP;
    let hi = 1.0 - BCE_CLAMP;
    let q = p.clamp(lo, hi);
    let loss = -(target * q.ln() + (1.0 - target) * (1.0 - q).ln());
    let grad = if p < lo || p > hi {
        0.0
    } else {
        -(target / q) + (1.0 - target) / (1.0 - q)
    };
    (loss, grad)
}

pub fn bce(p: f64, target: f64) -> f64 {
    bce_with_grad(p, target).0
}
