//! Fully connected networks with explicit forward/backward passes.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

/// One dense layer; weights are `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Feed-forward network. Hidden layers use `activation`; the output layer
/// is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Per-layer inputs saved by [`Mlp::forward_cached`]; `acts[l]` is the
/// batch fed into layer `l`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Array2<f64>>,
}

/// Parameter gradients with the same shapes as the network.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            w: mlp.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            b: mlp.layers.iter().map(|l| Array1::zeros(l.b.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

impl Mlp {
    /// Xavier-uniform initialization, deterministic given the stream.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut ChaCha12Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (n_in, n_out) = (pair[0], pair[1]);
                let scale = (6.0 / (n_in + n_out) as f64).sqrt();
                let w = Array2::from_shape_fn((n_out, n_in), |_| rng.gen_range(-scale..scale));
                Linear {
                    w,
                    b: Array1::zeros(n_out),
                }
            })
            .collect();
        Mlp { layers, activation }
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2);
        let layers = sizes
            .windows(2)
            .map(|pair| Linear {
                w: Array2::zeros((pair[1], pair[0])),
                b: Array1::zeros(pair[1]),
            })
            .collect();
        Mlp { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    /// Checks that layer shapes chain and all entries are finite.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.layers.is_empty() {
            return Err(NnError::Shape("network has no layers".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].w.nrows() != pair[1].w.ncols() {
                return Err(NnError::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].w.nrows(),
                    i + 1,
                    pair[1].w.ncols()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.b.len() != l.w.nrows() {
                return Err(NnError::Shape(format!("layer {i} bias length mismatch")));
            }
            if l.w.iter().chain(l.b.iter()).any(|x| !x.is_finite()) {
                return Err(NnError::NonFinite(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Single-input forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input length {} does not match input dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("input has non-finite entries".into()));
        }
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        let out = self.forward_batch(&x);
        Ok(out.row(0).to_vec())
    }

    /// Batch forward pass without caches; rows are samples.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w.t());
            z += &layer.b;
            h = if l == last { z } else { apply(self.activation, z) };
        }
        h
    }

    /// Batch forward pass that keeps per-layer inputs for [`Self::backward`].
    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            acts.push(h.clone());
            let mut z = h.dot(&layer.w.t());
            z += &layer.b;
            h = if l == last { z } else { apply(self.activation, z) };
        }
        (h, MlpCache { acts })
    }

    /// Reverse pass: given `dL/d(output)`, returns parameter gradients and
    /// `dL/d(input)`.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            if l < self.layers.len() - 1 {
                // `acts[l + 1]` is the post-activation output of layer `l`.
                g = g * derivative_from_output(self.activation, &cache.acts[l + 1]);
            }
            grads.w[l] = g.t().dot(&cache.acts[l]);
            grads.b[l] = g.sum_axis(Axis(0));
            g = g.dot(&self.layers[l].w);
        }
        (grads, g)
    }

    /// Reverse pass computing only `dL/d(input)` (parameters frozen).
    pub fn backward_input(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> Array2<f64> {
        let mut g = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            if l < self.layers.len() - 1 {
                g = g * derivative_from_output(self.activation, &cache.acts[l + 1]);
            }
            g = g.dot(&self.layers[l].w);
        }
        g
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    /// Writes a flat parameter vector back into the network.
    pub fn assign_flat(&mut self, src: &[f64]) {
        assert_eq!(src.len(), self.n_params(), "flat parameter length mismatch");
        let mut offset = 0;
        for l in &mut self.layers {
            for w in l.w.iter_mut() {
                *w = src[offset];
                offset += 1;
            }
            for b in l.b.iter_mut() {
                *b = src[offset];
                offset += 1;
            }
        }
    }
}

fn apply(activation: Activation, mut z: Array2<f64>) -> Array2<f64> {
    match activation {
        Activation::Tanh => z.mapv_inplace(f64::tanh),
        Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
    }
    z
}

/// Activation derivative expressed through the activation's own output.
fn derivative_from_output(activation: Activation, h: &Array2<f64>) -> Array2<f64> {
    match activation {
        Activation::Tanh => h.mapv(|v| 1.0 - v * v),
        Activation::Relu => h.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
    }
}
