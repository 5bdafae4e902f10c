//! Windowed multi-layer perceptron with per-sample reverse-mode Jacobian.
//!
//! The network maps a `tau`-sample lag window onto one output value.
//! Inputs and targets pass through min-max affine maps fitted on the
//! training split only; hidden layers apply the configured activation and
//! the output layer is linear. Training works on the normalized scale, so
//! residuals and Jacobians here are normalized quantities, while
//! [`MlpModel::forward`] returns denormalized predictions.
//!
//! Parameter ordering (everywhere a flat vector is exchanged): layers in
//! order, weights before biases within a layer, weight matrices row-major
//! with one row per output neuron.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::window::{WindowConfig, WindowedDataset};
use crate::window::frame_windows;

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// One-dimensional affine normalization `x -> (x - center)/half_range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineNorm {
    pub center: f64,
    pub half_range: f64,
}

impl AffineNorm {
    pub fn identity() -> Self {
        AffineNorm { center: 0.0, half_range: 1.0 }
    }

    /// Min-max fit mapping the observed range onto [-1, 1]. A constant
    /// feature keeps a unit half-range so the map stays invertible.
    pub fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return AffineNorm::identity();
        }
        let center = 0.5 * (lo + hi);
        let half_range = 0.5 * (hi - lo);
        AffineNorm {
            center,
            half_range: if half_range > 0.0 { half_range } else { 1.0 },
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.center) / self.half_range
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.half_range + self.center
    }
}

/// The deep MLP: layer dimensions, parameters, activation choice and the
/// normalization maps.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    /// One `n_out x n_in` matrix per layer.
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    hidden_activation: Activation,
    input_norm: Vec<AffineNorm>,
    target_norm: AffineNorm,
}

/// The deep architecture used by default: `tau` inputs, 11 hidden layers
/// of 10 neurons, one output.
pub fn default_layer_sizes(tau: usize) -> Vec<usize> {
    let mut sizes = vec![tau];
    sizes.extend(std::iter::repeat(10).take(11));
    sizes.push(1);
    sizes
}

/// Initialize a model with uniform Glorot weights,
/// `U(+-sqrt(6/(fan_in+fan_out)))`, zero biases and identity
/// normalization. Deterministic per seed.
pub fn init_model(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<MlpModel> {
    if layer_sizes.len() < 2 {
        return Err(Error::domain(format!(
            "need at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::domain(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::domain(format!(
            "the output layer must have one neuron, got {layer_sizes:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for pair in layer_sizes.windows(2) {
        let (n_in, n_out) = (pair[0], pair[1]);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        // Row-major draw order so the parameter layout matches the
        // documented flat ordering.
        let mut w = DMatrix::zeros(n_out, n_in);
        for j in 0..n_out {
            for k in 0..n_in {
                w[(j, k)] = rng.random_range(-bound..bound);
            }
        }
        weights.push(w);
        biases.push(DVector::zeros(n_out));
    }
    Ok(MlpModel {
        layer_sizes: layer_sizes.to_vec(),
        weights,
        biases,
        hidden_activation: activation,
        input_norm: vec![AffineNorm::identity(); layer_sizes[0]],
        target_norm: AffineNorm::identity(),
    })
}

impl MlpModel {
    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|p| p[0] * p[1] + p[1])
            .sum()
    }

    /// Flat parameter vector in the documented ordering.
    pub fn params(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for j in 0..w.nrows() {
                for k in 0..w.ncols() {
                    v.push(w[(j, k)]);
                }
            }
            v.extend(b.iter().copied());
        }
        DVector::from_vec(v)
    }

    /// Overwrite all parameters from a flat vector in the documented
    /// ordering.
    pub fn set_params(&mut self, params: &DVector<f64>) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let mut idx = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for j in 0..w.nrows() {
                for k in 0..w.ncols() {
                    w[(j, k)] = params[idx];
                    idx += 1;
                }
            }
            for j in 0..b.len() {
                b[j] = params[idx];
                idx += 1;
            }
        }
        Ok(())
    }

    /// Fit the input and target min-max maps from the given rows (the
    /// trainer passes the training split only).
    pub fn fit_normalization(&mut self, d: &WindowedDataset, rows: &[usize]) -> Result<()> {
        if d.tau() != self.input_size() {
            return Err(Error::data(format!(
                "dataset tau {} does not match input size {}",
                d.tau(),
                self.input_size()
            )));
        }
        if rows.is_empty() {
            return Err(Error::domain(
                "cannot fit normalization on an empty row set".to_string(),
            ));
        }
        for k in 0..self.input_size() {
            self.input_norm[k] = AffineNorm::fit(rows.iter().map(|&i| d.row(i)[k]));
        }
        self.target_norm = AffineNorm::fit(rows.iter().map(|&i| d.target(i)));
        Ok(())
    }

    pub fn input_norm(&self) -> &[AffineNorm] {
        &self.input_norm
    }

    pub fn target_norm(&self) -> AffineNorm {
        self.target_norm
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.input_size() {
            return Err(Error::data(format!(
                "window length {} does not match input size {}",
                window.len(),
                self.input_size()
            )));
        }
        if window.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("window contains a non-finite value".to_string()));
        }
        Ok(())
    }

    /// Network output on the normalized scale for a raw window.
    fn net_normalized(&self, window: &[f64]) -> f64 {
        let mut z: Vec<f64> = window
            .iter()
            .zip(&self.input_norm)
            .map(|(x, n)| n.normalize(*x))
            .collect();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut next = vec![0.0; w.nrows()];
            for (j, out) in next.iter_mut().enumerate() {
                let mut acc = b[j];
                for k in 0..w.ncols() {
                    acc += w[(j, k)] * z[k];
                }
                *out = if l == last { acc } else { self.hidden_activation.apply(acc) };
            }
            z = next;
        }
        z[0]
    }

    /// Denormalized prediction for one raw window.
    pub fn forward(&self, window: &[f64]) -> Result<f64> {
        self.check_window(window)?;
        Ok(self.target_norm.denormalize(self.net_normalized(window)))
    }

    /// Predictions for a set of dataset rows; a pure per-row map.
    pub fn predict_rows(&self, d: &WindowedDataset, rows: &[usize]) -> Result<Vec<f64>> {
        rows.iter().map(|&i| self.forward(d.row(i))).collect()
    }

    /// Normalized residual `t_n - y_hat_n` for one row.
    pub fn residual_normalized(&self, window: &[f64], target: f64) -> Result<f64> {
        self.check_window(window)?;
        Ok(self.target_norm.normalize(target) - self.net_normalized(window))
    }

    /// Normalized residual vector and its Jacobian
    /// `J[i][p] = d residual_i / d param_p` over the given dataset rows,
    /// computed by per-sample reverse-mode differentiation.
    pub fn residual_jacobian(
        &self,
        d: &WindowedDataset,
        rows: &[usize],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if d.tau() != self.input_size() {
            return Err(Error::data(format!(
                "dataset tau {} does not match input size {}",
                d.tau(),
                self.input_size()
            )));
        }
        let n_params = self.n_params();
        let n_layers = self.weights.len();
        let mut residuals = DVector::zeros(rows.len());
        let mut jac = DMatrix::zeros(rows.len(), n_params);

        // Reused per-row buffers: activations per layer (z[0] is the
        // normalized input) and back-propagated deltas per layer.
        let mut z: Vec<Vec<f64>> = self.layer_sizes.iter().map(|&s| vec![0.0; s]).collect();
        let mut delta: Vec<Vec<f64>> =
            self.layer_sizes[1..].iter().map(|&s| vec![0.0; s]).collect();

        for (row_idx, &i) in rows.iter().enumerate() {
            let window = d.row(i);
            self.check_window(window)?;
            for (k, (x, n)) in window.iter().zip(&self.input_norm).enumerate() {
                z[0][k] = n.normalize(*x);
            }
            for l in 0..n_layers {
                let w = &self.weights[l];
                let b = &self.biases[l];
                let (prev, cur) = z.split_at_mut(l + 1);
                let prev = &prev[l];
                let cur = &mut cur[0];
                for j in 0..w.nrows() {
                    let mut acc = b[j];
                    for k in 0..w.ncols() {
                        acc += w[(j, k)] * prev[k];
                    }
                    cur[j] = if l == n_layers - 1 {
                        acc
                    } else {
                        self.hidden_activation.apply(acc)
                    };
                }
            }
            residuals[row_idx] =
                self.target_norm.normalize(d.target(i)) - z[n_layers][0];

            // d residual / d output = -1; push back through the layers.
            delta[n_layers - 1][0] = -1.0;
            for l in (0..n_layers.saturating_sub(1)).rev() {
                let w_next = &self.weights[l + 1];
                let (cur, next) = delta.split_at_mut(l + 1);
                let cur = &mut cur[l];
                let next = &next[0];
                for k in 0..cur.len() {
                    let mut acc = 0.0;
                    for j in 0..w_next.nrows() {
                        acc += w_next[(j, k)] * next[j];
                    }
                    cur[k] = acc * self.hidden_activation.derivative_from_output(z[l + 1][k]);
                }
            }

            // Gradients in the documented flat order.
            let mut offset = 0;
            for l in 0..n_layers {
                let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
                for j in 0..n_out {
                    let dj = delta[l][j];
                    for k in 0..n_in {
                        jac[(row_idx, offset + j * n_in + k)] = dj * z[l][k];
                    }
                }
                offset += n_out * n_in;
                for j in 0..n_out {
                    jac[(row_idx, offset + j)] = delta[l][j];
                }
                offset += n_out;
            }
        }
        Ok((residuals, jac))
    }

    /// Jacobian alone; see [`MlpModel::residual_jacobian`].
    pub fn jacobian(&self, d: &WindowedDataset, rows: &[usize]) -> Result<DMatrix<f64>> {
        Ok(self.residual_jacobian(d, rows)?.1)
    }

    /// Frame a signal and map every window through the model. The output
    /// is `tau - 1` samples shorter than the input and aligned to window
    /// ends.
    pub fn predict_series(&self, v: &Signal, cfg: &WindowConfig) -> Result<Signal> {
        if v.len() < cfg.tau {
            return Err(Error::data(format!(
                "signal of length {} is shorter than tau = {}",
                v.len(),
                cfg.tau
            )));
        }
        // Targets are unused here; frame against the input itself.
        let d = frame_windows(v, v, cfg)?;
        let rows: Vec<usize> = (0..d.n_rows()).collect();
        let preds = self.predict_rows(&d, &rows)?;
        Signal::new(preds, v.sample_rate() / cfg.stride as f64)
    }

    /// Write the model as versioned JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ModelFile::from(self);
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Load a model written by [`MlpModel::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<MlpModel> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        file.try_into()
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model layout. `version` is mandatory.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    input_norm: Vec<AffineNorm>,
    target_norm: AffineNorm,
    /// Row-major weight matrices, one per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        ModelFile {
            version: MODEL_FORMAT_VERSION,
            layer_sizes: m.layer_sizes.clone(),
            hidden_activation: m.hidden_activation,
            input_norm: m.input_norm.clone(),
            target_norm: m.target_norm,
            weights: m
                .weights
                .iter()
                .map(|w| {
                    let mut flat = Vec::with_capacity(w.len());
                    for j in 0..w.nrows() {
                        for k in 0..w.ncols() {
                            flat.push(w[(j, k)]);
                        }
                    }
                    flat
                })
                .collect(),
            biases: m.biases.iter().map(|b| b.iter().copied().collect()).collect(),
        }
    }
}

impl TryFrom<ModelFile> for MlpModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<MlpModel> {
        if f.version != MODEL_FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported model format version {}",
                f.version
            )));
        }
        let mut model = init_model(&f.layer_sizes, f.hidden_activation, 0)?;
        if f.input_norm.len() != model.input_size() {
            return Err(Error::data(format!(
                "input_norm length {} does not match input size {}",
                f.input_norm.len(),
                model.input_size()
            )));
        }
        if f.weights.len() != model.weights.len() || f.biases.len() != model.biases.len() {
            return Err(Error::data("layer count mismatch in model file".to_string()));
        }
        for (l, (wf, bf)) in f.weights.iter().zip(&f.biases).enumerate() {
            let (n_in, n_out) = (f.layer_sizes[l], f.layer_sizes[l + 1]);
            if wf.len() != n_in * n_out || bf.len() != n_out {
                return Err(Error::data(format!("layer {l} has wrong parameter counts")));
            }
            if wf.iter().chain(bf.iter()).any(|v| !v.is_finite()) {
                return Err(Error::data(format!("layer {l} has non-finite parameters")));
            }
            for j in 0..n_out {
                for k in 0..n_in {
                    model.weights[l][(j, k)] = wf[j * n_in + k];
                }
                model.biases[l][j] = bf[j];
            }
        }
        model.input_norm = f.input_norm;
        model.target_norm = f.target_norm;
        Ok(model)
    }
}
