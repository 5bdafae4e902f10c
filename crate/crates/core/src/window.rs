//! Sliding-window framing of time series for supervised learning.
//!
//! Row `i` of a framed dataset is the lag window
//! `x[i*stride .. i*stride + tau]` and its target is `y` at the window's
//! last index, so a model maps the previous `tau` input samples onto the
//! output at the window end. Nothing from the target series ever enters an
//! input row; [`audit_non_autoregressive`] re-checks that provenance
//! bit-for-bit.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Window length in samples.
    pub tau: usize,
    /// Samples between consecutive window starts.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    1
}

impl Default for WindowConfig {
    fn default() -> Self {
        // 2 seconds of history at 30 Hz.
        WindowConfig { tau: 60, stride: 1 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::domain("tau must be >= 1".to_string()));
        }
        if self.stride == 0 {
            return Err(Error::domain("stride must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Split membership of one dataset row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
        };
        f.write_str(s)
    }
}

/// Lag-window matrix with aligned targets and per-row split tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    tau: usize,
    stride: usize,
    /// Row-major `n_rows x tau` window matrix.
    inputs: Vec<f64>,
    targets: Vec<f64>,
    splits: Vec<Split>,
    sample_rate: f64,
}

impl WindowedDataset {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.tau..(i + 1) * self.tau]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn split(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Index into the source signals of row `i`'s last window sample (the
    /// instant the target is aligned to).
    pub fn window_end_index(&self, i: usize) -> usize {
        i * self.stride + self.tau - 1
    }

    /// Row indices belonging to one split.
    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Export as CSV with columns `x0..x{tau-1},target,split`.
    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for j in 0..self.tau {
            write!(out, "x{j},").expect("string write");
        }
        out.push_str("target,split\n");
        for i in 0..self.n_rows() {
            for v in self.row(i) {
                write!(out, "{v},").expect("string write");
            }
            writeln!(out, "{},{}", self.target(i), self.split(i)).expect("string write");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Frame `x` into lag windows with targets read from `y` at each window
/// end. Windows that would run past the end of the series are not emitted
/// and the first `tau - 1` targets are never predicted; nothing is padded.
pub fn frame_windows(x: &Signal, y: &Signal, cfg: &WindowConfig) -> Result<WindowedDataset> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::data(format!(
            "input and target lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if !x.same_rate(y) {
        return Err(Error::data(format!(
            "input and target sample rates differ: {} vs {}",
            x.sample_rate(),
            y.sample_rate()
        )));
    }
    if x.len() < cfg.tau {
        return Err(Error::data(format!(
            "series of length {} is shorter than tau = {}",
            x.len(),
            cfg.tau
        )));
    }
    let n_rows = (x.len() - cfg.tau) / cfg.stride + 1;
    let mut inputs = Vec::with_capacity(n_rows * cfg.tau);
    let mut targets = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let start = i * cfg.stride;
        inputs.extend_from_slice(&x.samples()[start..start + cfg.tau]);
        targets.push(y.samples()[start + cfg.tau - 1]);
    }
    Ok(WindowedDataset {
        tau: cfg.tau,
        stride: cfg.stride,
        inputs,
        targets,
        splits: vec![Split::Train; n_rows],
        sample_rate: x.sample_rate(),
    })
}

/// Assign rows at random (seeded) to train/test/validation with counts
/// `round(n * ratio)`; any rounding remainder goes to the training split.
///
/// `ratios` is ordered `(train, test, validation)`.
pub fn split_dataset(
    d: &WindowedDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<WindowedDataset> {
    let (r_train, r_test, r_val) = ratios;
    for (name, r) in [("train", r_train), ("test", r_test), ("validation", r_val)] {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::domain(format!(
                "{name} ratio must be non-negative, got {r}"
            )));
        }
    }
    if (r_train + r_test + r_val - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "split ratios must sum to 1, got {}",
            r_train + r_test + r_val
        )));
    }
    let n = d.n_rows();
    let n_test = (n as f64 * r_test).round() as usize;
    let n_val = (n as f64 * r_val).round() as usize;
    if n_test + n_val > n {
        return Err(Error::domain(format!(
            "rounded test+validation counts ({}) exceed row count {n}",
            n_test + n_val
        )));
    }
    let n_train = n - n_test - n_val;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut splits = vec![Split::Train; n];
    for &i in order.iter().skip(n_train).take(n_test) {
        splits[i] = Split::Test;
    }
    for &i in order.iter().skip(n_train + n_test) {
        splits[i] = Split::Validation;
    }
    Ok(WindowedDataset {
        splits,
        ..d.clone()
    })
}

/// Concatenate datasets row-wise. All parts must share tau, stride and
/// sample rate.
pub fn concat_datasets(parts: &[WindowedDataset]) -> Result<WindowedDataset> {
    let first = parts
        .first()
        .ok_or_else(|| Error::data("cannot concatenate zero datasets".to_string()))?;
    let mut out = first.clone();
    for d in &parts[1..] {
        if d.tau != first.tau || d.stride != first.stride {
            return Err(Error::data(format!(
                "window shapes differ: tau {} stride {} vs tau {} stride {}",
                d.tau, d.stride, first.tau, first.stride
            )));
        }
        if !crate::signal::rates_equal(d.sample_rate, first.sample_rate) {
            return Err(Error::data("sample rates differ across parts".to_string()));
        }
        out.inputs.extend_from_slice(&d.inputs);
        out.targets.extend_from_slice(&d.targets);
        out.splits.extend_from_slice(&d.splits);
    }
    Ok(out)
}

/// Verify that every input row is exactly a slice of the input source and
/// every target is exactly the target source at the window end — i.e. no
/// target value leaked into any input window.
pub fn audit_non_autoregressive(
    d: &WindowedDataset,
    input_source: &Signal,
    target_source: &Signal,
) -> Result<()> {
    for i in 0..d.n_rows() {
        let start = i * d.stride();
        let expected = &input_source.samples()[start..start + d.tau()];
        if d.row(i) != expected {
            return Err(Error::data(format!(
                "row {i} does not reproduce the input source slice at {start}"
            )));
        }
        let end = d.window_end_index(i);
        if d.target(i).to_bits() != target_source.samples()[end].to_bits() {
            return Err(Error::data(format!(
                "target {i} does not match the target source at index {end}"
            )));
        }
    }
    Ok(())
}
