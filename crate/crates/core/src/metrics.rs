//! Evaluation criteria: normalized mean squared error and Fitting percent.
//!
//! Both series are normalized by the same constant, the peak magnitude of
//! the target. A per-series normalizer would let a prediction of the wrong
//! amplitude score perfectly, which would defeat the error measure, so the
//! target's peak is shared deliberately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// One evaluation of a predicted series against its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nmse: f64,
    pub fitting_percent: f64,
    pub n_samples: usize,
    /// The shared normalization constant `max |w|`.
    pub normalizer: f64,
}

fn check_lengths(target: &[f64], predicted: &[f64]) -> Result<()> {
    if target.len() != predicted.len() {
        return Err(Error::data(format!(
            "length mismatch: target {} vs prediction {}",
            target.len(),
            predicted.len()
        )));
    }
    if target.is_empty() {
        return Err(Error::data("cannot evaluate empty series".to_string()));
    }
    Ok(())
}

fn normalizer(target: &[f64]) -> Result<f64> {
    let m = target.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 {
        return Err(Error::data(
            "degenerate target: max |w| is zero, NMSE is undefined".to_string(),
        ));
    }
    Ok(m)
}

/// Mean squared error between the max-normalized target and prediction:
/// `(1/M) * sum ((w/max|w| - w_hat/max|w|)^2)`.
pub fn nmse(target: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(target, predicted)?;
    let m = normalizer(target)?;
    let sum: f64 = target
        .iter()
        .zip(predicted)
        .map(|(w, wh)| {
            let d = w / m - wh / m;
            d * d
        })
        .sum();
    Ok(sum / target.len() as f64)
}

/// Fitting percent, `100 * (1 - ||w_n - w_hat_n|| / ||w_n - mean(w_n)||)`,
/// with the same shared normalization as [`nmse`]. 100 is a perfect fit,
/// 0 matches the mean predictor and negative values are worse than it.
pub fn fitting(target: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(target, predicted)?;
    let m = normalizer(target)?;
    let n = target.len() as f64;
    let mean_n = target.iter().map(|w| w / m).sum::<f64>() / n;
    let dev: f64 = target
        .iter()
        .map(|w| {
            let d = w / m - mean_n;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    if dev == 0.0 {
        return Err(Error::data(
            "degenerate target: w is constant, Fitting is undefined".to_string(),
        ));
    }
    let resid: f64 = target
        .iter()
        .zip(predicted)
        .map(|(w, wh)| {
            let d = w / m - wh / m;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * (1.0 - resid / dev))
}

/// Evaluate both criteria at once.
pub fn evaluate(target: &[f64], predicted: &[f64]) -> Result<EvalReport> {
    Ok(EvalReport {
        nmse: nmse(target, predicted)?,
        fitting_percent: fitting(target, predicted)?,
        n_samples: target.len(),
        normalizer: normalizer(target)?,
    })
}

/// [`evaluate`] on signal values.
pub fn evaluate_signals(target: &Signal, predicted: &Signal) -> Result<EvalReport> {
    evaluate(target.samples(), predicted.samples())
}
