//! Full-batch Levenberg-Marquardt training.
//!
//! Each epoch solves the damped normal equations
//! `(J^T J + mu I) delta = J^T r` on the training split and applies
//! `theta <- theta - delta`. A candidate that reduces the training SSE is
//! accepted and relaxes the damping; otherwise the damping grows and the
//! same equations are re-solved until a step is accepted or `mu` exceeds
//! its ceiling. The validation split is used only for early stopping and
//! model selection: the parameters with the best validation SSE are the
//! ones returned.
//!
//! Residuals live on the normalized scale (see [`crate::mlp`]); the linear
//! solve is a plain Cholesky factorization of `J^T J + mu I` and nothing
//! else regularizes the step.

use std::fmt;

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::MlpModel;
use crate::window::{Split, WindowedDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    /// Initial damping.
    #[serde(default = "default_mu0")]
    pub mu0: f64,
    /// Damping multiplier after a rejected step.
    #[serde(default = "default_mu_increase")]
    pub mu_increase: f64,
    /// Damping multiplier after an accepted step.
    #[serde(default = "default_mu_decrease")]
    pub mu_decrease: f64,
    /// Training stops when the damping would exceed this ceiling.
    #[serde(default = "default_mu_max")]
    pub mu_max: f64,
    /// Maximum number of accepted steps.
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Stop when the gradient infinity-norm falls below this.
    #[serde(default = "default_min_gradient")]
    pub min_gradient: f64,
    /// Accepted steps without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Training itself is deterministic; this seed is used by callers that
    /// need to initialize a model for this configuration.
    #[serde(default)]
    pub seed: u64,
}

fn default_mu0() -> f64 {
    1e-3
}
fn default_mu_increase() -> f64 {
    10.0
}
fn default_mu_decrease() -> f64 {
    0.1
}
fn default_mu_max() -> f64 {
    1e10
}
fn default_max_epochs() -> usize {
    300
}
fn default_min_gradient() -> f64 {
    1e-7
}
fn default_patience() -> usize {
    6
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            mu0: default_mu0(),
            mu_increase: default_mu_increase(),
            mu_decrease: default_mu_decrease(),
            mu_max: default_mu_max(),
            max_epochs: default_max_epochs(),
            min_gradient: default_min_gradient(),
            patience: default_patience(),
            seed: 0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) {
            return Err(Error::domain(format!("mu0 must be positive, got {}", self.mu0)));
        }
        if !(self.mu_max > self.mu0) {
            return Err(Error::domain(format!(
                "mu_max ({}) must exceed mu0 ({})",
                self.mu_max, self.mu0
            )));
        }
        if !(self.mu_increase > 1.0) {
            return Err(Error::domain(format!(
                "mu_increase must be > 1, got {}",
                self.mu_increase
            )));
        }
        if !(self.mu_decrease > 0.0 && self.mu_decrease < 1.0) {
            return Err(Error::domain(format!(
                "mu_decrease must be in (0, 1), got {}",
                self.mu_decrease
            )));
        }
        if self.patience == 0 {
            return Err(Error::domain("patience must be >= 1".to_string()));
        }
        if !(self.min_gradient >= 0.0) {
            return Err(Error::domain(format!(
                "min_gradient must be non-negative, got {}",
                self.min_gradient
            )));
        }
        Ok(())
    }
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    MuExceeded,
    GradientSmall,
    ValidationPatience,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::MuExceeded => "mu_exceeded",
            StopReason::GradientSmall => "gradient_small",
            StopReason::ValidationPatience => "validation_patience",
        };
        f.write_str(s)
    }
}

/// One accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_sse: f64,
    pub validation_sse: f64,
    /// Damping value after the acceptance.
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub initial_train_sse: f64,
    pub initial_validation_sse: f64,
    pub best_validation_sse: f64,
    pub n_jacobian_evals: usize,
}

impl TrainingReport {
    pub fn accepted_steps(&self) -> usize {
        self.epochs.len()
    }
}

fn sse_over(m: &MlpModel, d: &WindowedDataset, rows: &[usize]) -> Result<f64> {
    let mut acc = 0.0;
    for &i in rows {
        let r = m.residual_normalized(d.row(i), d.target(i))?;
        acc += r * r;
    }
    Ok(acc)
}

/// Train on the dataset's train split with early stopping on its
/// validation split. Returns the best-validation model and the full
/// per-epoch record.
pub fn train_lm(
    model: &MlpModel,
    d: &WindowedDataset,
    cfg: &LmConfig,
) -> Result<(MlpModel, TrainingReport)> {
    let train_rows = d.rows_in(Split::Train);
    let val_rows = d.rows_in(Split::Validation);
    train_lm_with_rows(model, d, &train_rows, &val_rows, cfg)
}

/// [`train_lm`] with explicit row sets, for callers that manage their own
/// split assignment.
pub fn train_lm_with_rows(
    model: &MlpModel,
    d: &WindowedDataset,
    train_rows: &[usize],
    val_rows: &[usize],
    cfg: &LmConfig,
) -> Result<(MlpModel, TrainingReport)> {
    cfg.validate()?;
    if train_rows.is_empty() {
        return Err(Error::domain("training split is empty".to_string()));
    }
    if val_rows.is_empty() {
        return Err(Error::domain("validation split is empty".to_string()));
    }

    let mut m = model.clone();
    m.fit_normalization(d, train_rows)?;

    let mut params = m.params();
    let mut train_sse = sse_over(&m, d, train_rows)?;
    let initial_train_sse = train_sse;
    let initial_validation_sse = sse_over(&m, d, val_rows)?;
    let mut best_val = initial_validation_sse;
    let mut best_params = params.clone();

    let mut mu = cfg.mu0;
    let mut epochs = Vec::new();
    let mut n_jacobian_evals = 0;
    let mut patience_left = cfg.patience;

    let stop_reason = 'outer: loop {
        if epochs.len() >= cfg.max_epochs {
            break StopReason::MaxEpochs;
        }

        let (r, jac) = m.residual_jacobian(d, train_rows)?;
        n_jacobian_evals += 1;
        if r.iter().any(|v| !v.is_finite()) || jac.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "residuals or Jacobian are not finite".to_string(),
            ));
        }
        let gradient = jac.tr_mul(&r);
        if gradient.amax() < cfg.min_gradient {
            break StopReason::GradientSmall;
        }
        let normal = jac.tr_mul(&jac);
        let n_params = normal.nrows();

        // Retry the same normal equations with growing damping until a
        // step reduces the training SSE.
        loop {
            let mut damped = normal.clone();
            for i in 0..n_params {
                damped[(i, i)] += mu;
            }
            // mu can shrink so far below the gram matrix's scale that the
            // factorization fails numerically; that is a rejection, not a
            // fatal error, and the growing damping repairs it.
            let chol = match Cholesky::new(damped) {
                Some(c) => c,
                None => {
                    mu *= cfg.mu_increase;
                    if mu > cfg.mu_max {
                        break 'outer StopReason::MuExceeded;
                    }
                    continue;
                }
            };
            let delta: DVector<f64> = chol.solve(&gradient);
            let candidate = &params - &delta;
            m.set_params(&candidate)?;
            let candidate_sse = sse_over(&m, d, train_rows)?;

            if candidate_sse < train_sse {
                params = candidate;
                train_sse = candidate_sse;
                mu *= cfg.mu_decrease;
                break;
            }
            m.set_params(&params)?;
            mu *= cfg.mu_increase;
            if mu > cfg.mu_max {
                break 'outer StopReason::MuExceeded;
            }
        }

        let val_sse = sse_over(&m, d, val_rows)?;
        epochs.push(EpochRecord {
            epoch: epochs.len() + 1,
            train_sse,
            validation_sse: val_sse,
            mu,
        });
        if val_sse < best_val {
            best_val = val_sse;
            best_params = params.clone();
            patience_left = cfg.patience;
        } else {
            patience_left -= 1;
            if patience_left == 0 {
                break StopReason::ValidationPatience;
            }
        }
    };

    m.set_params(&best_params)?;
    Ok((
        m,
        TrainingReport {
            epochs,
            stop_reason,
            initial_train_sse,
            initial_validation_sse,
            best_validation_sse: best_val,
            n_jacobian_evals,
        },
    ))
}
