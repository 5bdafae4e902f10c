//! Hybrid grey-box identification of IPMC soft actuators.
//!
//! The library couples a distributed-RC circuit model of an ionic
//! polymer-metal composite (IPMC) strip with a windowed multi-layer
//! perceptron trained by Levenberg-Marquardt. The circuit converts the
//! stimulus voltage `V_i(t)` into a mediatory tip-voltage signal `V_o(t)`
//! that is far closer in shape to the tip displacement `w(t)` than the raw
//! stimulus; the network then maps fixed-length windows of `V_o` onto
//! `w(t)` without ever consuming past outputs (a non-autoregressive
//! structure).
//!
//! Modules:
//! - [`circuit`]: the cascaded RC compartment model and its time-domain
//!   simulation.
//! - [`stimulus`]: PRBS / sine / chirp / pulse excitation generators.
//! - [`window`]: sliding-window dataset framing and split assignment.
//! - [`mlp`] / [`lm`]: the perceptron and the Levenberg-Marquardt trainer.
//! - [`metrics`]: NMSE and Fitting evaluation criteria.
//! - [`estimate`]: derivative-free estimation of the circuit's unknown
//!   interface parameters.
//! - [`plant`]: a synthetic actuator surrogate and recording ingestion.
//! - [`pipeline`] / [`report`]: the end-to-end Hybrid-vs-Normal experiment.

pub mod circuit;
pub mod error;
pub mod estimate;
pub mod lm;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod plant;
pub mod report;
pub mod seeds;
pub mod signal;
pub mod stimulus;
pub mod window;

pub use circuit::{CascadeModel, ClampValues, PhysicalParams, StageTF};
pub use error::{Error, Result};
pub use lm::{LmConfig, StopReason, TrainingReport};
pub use metrics::EvalReport;
pub use mlp::MlpModel;
pub use pipeline::{ExperimentConfig, ExperimentReport};
pub use plant::PlantSpec;
pub use signal::Signal;
pub use stimulus::StimulusSpec;
pub use window::{Split, WindowConfig, WindowedDataset};
