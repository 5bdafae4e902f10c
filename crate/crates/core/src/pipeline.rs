//! The full Hybrid-vs-Normal experiment.
//!
//! For each stimulus the pipeline obtains a `(v_i, w)` pair (from the
//! synthetic plant or an ingested recording), simulates the circuit to get
//! the mediatory tip voltage, frames both the tip voltage (Hybrid path)
//! and the raw stimulus (Normal path) into identical windows, trains one
//! model per path from the same initialization, and evaluates both on the
//! shared test split. The two paths differ in nothing but the window
//! source signal: seeds, architecture, split assignment and training
//! budget are all shared.
//!
//! Every random choice derives from the global seed through named child
//! seeds recorded in the report, so a rerun with the same configuration
//! reproduces every output byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_cascade, simulate_cascade, CascadeModel, PhysicalParams};
use crate::error::{Error, Result};
use crate::estimate::{estimate_params, EstimationProblem, Objective, ParamBounds};
use crate::lm::{train_lm, LmConfig, StopReason};
use crate::metrics::evaluate;
use crate::mlp::{init_model, Activation, MlpModel};
use crate::plant::{ingest_recording, plant_response, PlantSpec};
use crate::report;
use crate::seeds::child_seed;
use crate::signal::Signal;
use crate::stimulus::{generate_stimulus, StimulusSpec};
use crate::window::{
    audit_non_autoregressive, concat_datasets, frame_windows, split_dataset, Split,
    WindowConfig, WindowedDataset,
};

/// Synthetic plant settings; the reference cascade is built from its own
/// parameter set, independent of the circuit the hybrid path uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    #[serde(default = "PhysicalParams::reference")]
    pub params: PhysicalParams,
    #[serde(default = "default_n_stages")]
    pub n_stages: usize,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    #[serde(default = "default_a1")]
    pub a1: f64,
    #[serde(default = "default_a3")]
    pub a3: f64,
    #[serde(default = "default_pole")]
    pub pole: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
}

fn default_n_stages() -> usize {
    45
}
fn default_oversample() -> usize {
    16
}
fn default_a1() -> f64 {
    1.0
}
fn default_a3() -> f64 {
    -0.15
}
fn default_pole() -> f64 {
    3.0
}
fn default_noise_std() -> f64 {
    0.005
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            params: PhysicalParams::reference(),
            n_stages: default_n_stages(),
            oversample: default_oversample(),
            a1: default_a1(),
            a3: default_a3(),
            pole: default_pole(),
            noise_std: default_noise_std(),
        }
    }
}

impl PlantConfig {
    pub fn to_spec(&self, seed: u64) -> Result<PlantSpec> {
        Ok(PlantSpec {
            cascade: build_cascade(&self.params, self.n_stages)?,
            a1: self.a1,
            a3: self.a3,
            pole: self.pole,
            noise_std: self.noise_std,
            seed,
            oversample: self.oversample,
        })
    }
}

/// Where `(v_i, w)` pairs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Plant(PlantConfig),
    /// Recording CSV per stimulus name.
    Recordings { paths: BTreeMap<String, PathBuf> },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Plant(PlantConfig::default())
    }
}

/// The circuit the hybrid path simulates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitConfig {
    #[serde(default = "PhysicalParams::reference")]
    pub params: PhysicalParams,
    #[serde(default = "default_n_stages")]
    pub n_stages: usize,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    /// Re-estimate the unknown interface parameters from the first
    /// stimulus's data before running (the strip is one physical object,
    /// so one estimate serves all stimuli).
    #[serde(default)]
    pub estimate: bool,
    #[serde(default = "default_restarts")]
    pub estimation_restarts: usize,
    #[serde(default = "ParamBounds::default_box")]
    pub bounds: ParamBounds,
}

fn default_restarts() -> usize {
    8
}

impl Default for CircuitConfig {
    fn default() -> Self {
        CircuitConfig {
            params: PhysicalParams::reference(),
            n_stages: default_n_stages(),
            oversample: default_oversample(),
            estimate: false,
            estimation_restarts: default_restarts(),
            bounds: ParamBounds::default_box(),
        }
    }
}

/// Network architecture and training budget shared by both paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Hidden layer widths; the input width is the window length and the
    /// output is one neuron. [`crate::mlp::default_layer_sizes`] gives the
    /// full-depth architecture; the desk default is smaller so a complete
    /// run stays in laptop territory.
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_lm")]
    pub lm: LmConfig,
}

fn default_hidden_layers() -> Vec<usize> {
    vec![10, 10]
}
fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_lm() -> LmConfig {
    LmConfig {
        max_epochs: 60,
        ..LmConfig::default()
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden_layers: default_hidden_layers(),
            activation: default_activation(),
            lm: default_lm(),
        }
    }
}

impl NetConfig {
    pub fn layer_sizes(&self, tau: usize) -> Vec<usize> {
        let mut sizes = vec![tau];
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(1);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "StimulusSpec::default_suite")]
    pub stimuli: Vec<StimulusSpec>,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub circuit: CircuitConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub net: NetConfig,
    /// `(train, test, validation)` fractions.
    #[serde(default = "default_split_ratios")]
    pub split_ratios: (f64, f64, f64),
    /// Train one model per path over all stimuli pooled, instead of one
    /// model per stimulus.
    #[serde(default)]
    pub pooled: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_split_ratios() -> (f64, f64, f64) {
    (0.3, 0.5, 0.2)
}
fn default_seed() -> u64 {
    42
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            stimuli: StimulusSpec::default_suite(),
            data: DataSource::default(),
            circuit: CircuitConfig::default(),
            window: WindowConfig::default(),
            net: NetConfig::default(),
            split_ratios: default_split_ratios(),
            pooled: false,
            seed: default_seed(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Stimuli with de-duplicated names, in configuration order.
    pub fn named_stimuli(&self) -> Vec<(String, StimulusSpec)> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        self.stimuli
            .iter()
            .map(|spec| {
                let base = spec.name().to_string();
                let count = seen.entry(base.clone()).or_insert(0);
                *count += 1;
                let name = if *count == 1 {
                    base
                } else {
                    format!("{base}_{count}")
                };
                (name, spec.clone())
            })
            .collect()
    }
}

/// Child seeds used for one stimulus, recorded for auditability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusSeeds {
    pub plant: u64,
    pub split: u64,
    pub init: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusRow {
    pub name: String,
    pub nmse_hybrid: f64,
    pub nmse_normal: f64,
    pub fitting_hybrid: f64,
    pub fitting_normal: f64,
    pub n_test_rows: usize,
    pub hybrid_stop: StopReason,
    pub normal_stop: StopReason,
    pub hybrid_epochs: usize,
    pub normal_epochs: usize,
    pub audit_passed: bool,
    pub seeds: StimulusSeeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryAverages {
    pub nmse_hybrid: f64,
    pub nmse_normal: f64,
    pub fitting_hybrid: f64,
    pub fitting_normal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub global_seed: u64,
    pub pooled: bool,
    pub rows: Vec<StimulusRow>,
    pub failures: Vec<StimulusFailure>,
    pub averages: Option<SummaryAverages>,
}

impl ExperimentReport {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn compute_averages(rows: &[StimulusRow]) -> Option<SummaryAverages> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    Some(SummaryAverages {
        nmse_hybrid: rows.iter().map(|r| r.nmse_hybrid).sum::<f64>() / n,
        nmse_normal: rows.iter().map(|r| r.nmse_normal).sum::<f64>() / n,
        fitting_hybrid: rows.iter().map(|r| r.fitting_hybrid).sum::<f64>() / n,
        fitting_normal: rows.iter().map(|r| r.fitting_normal).sum::<f64>() / n,
    })
}

/// Obtain the `(v_i, w)` pair for one stimulus.
fn obtain_data(
    cfg: &ExperimentConfig,
    name: &str,
    spec: &StimulusSpec,
) -> Result<(Signal, Signal)> {
    match &cfg.data {
        DataSource::Plant(pc) => {
            let v_i = generate_stimulus(spec)?;
            let plant = pc.to_spec(child_seed(cfg.seed, &["plant", name]))?;
            let w = plant_response(&plant, &v_i)?;
            Ok((v_i, w))
        }
        DataSource::Recordings { paths } => {
            let path = paths.get(name).ok_or_else(|| {
                Error::data(format!("no recording path configured for stimulus '{name}'"))
            })?;
            ingest_recording(path)
        }
    }
}

struct OutputDirs {
    signals: PathBuf,
    models: PathBuf,
    reports: PathBuf,
}

impl OutputDirs {
    fn create(out_dir: &Path) -> Result<Self> {
        let dirs = OutputDirs {
            signals: out_dir.join("signals"),
            models: out_dir.join("models"),
            reports: out_dir.join("reports"),
        };
        std::fs::create_dir_all(&dirs.signals)?;
        std::fs::create_dir_all(&dirs.models)?;
        std::fs::create_dir_all(&dirs.reports)?;
        Ok(dirs)
    }
}

/// Write `time,target,hybrid,normal` for the window-end-aligned samples.
fn write_series_csv(
    path: &Path,
    w: &Signal,
    pred_hybrid: &Signal,
    pred_normal: &Signal,
    window: &WindowConfig,
) -> Result<()> {
    let mut out = String::from("time,target,hybrid,normal\n");
    for i in 0..pred_hybrid.len() {
        let idx = i * window.stride + window.tau - 1;
        writeln!(
            out,
            "{},{},{},{}",
            w.time_at(idx),
            w.samples()[idx],
            pred_hybrid.samples()[i],
            pred_normal.samples()[i]
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_split_tags_csv(path: &Path, d: &WindowedDataset, w: &Signal) -> Result<()> {
    let mut out = String::from("time_s,split\n");
    for i in 0..d.n_rows() {
        writeln!(out, "{},{}", w.time_at(d.window_end_index(i)), d.split(i))
            .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Everything computed for one stimulus before metric extraction.
struct PreparedStimulus {
    name: String,
    v_i: Signal,
    w: Signal,
    hybrid_source: Signal,
    dataset_hybrid: WindowedDataset,
    dataset_normal: WindowedDataset,
    seeds: StimulusSeeds,
}

fn prepare_stimulus(
    cfg: &ExperimentConfig,
    cascade: &CascadeModel,
    name: &str,
    spec: &StimulusSpec,
    split_seed: u64,
) -> Result<PreparedStimulus> {
    let (v_i, w) = obtain_data(cfg, name, spec)?;
    let hybrid_source = simulate_cascade(cascade, &v_i, cfg.circuit.oversample)?;

    let unsplit_h = frame_windows(&hybrid_source, &w, &cfg.window)?;
    let unsplit_n = frame_windows(&v_i, &w, &cfg.window)?;
    // One assignment serves both paths: same seed, same row count.
    let dataset_hybrid = split_dataset(&unsplit_h, cfg.split_ratios, split_seed)?;
    let dataset_normal = split_dataset(&unsplit_n, cfg.split_ratios, split_seed)?;
    debug_assert_eq!(dataset_hybrid.splits(), dataset_normal.splits());

    audit_non_autoregressive(&dataset_hybrid, &hybrid_source, &w)?;
    audit_non_autoregressive(&dataset_normal, &v_i, &w)?;

    Ok(PreparedStimulus {
        name: name.to_string(),
        v_i,
        w,
        hybrid_source,
        dataset_hybrid,
        dataset_normal,
        seeds: StimulusSeeds {
            plant: child_seed(cfg.seed, &["plant", name]),
            split: split_seed,
            init: 0, // filled by the caller
        },
    })
}

/// Train both paths from one initialization and evaluate on the shared
/// test rows.
struct PairOutcome {
    model_hybrid: MlpModel,
    model_normal: MlpModel,
    report_hybrid: crate::lm::TrainingReport,
    report_normal: crate::lm::TrainingReport,
}

fn train_pair(
    cfg: &ExperimentConfig,
    d_hybrid: &WindowedDataset,
    d_normal: &WindowedDataset,
    init_seed: u64,
) -> Result<PairOutcome> {
    let sizes = cfg.net.layer_sizes(cfg.window.tau);
    let model = init_model(&sizes, cfg.net.activation, init_seed)?;
    let (model_hybrid, report_hybrid) = train_lm(&model, d_hybrid, &cfg.net.lm)?;
    let (model_normal, report_normal) = train_lm(&model, d_normal, &cfg.net.lm)?;
    Ok(PairOutcome {
        model_hybrid,
        model_normal,
        report_hybrid,
        report_normal,
    })
}

/// Evaluate a model pair on the shared test rows, write the plot-ready
/// series and split tags, and assemble the report row.
fn evaluate_pair(
    cfg: &ExperimentConfig,
    dirs: &OutputDirs,
    prep: &PreparedStimulus,
    pair: &PairOutcome,
) -> Result<StimulusRow> {
    let name = &prep.name;
    let test_rows = prep.dataset_hybrid.rows_in(Split::Test);
    let targets: Vec<f64> = test_rows.iter().map(|&i| prep.dataset_hybrid.target(i)).collect();
    let preds_h = pair.model_hybrid.predict_rows(&prep.dataset_hybrid, &test_rows)?;
    let preds_n = pair.model_normal.predict_rows(&prep.dataset_normal, &test_rows)?;
    let eval_h = evaluate(&targets, &preds_h)?;
    let eval_n = evaluate(&targets, &preds_n)?;

    let series_h = pair.model_hybrid.predict_series(&prep.hybrid_source, &cfg.window)?;
    let series_n = pair.model_normal.predict_series(&prep.v_i, &cfg.window)?;

    prep.v_i
        .clone()
        .with_label(format!("{name}_v_in"))
        .write_csv(dirs.signals.join(format!("{name}_v_in.csv")))?;
    prep.hybrid_source
        .clone()
        .with_label(format!("{name}_v_o"))
        .write_csv(dirs.signals.join(format!("{name}_v_o.csv")))?;
    write_series_csv(
        &dirs.signals.join(format!("{name}_target_hybrid_normal.csv")),
        &prep.w,
        &series_h,
        &series_n,
        &cfg.window,
    )?;
    write_split_tags_csv(
        &dirs.signals.join(format!("{name}_split_tags.csv")),
        &prep.dataset_hybrid,
        &prep.w,
    )?;

    Ok(StimulusRow {
        name: name.clone(),
        nmse_hybrid: eval_h.nmse,
        nmse_normal: eval_n.nmse,
        fitting_hybrid: eval_h.fitting_percent,
        fitting_normal: eval_n.fitting_percent,
        n_test_rows: test_rows.len(),
        hybrid_stop: pair.report_hybrid.stop_reason,
        normal_stop: pair.report_normal.stop_reason,
        hybrid_epochs: pair.report_hybrid.accepted_steps(),
        normal_epochs: pair.report_normal.accepted_steps(),
        audit_passed: true,
        seeds: prep.seeds,
    })
}

fn save_pair(dirs: &OutputDirs, name: &str, pair: &PairOutcome) -> Result<()> {
    pair.model_hybrid.save(dirs.models.join(format!("{name}_hybrid.json")))?;
    pair.model_normal.save(dirs.models.join(format!("{name}_normal.json")))?;
    write_json(
        &dirs.reports.join(format!("{name}_hybrid_training.json")),
        &pair.report_hybrid,
    )?;
    write_json(
        &dirs.reports.join(format!("{name}_normal_training.json")),
        &pair.report_normal,
    )?;
    Ok(())
}

fn load_pair(dirs: &OutputDirs, name: &str) -> Result<PairOutcome> {
    let model_path = |suffix: &str| dirs.models.join(format!("{name}_{suffix}.json"));
    let report_path = |suffix: &str| dirs.reports.join(format!("{name}_{suffix}_training.json"));
    let read_report = |suffix: &str| -> Result<crate::lm::TrainingReport> {
        let path = report_path(suffix);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::data(format!(
                "cannot read {} (train this stimulus first): {e}",
                path.display()
            ))
        })?;
        Ok(serde_json::from_str(&text)?)
    };
    Ok(PairOutcome {
        model_hybrid: MlpModel::load(model_path("hybrid"))?,
        model_normal: MlpModel::load(model_path("normal"))?,
        report_hybrid: read_report("hybrid")?,
        report_normal: read_report("normal")?,
    })
}

fn run_one_stimulus(
    cfg: &ExperimentConfig,
    cascade: &CascadeModel,
    dirs: &OutputDirs,
    name: &str,
    spec: &StimulusSpec,
) -> Result<StimulusRow> {
    let split_seed = child_seed(cfg.seed, &["split", name]);
    let init_seed = child_seed(cfg.seed, &["init", name]);
    let mut prep = prepare_stimulus(cfg, cascade, name, spec, split_seed)?;
    prep.seeds.init = init_seed;
    let pair = train_pair(cfg, &prep.dataset_hybrid, &prep.dataset_normal, init_seed)?;
    save_pair(dirs, name, &pair)?;
    evaluate_pair(cfg, dirs, &prep, &pair)
}

fn run_pooled(
    cfg: &ExperimentConfig,
    cascade: &CascadeModel,
    dirs: &OutputDirs,
    stimuli: &[(String, StimulusSpec)],
) -> Result<(Vec<StimulusRow>, Vec<StimulusFailure>)> {
    let split_seed = child_seed(cfg.seed, &["split", "pooled"]);
    let init_seed = child_seed(cfg.seed, &["init", "pooled"]);

    let mut prepared = Vec::new();
    for (name, spec) in stimuli {
        prepared.push(prepare_stimulus(cfg, cascade, name, spec, split_seed)?);
    }
    // Pool the per-stimulus frames, then split once across the pool.
    let pooled_h = concat_datasets(
        &prepared.iter().map(|p| p.dataset_hybrid.clone()).collect::<Vec<_>>(),
    )?;
    let pooled_n = concat_datasets(
        &prepared.iter().map(|p| p.dataset_normal.clone()).collect::<Vec<_>>(),
    )?;
    let pooled_h = split_dataset(&pooled_h, cfg.split_ratios, split_seed)?;
    let pooled_n = split_dataset(&pooled_n, cfg.split_ratios, split_seed)?;

    let pair = train_pair(cfg, &pooled_h, &pooled_n, init_seed)?;
    pair.model_hybrid.save(dirs.models.join("pooled_hybrid.json"))?;
    pair.model_normal.save(dirs.models.join("pooled_normal.json"))?;
    write_json(&dirs.reports.join("pooled_hybrid_training.json"), &pair.report_hybrid)?;
    write_json(&dirs.reports.join("pooled_normal_training.json"), &pair.report_normal)?;

    let mut rows = Vec::new();
    let mut offset = 0usize;
    for prep in &prepared {
        let n = prep.dataset_hybrid.n_rows();
        let test_rows: Vec<usize> = (offset..offset + n)
            .filter(|&i| pooled_h.split(i) == Split::Test)
            .collect();
        let targets: Vec<f64> = test_rows.iter().map(|&i| pooled_h.target(i)).collect();
        let preds_h = pair.model_hybrid.predict_rows(&pooled_h, &test_rows)?;
        let preds_n = pair.model_normal.predict_rows(&pooled_n, &test_rows)?;
        let eval_h = evaluate(&targets, &preds_h)?;
        let eval_n = evaluate(&targets, &preds_n)?;

        let series_h = pair.model_hybrid.predict_series(&prep.hybrid_source, &cfg.window)?;
        let series_n = pair.model_normal.predict_series(&prep.v_i, &cfg.window)?;
        write_series_csv(
            &dirs.signals.join(format!("{}_target_hybrid_normal.csv", prep.name)),
            &prep.w,
            &series_h,
            &series_n,
            &cfg.window,
        )?;

        rows.push(StimulusRow {
            name: prep.name.clone(),
            nmse_hybrid: eval_h.nmse,
            nmse_normal: eval_n.nmse,
            fitting_hybrid: eval_h.fitting_percent,
            fitting_normal: eval_n.fitting_percent,
            n_test_rows: test_rows.len(),
            hybrid_stop: pair.report_hybrid.stop_reason,
            normal_stop: pair.report_normal.stop_reason,
            hybrid_epochs: pair.report_hybrid.accepted_steps(),
            normal_epochs: pair.report_normal.accepted_steps(),
            audit_passed: true,
            seeds: StimulusSeeds {
                plant: child_seed(cfg.seed, &["plant", &prep.name]),
                split: split_seed,
                init: init_seed,
            },
        });
        offset += n;
    }
    Ok((rows, Vec::new()))
}

/// Resolve the circuit the hybrid path will simulate, estimating the
/// unknown parameters from the first stimulus's data when asked to.
pub fn resolve_circuit(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<(PhysicalParams, CascadeModel)> {
    let params = if cfg.circuit.estimate {
        let (name, spec) = cfg
            .named_stimuli()
            .into_iter()
            .next()
            .ok_or_else(|| Error::domain("config has no stimuli".to_string()))?;
        let (v_i, w) = obtain_data(cfg, &name, &spec)?;
        let problem = EstimationProblem {
            v_i,
            w,
            n_stages: cfg.circuit.n_stages,
            oversample: cfg.circuit.oversample,
            template: cfg.circuit.params,
            bounds: cfg.circuit.bounds,
            objective: Objective::AffineNmse,
        };
        let result = estimate_params(
            &problem,
            cfg.circuit.estimation_restarts,
            child_seed(cfg.seed, &["estimate"]),
        )?;
        if let Some(dir) = out_dir {
            write_json(&dir.join("estimation.json"), &result)?;
            report::write_estimation_trace(&dir.join("estimation_trace.csv"), &result)?;
        }
        result.params
    } else {
        cfg.circuit.params
    };
    let cascade = build_cascade(&params, cfg.circuit.n_stages)?;
    Ok((params, cascade))
}

/// Load the circuit parameters an earlier run resolved into `out_dir`, or
/// resolve them afresh (estimating if configured).
fn circuit_for(cfg: &ExperimentConfig, out_dir: &Path) -> Result<CascadeModel> {
    let saved = out_dir.join("circuit_params.json");
    if saved.exists() {
        let text = std::fs::read_to_string(&saved)?;
        let params: PhysicalParams = serde_json::from_str(&text)?;
        return build_cascade(&params, cfg.circuit.n_stages);
    }
    let (params, cascade) = resolve_circuit(cfg, Some(out_dir))?;
    write_json(&saved, &params)?;
    Ok(cascade)
}

/// Train and save both models for every stimulus, without evaluation.
/// Returns the trained names and the per-stimulus failures.
pub fn train_only(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<(Vec<String>, Vec<StimulusFailure>)> {
    let stimuli = cfg.named_stimuli();
    if stimuli.is_empty() {
        return Err(Error::domain("config must list at least one stimulus".to_string()));
    }
    let dirs = OutputDirs::create(out_dir)?;
    let cascade = circuit_for(cfg, out_dir)?;
    let outcomes: Vec<(String, Result<()>)> = stimuli
        .par_iter()
        .map(|(name, spec)| {
            let outcome = (|| {
                let split_seed = child_seed(cfg.seed, &["split", name]);
                let init_seed = child_seed(cfg.seed, &["init", name]);
                let prep = prepare_stimulus(cfg, &cascade, name, spec, split_seed)?;
                let pair =
                    train_pair(cfg, &prep.dataset_hybrid, &prep.dataset_normal, init_seed)?;
                save_pair(&dirs, name, &pair)
            })();
            (name.clone(), outcome)
        })
        .collect();
    let mut trained = Vec::new();
    let mut failures = Vec::new();
    for (name, outcome) in outcomes {
        match outcome {
            Ok(()) => trained.push(name),
            Err(e) => failures.push(StimulusFailure { name, error: e.to_string() }),
        }
    }
    Ok((trained, failures))
}

/// Evaluate models previously saved under `out_dir` (by [`train_only`] or
/// [`run_experiment`]): data is regenerated deterministically from the
/// configuration, the saved models are loaded and the report rewritten.
pub fn evaluate_saved(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    let stimuli = cfg.named_stimuli();
    if stimuli.is_empty() {
        return Err(Error::domain("config must list at least one stimulus".to_string()));
    }
    let dirs = OutputDirs::create(out_dir)?;
    let cascade = circuit_for(cfg, out_dir)?;
    let outcomes: Vec<(String, Result<StimulusRow>)> = stimuli
        .par_iter()
        .map(|(name, spec)| {
            let outcome = (|| {
                let split_seed = child_seed(cfg.seed, &["split", name]);
                let mut prep = prepare_stimulus(cfg, &cascade, name, spec, split_seed)?;
                prep.seeds.init = child_seed(cfg.seed, &["init", name]);
                let pair = load_pair(&dirs, name)?;
                evaluate_pair(cfg, &dirs, &prep, &pair)
            })();
            (name.clone(), outcome)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (name, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(StimulusFailure { name, error: e.to_string() }),
        }
    }
    let report = ExperimentReport {
        global_seed: cfg.seed,
        pooled: cfg.pooled,
        averages: compute_averages(&rows),
        rows,
        failures,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    report::write_outputs(&report, out_dir)?;
    Ok(report)
}

/// Run the whole experiment, writing per-stimulus series, models, training
/// reports, `report.json`, `report.txt` and `summary.csv` under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    let stimuli = cfg.named_stimuli();
    if stimuli.is_empty() {
        return Err(Error::domain("config must list at least one stimulus".to_string()));
    }
    cfg.window.validate()?;
    let dirs = OutputDirs::create(out_dir)?;
    let (params, cascade) = resolve_circuit(cfg, Some(out_dir))?;
    write_json(&out_dir.join("circuit_params.json"), &params)?;
    write_json(&out_dir.join("cascade.json"), &cascade)?;

    let (mut rows, mut failures) = (Vec::new(), Vec::new());
    if cfg.pooled {
        let (r, f) = run_pooled(cfg, &cascade, &dirs, &stimuli)?;
        rows = r;
        failures = f;
    } else {
        // Stimuli are independent; run them in parallel and keep
        // configuration order in the report.
        let outcomes: Vec<(String, Result<StimulusRow>)> = stimuli
            .par_iter()
            .map(|(name, spec)| {
                (
                    name.clone(),
                    run_one_stimulus(cfg, &cascade, &dirs, name, spec),
                )
            })
            .collect();
        for (name, outcome) in outcomes {
            match outcome {
                Ok(row) => rows.push(row),
                Err(e) => failures.push(StimulusFailure {
                    name,
                    error: e.to_string(),
                }),
            }
        }
    }

    let report = ExperimentReport {
        global_seed: cfg.seed,
        pooled: cfg.pooled,
        averages: compute_averages(&rows),
        rows,
        failures,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    report::write_outputs(&report, out_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::StimulusKind;

    /// A deliberately small configuration for integration-style tests.
    pub(crate) fn tiny_config(seed: u64) -> ExperimentConfig {
        let stimuli = vec![
            StimulusSpec {
                kind: StimulusKind::Prbs {
                    bit_duration: 1.0,
                    lfsr_order: 7,
                    seed: 0b101_0101,
                },
                amplitude: 2.0,
                duration: 30.0,
                sample_rate: 30.0,
                label: None,
            },
            StimulusSpec {
                kind: StimulusKind::Sine { frequency: 0.25 },
                amplitude: 2.0,
                duration: 30.0,
                sample_rate: 30.0,
                label: None,
            },
        ];
        ExperimentConfig {
            stimuli,
            data: DataSource::Plant(PlantConfig {
                n_stages: 10,
                ..PlantConfig::default()
            }),
            circuit: CircuitConfig {
                n_stages: 10,
                ..CircuitConfig::default()
            },
            net: NetConfig {
                hidden_layers: vec![6],
                lm: LmConfig {
                    max_epochs: 8,
                    ..LmConfig::default()
                },
                ..NetConfig::default()
            },
            seed,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn report_is_structurally_complete() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(7);
        let report = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.failures.is_empty());
        assert!(report.averages.is_some());
        for row in &report.rows {
            assert!(row.audit_passed);
            assert!(row.n_test_rows > 0);
        }
        for file in [
            "report.json",
            "report.txt",
            "summary.csv",
            "circuit_params.json",
            "cascade.json",
        ] {
            assert!(dir.path().join(file).exists(), "missing {file}");
        }
        for name in ["prbs", "sine"] {
            for suffix in [
                "v_in.csv",
                "v_o.csv",
                "target_hybrid_normal.csv",
                "split_tags.csv",
            ] {
                let p = dir.path().join("signals").join(format!("{name}_{suffix}"));
                assert!(p.exists(), "missing {}", p.display());
            }
            assert!(dir.path().join("models").join(format!("{name}_hybrid.json")).exists());
            assert!(dir.path().join("models").join(format!("{name}_normal.json")).exists());
        }
    }

    #[test]
    fn averages_are_arithmetic_means() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&tiny_config(3), dir.path()).unwrap();
        let avg = report.averages.unwrap();
        let n = report.rows.len() as f64;
        let mean: f64 = report.rows.iter().map(|r| r.nmse_hybrid).sum::<f64>() / n;
        assert!((avg.nmse_hybrid - mean).abs() < 1e-12);
        let mean_fit: f64 = report.rows.iter().map(|r| r.fitting_normal).sum::<f64>() / n;
        assert!((avg.fitting_normal - mean_fit).abs() < 1e-12);
    }

    #[test]
    fn series_csv_has_four_columns() {
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&tiny_config(5), dir.path()).unwrap();
        let text = std::fs::read_to_string(
            dir.path().join("signals").join("sine_target_hybrid_normal.csv"),
        )
        .unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,target,hybrid,normal");
        for line in lines {
            assert_eq!(line.split(',').count(), 4);
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&tiny_config(11), a.path()).unwrap();
        run_experiment(&tiny_config(11), b.path()).unwrap();
        for file in ["summary.csv", "report.json", "report.txt"] {
            assert_eq!(
                std::fs::read(a.path().join(file)).unwrap(),
                std::fs::read(b.path().join(file)).unwrap(),
                "{file} differs"
            );
        }
    }

    #[test]
    fn pooled_mode_trains_one_model_pair() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            pooled: true,
            ..tiny_config(9)
        };
        let report = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(dir.path().join("models").join("pooled_hybrid.json").exists());
        assert!(dir.path().join("models").join("pooled_normal.json").exists());
    }

    #[test]
    fn recordings_source_round_trips_through_files() {
        use crate::plant::write_recording;
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(13);
        // Materialize the plant data as recording files, then rerun from
        // those files.
        let mut paths = BTreeMap::new();
        for (name, spec) in cfg.named_stimuli() {
            let (v_i, w) = obtain_data(&cfg, &name, &spec).unwrap();
            let path = dir.path().join(format!("{name}.csv"));
            write_recording(&path, &v_i, &w).unwrap();
            paths.insert(name, path);
        }
        cfg.data = DataSource::Recordings { paths };
        let out = tempfile::tempdir().unwrap();
        let report = run_experiment(&cfg, out.path()).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.failures.is_empty());
    }

    #[test]
    fn missing_recording_is_a_recorded_failure() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(1);
        let mut paths = BTreeMap::new();
        // Provide only one of the two recordings; generate the first one.
        let (name, spec) = cfg.named_stimuli().into_iter().next().unwrap();
        let (v_i, w) = obtain_data(&cfg, &name, &spec).unwrap();
        let path = dir.path().join("prbs.csv");
        crate::plant::write_recording(&path, &v_i, &w).unwrap();
        paths.insert("prbs".to_string(), path);
        cfg.data = DataSource::Recordings { paths };
        let out = tempfile::tempdir().unwrap();
        let report = run_experiment(&cfg, out.path()).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].name, "sine");
    }

    #[test]
    fn train_then_evaluate_matches_run() {
        let run_dir = tempfile::tempdir().unwrap();
        let split_dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(21);
        let full = run_experiment(&cfg, run_dir.path()).unwrap();
        let (trained, failures) = train_only(&cfg, split_dir.path()).unwrap();
        assert_eq!(trained.len(), 2);
        assert!(failures.is_empty());
        let evaluated = evaluate_saved(&cfg, split_dir.path()).unwrap();
        assert_eq!(evaluated.rows, full.rows);
    }

    #[test]
    fn evaluate_without_models_reports_failures() {
        let dir = tempfile::tempdir().unwrap();
        let report = evaluate_saved(&tiny_config(2), dir.path()).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.failures.len(), 2);
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        // A minimal config relies on defaults.
        let minimal: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(minimal.stimuli.len(), 4);
        assert_eq!(minimal.circuit.n_stages, 45);
        assert_eq!(minimal.window.tau, 60);
    }
}
