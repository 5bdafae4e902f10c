//! Estimation of the circuit's unknown interface parameters from a
//! stimulus/displacement recording.
//!
//! The tip voltage is not measurable, so the only supervision available is
//! the displacement itself. The objective simulates a candidate cascade,
//! fits the best affine map from the simulated tip voltage onto the
//! measured displacement, and scores the shape mismatch with NMSE. That
//! makes the objective invariant to the output's units and scale, which is
//! exactly the freedom the downstream network absorbs anyway.
//!
//! The search runs Nelder-Mead in log-parameter space (the parameters span
//! decades and must stay positive) from Latin-hypercube starts, with every
//! evaluated point clamped into the bound box.
//!
//! `xi_rho` and `xi_h` enter the circuit only through their ratio, so the
//! pair is not separately identifiable from electrical behavior alone;
//! [`EstimationResult::interface_resistance_ratio`] reports the ratio
//! explicitly.

use rand::Rng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_cascade, simulate_cascade, PhysicalParams};
use crate::error::{Error, Result};
use crate::metrics::nmse;
use crate::signal::Signal;

/// The six free parameters of the estimation, all strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParams {
    pub xi_rho: f64,
    pub xi_h: f64,
    #[serde(rename = "C_clamp")]
    pub c_clamp: f64,
    #[serde(rename = "alpha_E")]
    pub alpha_e: f64,
    #[serde(rename = "alpha_I")]
    pub alpha_i: f64,
    #[serde(rename = "alpha_C")]
    pub alpha_c: f64,
}

pub const N_FREE_PARAMS: usize = 6;

impl FreeParams {
    pub fn to_array(self) -> [f64; N_FREE_PARAMS] {
        [
            self.xi_rho,
            self.xi_h,
            self.c_clamp,
            self.alpha_e,
            self.alpha_i,
            self.alpha_c,
        ]
    }

    pub fn from_array(a: [f64; N_FREE_PARAMS]) -> Self {
        FreeParams {
            xi_rho: a[0],
            xi_h: a[1],
            c_clamp: a[2],
            alpha_e: a[3],
            alpha_i: a[4],
            alpha_c: a[5],
        }
    }

    pub fn from_physical(p: &PhysicalParams) -> Self {
        FreeParams {
            xi_rho: p.xi_rho,
            xi_h: p.xi_h,
            c_clamp: p.c_clamp,
            alpha_e: p.alpha_e,
            alpha_i: p.alpha_i,
            alpha_c: p.alpha_c,
        }
    }

    /// Overlay these free values onto a parameter template.
    pub fn apply_to(self, template: &PhysicalParams) -> PhysicalParams {
        PhysicalParams {
            xi_rho: self.xi_rho,
            xi_h: self.xi_h,
            c_clamp: self.c_clamp,
            alpha_e: self.alpha_e,
            alpha_i: self.alpha_i,
            alpha_c: self.alpha_c,
            ..*template
        }
    }
}

/// Per-parameter box bounds, interpreted on a log scale during the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: FreeParams,
    pub upper: FreeParams,
}

impl ParamBounds {
    /// Wide smoke-test box around physically plausible interface values.
    pub fn default_box() -> Self {
        ParamBounds {
            lower: FreeParams {
                xi_rho: 1.0,
                xi_h: 1.0,
                c_clamp: 1e-4,
                alpha_e: 0.05,
                alpha_i: 0.05,
                alpha_c: 0.05,
            },
            upper: FreeParams {
                xi_rho: 1e4,
                xi_h: 1e2,
                c_clamp: 1e-1,
                alpha_e: 1.0,
                alpha_i: 1.0,
                alpha_c: 1.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lo = self.lower.to_array();
        let hi = self.upper.to_array();
        for i in 0..N_FREE_PARAMS {
            if !(lo[i] > 0.0 && lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
                return Err(Error::domain(format!(
                    "bound {i} must satisfy 0 < lower < upper < inf, got [{}, {}]",
                    lo[i], hi[i]
                )));
            }
        }
        for (name, a) in [
            ("alpha_E", self.upper.alpha_e),
            ("alpha_I", self.upper.alpha_i),
            ("alpha_C", self.upper.alpha_c),
        ] {
            if a > 1.0 {
                return Err(Error::domain(format!(
                    "upper bound of {name} must be <= 1, got {a}"
                )));
            }
        }
        Ok(())
    }

    fn log_box(&self) -> ([f64; N_FREE_PARAMS], [f64; N_FREE_PARAMS]) {
        let lo = self.lower.to_array().map(f64::ln);
        let hi = self.upper.to_array().map(f64::ln);
        (lo, hi)
    }
}

/// Objective choice; affine-calibrated NMSE is the default and currently
/// the only option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    AffineNmse,
}

/// A recording plus everything needed to score candidate parameters.
#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub v_i: Signal,
    pub w: Signal,
    pub n_stages: usize,
    pub oversample: usize,
    /// Fixed geometry/material fields; the free fields are overwritten per
    /// candidate.
    pub template: PhysicalParams,
    pub bounds: ParamBounds,
    pub objective: Objective,
}

impl EstimationProblem {
    pub fn new(v_i: Signal, w: Signal, n_stages: usize) -> Result<Self> {
        let p = EstimationProblem {
            v_i,
            w,
            n_stages,
            oversample: 16,
            template: PhysicalParams::reference(),
            bounds: ParamBounds::default_box(),
            objective: Objective::AffineNmse,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_i.len() != self.w.len() {
            return Err(Error::data(format!(
                "stimulus and displacement lengths differ: {} vs {}",
                self.v_i.len(),
                self.w.len()
            )));
        }
        if self.v_i.len() < 2 {
            return Err(Error::data("recording is too short".to_string()));
        }
        if !self.v_i.same_rate(&self.w) {
            return Err(Error::data("stimulus and displacement rates differ".to_string()));
        }
        if self.w.samples().iter().all(|v| *v == 0.0) {
            return Err(Error::data(
                "displacement is identically zero; nothing to fit".to_string(),
            ));
        }
        if self.n_stages == 0 {
            return Err(Error::domain("stage count must be >= 1".to_string()));
        }
        if self.oversample == 0 {
            return Err(Error::domain("oversample must be >= 1".to_string()));
        }
        self.bounds.validate()
    }
}

/// Least-squares affine calibration `w ~ a*v + b`.
fn affine_fit(v: &[f64], w: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean_v = v.iter().sum::<f64>() / n;
    let mean_w = w.iter().sum::<f64>() / n;
    let mut var = 0.0;
    let mut cov = 0.0;
    for (x, y) in v.iter().zip(w) {
        let dv = x - mean_v;
        var += dv * dv;
        cov += dv * (y - mean_w);
    }
    let a = if var > 0.0 { cov / var } else { 0.0 };
    (a, mean_w - a * mean_v)
}

/// Simulate the candidate cascade on the problem's stimulus, fit the best
/// affine map onto the displacement, and return the NMSE of that fit.
pub fn objective_affine_nmse(free: &FreeParams, problem: &EstimationProblem) -> Result<f64> {
    let params = free.apply_to(&problem.template);
    let cascade = build_cascade(&params, problem.n_stages)?;
    let v_o = simulate_cascade(&cascade, &problem.v_i, problem.oversample)?;
    let (a, b) = affine_fit(v_o.samples(), problem.w.samples());
    let calibrated: Vec<f64> = v_o.samples().iter().map(|v| a * v + b).collect();
    nmse(problem.w.samples(), &calibrated)
}

fn eval(problem: &EstimationProblem, log_point: &[f64; N_FREE_PARAMS]) -> Result<f64> {
    let free = FreeParams::from_array(log_point.map(f64::exp));
    match problem.objective {
        Objective::AffineNmse => objective_affine_nmse(&free, problem),
    }
}

/// Trace of one restart: the best objective value after each iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub start: FreeParams,
    pub objective_per_iteration: Vec<f64>,
    pub final_objective: f64,
    pub converged: bool,
}

/// Outcome of the multi-start search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub params: PhysicalParams,
    pub free: FreeParams,
    pub objective: f64,
    /// `xi_rho / xi_h`: the only combination of the two ratios the circuit
    /// responds to. The individual values are not identifiable.
    pub interface_resistance_ratio: f64,
    pub traces: Vec<RestartTrace>,
}

const NM_MAX_ITERATIONS: usize = 500;
const NM_DIAMETER_TOL: f64 = 1e-6;

/// Nelder-Mead in the log box with clamped evaluations. Returns the best
/// vertex, its objective and the per-iteration trace.
fn nelder_mead(
    problem: &EstimationProblem,
    start: [f64; N_FREE_PARAMS],
    lo: &[f64; N_FREE_PARAMS],
    hi: &[f64; N_FREE_PARAMS],
) -> Result<(FreeParams, f64, Vec<f64>, bool)> {
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink
    let n = N_FREE_PARAMS;

    let clamp = |x: &mut [f64; N_FREE_PARAMS]| {
        for d in 0..n {
            x[d] = x[d].clamp(lo[d], hi[d]);
        }
    };

    let mut simplex: Vec<[f64; N_FREE_PARAMS]> = Vec::with_capacity(n + 1);
    let mut start = start;
    clamp(&mut start);
    simplex.push(start);
    for d in 0..n {
        let mut v = start;
        let step = 0.05 * (hi[d] - lo[d]);
        v[d] = if v[d] + step <= hi[d] { v[d] + step } else { v[d] - step };
        simplex.push(v);
    }
    let mut values = simplex
        .iter()
        .map(|x| eval(problem, x))
        .collect::<Result<Vec<f64>>>()?;

    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..NM_MAX_ITERATIONS {
        // Order best..worst.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let simplex_sorted: Vec<_> = order.iter().map(|&i| simplex[i]).collect();
        let values_sorted: Vec<_> = order.iter().map(|&i| values[i]).collect();
        simplex = simplex_sorted;
        values = values_sorted;
        trace.push(values[0]);

        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0_f64, f64::max);
        if diameter < NM_DIAMETER_TOL {
            converged = true;
            break;
        }

        let mut centroid = [0.0; N_FREE_PARAMS];
        for v in &simplex[..n] {
            for d in 0..n {
                centroid[d] += v[d] / n as f64;
            }
        }

        let mut reflected = [0.0; N_FREE_PARAMS];
        for d in 0..n {
            reflected[d] = centroid[d] + ALPHA * (centroid[d] - simplex[n][d]);
        }
        clamp(&mut reflected);
        let f_reflected = eval(problem, &reflected)?;

        if f_reflected < values[0] {
            let mut expanded = [0.0; N_FREE_PARAMS];
            for d in 0..n {
                expanded[d] = centroid[d] + GAMMA * (reflected[d] - centroid[d]);
            }
            clamp(&mut expanded);
            let f_expanded = eval(problem, &expanded)?;
            if f_expanded < f_reflected {
                simplex[n] = expanded;
                values[n] = f_expanded;
            } else {
                simplex[n] = reflected;
                values[n] = f_reflected;
            }
        } else if f_reflected < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_reflected;
        } else {
            let (base, f_base) = if f_reflected < values[n] {
                (reflected, f_reflected)
            } else {
                (simplex[n], values[n])
            };
            let mut contracted = [0.0; N_FREE_PARAMS];
            for d in 0..n {
                contracted[d] = centroid[d] + RHO * (base[d] - centroid[d]);
            }
            clamp(&mut contracted);
            let f_contracted = eval(problem, &contracted)?;
            if f_contracted < f_base {
                simplex[n] = contracted;
                values[n] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=n {
                    for d in 0..n {
                        simplex[i][d] = simplex[0][d] + SIGMA * (simplex[i][d] - simplex[0][d]);
                    }
                    clamp(&mut simplex[i]);
                    values[i] = eval(problem, &simplex[i])?;
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    let free = FreeParams::from_array(simplex[best].map(f64::exp));
    Ok((free, values[best], trace, converged))
}

/// Refine a single explicit start point. Used by [`estimate_params`] and
/// directly by callers that already hold a candidate.
pub fn refine(problem: &EstimationProblem, start: &FreeParams) -> Result<RestartTrace> {
    problem.validate()?;
    let (lo, hi) = problem.bounds.log_box();
    let start_log = start.to_array().map(f64::ln);
    let (_, final_objective, objective_per_iteration, converged) =
        nelder_mead(problem, start_log, &lo, &hi)?;
    Ok(RestartTrace {
        start: *start,
        objective_per_iteration,
        final_objective,
        converged,
    })
}

/// Latin-hypercube sample of the log box.
fn latin_hypercube(
    bounds: &ParamBounds,
    n_points: usize,
    seed: u64,
) -> Vec<[f64; N_FREE_PARAMS]> {
    let (lo, hi) = bounds.log_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(N_FREE_PARAMS);
    for _ in 0..N_FREE_PARAMS {
        let mut order: Vec<usize> = (0..n_points).collect();
        order.shuffle(&mut rng);
        strata.push(order);
    }
    (0..n_points)
        .map(|i| {
            let mut point = [0.0; N_FREE_PARAMS];
            for (d, item) in point.iter_mut().enumerate() {
                let u: f64 = rng.random_range(0.0..1.0);
                let frac = (strata[d][i] as f64 + u) / n_points as f64;
                *item = lo[d] + frac * (hi[d] - lo[d]);
            }
            point
        })
        .collect()
}

/// Multi-start Nelder-Mead estimation. Restarts run independently (and in
/// parallel); the winner is the lowest final objective, ties broken by
/// restart index, so results are deterministic per seed.
pub fn estimate_params(
    problem: &EstimationProblem,
    restarts: usize,
    seed: u64,
) -> Result<EstimationResult> {
    problem.validate()?;
    if restarts == 0 {
        return Err(Error::domain("need at least one restart".to_string()));
    }
    let starts = latin_hypercube(&problem.bounds, restarts, seed);
    let (lo, hi) = problem.bounds.log_box();

    let outcomes: Vec<Result<(FreeParams, f64, Vec<f64>, bool)>> = starts
        .par_iter()
        .map(|s| nelder_mead(problem, *s, &lo, &hi))
        .collect();

    let mut traces = Vec::with_capacity(restarts);
    let mut best: Option<(FreeParams, f64)> = None;
    let mut first_error = None;
    for (start, outcome) in starts.iter().zip(outcomes) {
        match outcome {
            Ok((free, objective, trace, converged)) => {
                traces.push(RestartTrace {
                    start: FreeParams::from_array(start.map(f64::exp)),
                    objective_per_iteration: trace,
                    final_objective: objective,
                    converged,
                });
                let better = match &best {
                    None => true,
                    Some((_, b)) => objective < *b,
                };
                if better {
                    best = Some((free, objective));
                }
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }

    let (free, objective) = best.ok_or_else(|| {
        Error::Numeric(format!(
            "every restart failed to evaluate; first error: {}",
            first_error.map(|e| e.to_string()).unwrap_or_default()
        ))
    })?;
    Ok(EstimationResult {
        params: free.apply_to(&problem.template),
        free,
        objective,
        interface_resistance_ratio: free.xi_rho / free.xi_h,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::{generate_stimulus, StimulusKind, StimulusSpec};

    fn short_prbs() -> Signal {
        generate_stimulus(&StimulusSpec {
            kind: StimulusKind::Prbs {
                bit_duration: 1.0,
                lfsr_order: 7,
                seed: 0b1011,
            },
            amplitude: 2.0,
            duration: 20.0,
            sample_rate: 30.0,
            label: None,
        })
        .unwrap()
    }

    fn truth() -> FreeParams {
        FreeParams::from_physical(&PhysicalParams::reference())
    }

    /// w built as an exact affine image of the simulated tip voltage.
    fn affine_plant(v_i: &Signal, free: &FreeParams, noise: f64, seed: u64) -> Signal {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let params = free.apply_to(&PhysicalParams::reference());
        let cascade = build_cascade(&params, 12).unwrap();
        let v_o = simulate_cascade(&cascade, v_i, 16).unwrap();
        let mut w: Vec<f64> = v_o.samples().iter().map(|v| 1.8 * v - 0.2).collect();
        if noise > 0.0 {
            let range = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - w.iter().cloned().fold(f64::INFINITY, f64::min);
            let normal = Normal::new(0.0, noise * range).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in &mut w {
                *v += normal.sample(&mut rng);
            }
        }
        Signal::new(w, v_i.sample_rate()).unwrap()
    }

    #[test]
    fn objective_is_zero_at_truth_for_affine_plant() {
        let v_i = short_prbs();
        let w = affine_plant(&v_i, &truth(), 0.0, 0);
        let mut problem = EstimationProblem::new(v_i, w, 12).unwrap();
        problem.oversample = 16;
        let obj = objective_affine_nmse(&truth(), &problem).unwrap();
        assert!(obj < 1e-20, "objective at truth: {obj}");
    }

    #[test]
    fn orthogonal_target_reduces_to_mean_predictor() {
        let v_i = short_prbs();
        let params = truth().apply_to(&PhysicalParams::reference());
        let cascade = build_cascade(&params, 12).unwrap();
        let v_o = simulate_cascade(&cascade, &v_i, 16).unwrap();
        // Build w mean-zero and orthogonal to (v_o - mean) by Gram-Schmidt.
        let n = v_o.len();
        let mean_v = v_o.samples().iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = v_o.samples().iter().map(|v| v - mean_v).collect();
        let raw: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.013).sin()).collect();
        let mean_raw = raw.iter().sum::<f64>() / n as f64;
        let mut w: Vec<f64> = raw.iter().map(|v| v - mean_raw).collect();
        let dot: f64 = w.iter().zip(&centered).map(|(a, b)| a * b).sum();
        let vv: f64 = centered.iter().map(|v| v * v).sum();
        for (wi, ci) in w.iter_mut().zip(&centered) {
            *wi -= dot / vv * ci;
        }
        let (a, b) = affine_fit(v_o.samples(), &w);
        assert!(a.abs() < 1e-10, "a = {a}");
        assert!(b.abs() < 1e-10, "b = {b}");
        let problem = EstimationProblem::new(v_i, Signal::new(w.clone(), 30.0).unwrap(), 12)
            .unwrap();
        let obj = objective_affine_nmse(&truth(), &problem).unwrap();
        let mean_pred = nmse(&w, &vec![0.0; n]).unwrap();
        assert!((obj - mean_pred).abs() < 1e-12);
    }

    #[test]
    fn objective_invariant_to_target_rescaling() {
        let v_i = short_prbs();
        let w = affine_plant(&v_i, &truth(), 0.005, 3);
        let scaled = Signal::new(w.samples().iter().map(|v| 7.0 * v).collect(), 30.0).unwrap();
        let p1 = EstimationProblem::new(v_i.clone(), w, 12).unwrap();
        let p2 = EstimationProblem::new(v_i, scaled, 12).unwrap();
        let candidate = FreeParams {
            c_clamp: 2e-3,
            ..truth()
        };
        let o1 = objective_affine_nmse(&candidate, &p1).unwrap();
        let o2 = objective_affine_nmse(&candidate, &p2).unwrap();
        assert!((o1 - o2).abs() < 1e-12 * o1.max(1e-30));
    }

    #[test]
    fn refine_from_truth_stays_in_its_neighborhood() {
        let v_i = short_prbs();
        let w = affine_plant(&v_i, &truth(), 0.01, 5);
        let problem = EstimationProblem::new(v_i, w, 12).unwrap();
        let at_truth = objective_affine_nmse(&truth(), &problem).unwrap();
        let trace = refine(&problem, &truth()).unwrap();
        assert!(trace.final_objective <= at_truth * (1.0 + 1e-9));
    }

    #[test]
    fn estimation_is_deterministic_and_respects_bounds() {
        let v_i = short_prbs();
        let w = affine_plant(&v_i, &truth(), 0.01, 7);
        let problem = EstimationProblem::new(v_i, w, 12).unwrap();
        let a = estimate_params(&problem, 3, 11).unwrap();
        let b = estimate_params(&problem, 3, 11).unwrap();
        assert_eq!(a.free, b.free);
        assert_eq!(a.objective, b.objective);
        let lo = problem.bounds.lower.to_array();
        let hi = problem.bounds.upper.to_array();
        let f = a.free.to_array();
        for d in 0..N_FREE_PARAMS {
            assert!(f[d] >= lo[d] && f[d] <= hi[d], "param {d} out of bounds");
        }
        // Best objective never exceeds any restart's outcome.
        for t in &a.traces {
            assert!(a.objective <= t.final_objective);
        }
    }

    #[test]
    fn synthetic_recovery_beats_twice_truth_objective() {
        let v_i = short_prbs();
        let w = affine_plant(&v_i, &truth(), 0.01, 9);
        let problem = EstimationProblem::new(v_i, w, 12).unwrap();
        let at_truth = objective_affine_nmse(&truth(), &problem).unwrap();
        let result = estimate_params(&problem, 4, 23).unwrap();
        assert!(
            result.objective <= 2.0 * at_truth,
            "estimated {} vs truth {}",
            result.objective,
            at_truth
        );
        assert!(result.interface_resistance_ratio > 0.0);
    }
}
