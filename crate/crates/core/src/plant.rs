//! Synthetic actuator surrogate and recording ingestion.
//!
//! The surrogate stands in for a physical strip plus camera: a reference
//! cascade shapes the stimulus, a static cubic bends the result, a one-pole
//! low-pass adds output inertia and seeded Gaussian noise models the
//! capture chain. The cascade's dynamics are exactly what the hybrid
//! pipeline can reconstruct analytically, while the raw-stimulus path has
//! to learn them inside its window, so the surrogate reproduces the
//! mechanism the hybrid/normal comparison probes — with a ground truth
//! that is fully known.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuit::{simulate_cascade, CascadeModel};
use crate::error::{Error, Result};
use crate::signal::{infer_rate, parse_numeric_csv, Signal};

/// Ground-truth surrogate description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    /// The "true" circuit of the simulated actuator.
    pub cascade: CascadeModel,
    /// Linear coefficient of the static bend (mm/V).
    pub a1: f64,
    /// Cubic coefficient of the static bend (mm/V^3).
    pub a3: f64,
    /// Post-filter pole (rad/s).
    pub pole: f64,
    /// Output noise standard deviation as a fraction of the noiseless
    /// output range.
    pub noise_std: f64,
    /// Noise seed.
    pub seed: u64,
    /// Internal oversampling for the cascade and post-filter.
    pub oversample: usize,
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.pole > 0.0) {
            return Err(Error::domain(format!(
                "post-filter pole must be positive, got {}",
                self.pole
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::domain(format!(
                "noise std must be non-negative, got {}",
                self.noise_std
            )));
        }
        if self.a1 == 0.0 {
            return Err(Error::domain("a1 must be nonzero".to_string()));
        }
        if self.oversample == 0 {
            return Err(Error::domain("oversample must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// One-pole low-pass `p/(s+p)` discretized by the bilinear transform at an
/// oversampled internal rate, with the same hold/decimate convention as
/// the cascade simulator.
fn one_pole_lowpass(samples: &[f64], rate: f64, pole: f64, oversample: usize) -> Vec<f64> {
    let internal_rate = rate * oversample as f64;
    let c = 2.0 * internal_rate;
    let b = pole / (c + pole);
    let a1 = (pole - c) / (c + pole);
    let mut x_prev = 0.0;
    let mut y_prev = 0.0;
    let mut out = Vec::with_capacity(samples.len());
    for &u in samples {
        for rep in 0..oversample {
            let y = b * (u + x_prev) - a1 * y_prev;
            x_prev = u;
            y_prev = y;
            if rep == 0 {
                out.push(y);
            }
        }
    }
    out
}

/// Displacement of the surrogate for a stimulus: cascade, cubic bend,
/// low-pass, then seeded Gaussian noise. Deterministic per seed.
pub fn plant_response(spec: &PlantSpec, v_i: &Signal) -> Result<Signal> {
    spec.validate()?;
    let v_o = simulate_cascade(&spec.cascade, v_i, spec.oversample)?;
    let bent: Vec<f64> = v_o
        .samples()
        .iter()
        .map(|&v| spec.a1 * v + spec.a3 * v * v * v)
        .collect();
    let mut w = one_pole_lowpass(&bent, v_i.sample_rate(), spec.pole, spec.oversample);
    if spec.noise_std > 0.0 && !w.is_empty() {
        let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let range = max - min;
        if range > 0.0 {
            let normal = Normal::new(0.0, spec.noise_std * range)
                .map_err(|e| Error::Numeric(format!("noise distribution: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            for v in &mut w {
                *v += normal.sample(&mut rng);
            }
        }
    }
    Signal::new(w, v_i.sample_rate())
}

/// Write a stimulus/displacement pair in the three-column recording
/// format ingested by [`ingest_recording`].
pub fn write_recording(path: impl AsRef<Path>, v_i: &Signal, w: &Signal) -> Result<()> {
    if v_i.len() != w.len() {
        return Err(Error::data(format!(
            "stimulus and displacement lengths differ: {} vs {}",
            v_i.len(),
            w.len()
        )));
    }
    if !v_i.same_rate(w) {
        return Err(Error::data("stimulus and displacement rates differ".to_string()));
    }
    let mut out = String::from("# units: time_s in s, v_in in V, displacement in mm\n");
    out.push_str("time_s,v_in,displacement\n");
    for i in 0..v_i.len() {
        writeln!(
            out,
            "{},{},{}",
            v_i.time_at(i),
            v_i.samples()[i],
            w.samples()[i]
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a `time_s,v_in,displacement` CSV into aligned stimulus and
/// displacement signals. The time column must be strictly increasing and
/// uniform to one part in 1e6; violations are reported with their row.
pub fn ingest_recording(path: impl AsRef<Path>) -> Result<(Signal, Signal)> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let columns = parse_numeric_csv(&text, 3, "time_s")?;
    let (times, v_in, disp) = {
        let mut it = columns.into_iter();
        (
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        )
    };
    let rate = infer_rate(&times)?;
    let v_i = Signal::new(v_in, rate)?.with_label("v_in");
    let w = Signal::new(disp, rate)?.with_label("displacement");
    Ok((v_i, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_cascade, PhysicalParams};
    use crate::stimulus::{generate_stimulus, StimulusKind, StimulusSpec};

    fn small_cascade() -> CascadeModel {
        build_cascade(&PhysicalParams::reference(), 8).unwrap()
    }

    fn sine(duration: f64) -> Signal {
        generate_stimulus(&StimulusSpec {
            kind: StimulusKind::Sine { frequency: 0.25 },
            amplitude: 2.0,
            duration,
            sample_rate: 30.0,
            label: None,
        })
        .unwrap()
    }

    #[test]
    fn linear_plant_is_proportional_to_tip_voltage() {
        // a3 = 0, noise 0 and a pole far above the signal band: the
        // response is a1 times the simulated tip voltage. In steady state
        // the proportionality is exact (the discretization preserves DC
        // gain); during motion the post-filter leaves a sub-sample lag.
        let spec = PlantSpec {
            cascade: small_cascade(),
            a1: 2.5,
            a3: 0.0,
            pole: 1e4,
            noise_std: 0.0,
            seed: 0,
            oversample: 16,
        };
        let constant = Signal::new(vec![1.5; 600], 30.0).unwrap();
        let w = plant_response(&spec, &constant).unwrap();
        let v_o = simulate_cascade(&spec.cascade, &constant, 16).unwrap();
        for i in 500..600 {
            let expected = 2.5 * v_o.samples()[i];
            assert!(
                (w.samples()[i] - expected).abs() <= 1e-9 * expected.abs(),
                "sample {i}: {} vs {}",
                w.samples()[i],
                expected
            );
        }

        let v_i = sine(20.0);
        let w = plant_response(&spec, &v_i).unwrap();
        let v_o = simulate_cascade(&spec.cascade, &v_i, 16).unwrap();
        let peak = v_o.samples().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let max_dev = w
            .samples()
            .iter()
            .zip(v_o.samples())
            .map(|(a, b)| (a - 2.5 * b).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_dev <= 0.02 * 2.5 * peak, "max deviation {max_dev}");
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let spec = PlantSpec {
            cascade: small_cascade(),
            a1: 1.0,
            a3: -0.15,
            pole: 3.0,
            noise_std: 0.0,
            seed: 0,
            oversample: 16,
        };
        let v_i = Signal::new(vec![0.0; 200], 30.0).unwrap();
        let w = plant_response(&spec, &v_i).unwrap();
        assert!(w.samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cubic_term_breaks_amplitude_scaling() {
        let spec = PlantSpec {
            cascade: small_cascade(),
            a1: 1.0,
            a3: -0.15,
            pole: 3.0,
            noise_std: 0.0,
            seed: 0,
            oversample: 16,
        };
        let v1 = sine(20.0);
        let v2 = Signal::new(v1.samples().iter().map(|v| 2.0 * v).collect(), 30.0).unwrap();
        let w1 = plant_response(&spec, &v1).unwrap();
        let w2 = plant_response(&spec, &v2).unwrap();
        let peak = w2.samples().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let max_dev = w1
            .samples()
            .iter()
            .zip(w2.samples())
            .map(|(a, b)| (b - 2.0 * a).abs())
            .fold(0.0_f64, f64::max);
        assert!(
            max_dev > 0.05 * peak,
            "relative deviation {} should exceed 5%",
            max_dev / peak
        );
    }

    #[test]
    fn noise_is_deterministic_per_seed_and_causality_holds() {
        let spec = PlantSpec {
            cascade: small_cascade(),
            a1: 1.0,
            a3: -0.15,
            pole: 3.0,
            noise_std: 0.01,
            seed: 77,
            oversample: 16,
        };
        let v_i = sine(10.0);
        let a = plant_response(&spec, &v_i).unwrap();
        let b = plant_response(&spec, &v_i).unwrap();
        assert_eq!(a.samples(), b.samples());

        // Noiseless responses are causal.
        let clean = PlantSpec { noise_std: 0.0, ..spec };
        let mut bumped = v_i.samples().to_vec();
        bumped[100] += 0.5;
        let out_a = plant_response(&clean, &v_i).unwrap();
        let out_b =
            plant_response(&clean, &Signal::new(bumped, 30.0).unwrap()).unwrap();
        for i in 0..100 {
            assert_eq!(out_a.samples()[i], out_b.samples()[i]);
        }
    }

    #[test]
    fn recording_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        let v_i = sine(5.0);
        let spec = PlantSpec {
            cascade: small_cascade(),
            a1: 1.0,
            a3: -0.15,
            pole: 3.0,
            noise_std: 0.005,
            seed: 5,
            oversample: 16,
        };
        let w = plant_response(&spec, &v_i).unwrap();
        write_recording(&path, &v_i, &w).unwrap();
        let (v_back, w_back) = ingest_recording(&path).unwrap();
        assert_eq!(v_back.samples(), v_i.samples());
        assert_eq!(w_back.samples(), w.samples());
        // Writing what was read reproduces the file byte for byte.
        let second = dir.path().join("rec2.csv");
        write_recording(&second, &v_back, &w_back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&second).unwrap()
        );
    }

    #[test]
    fn two_row_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        std::fs::write(&path, "time_s,v_in,displacement\n0,1,0.5\n0.1,2,0.6\n").unwrap();
        let (v_i, w) = ingest_recording(&path).unwrap();
        assert_eq!(v_i.len(), 2);
        assert_eq!(w.samples(), &[0.5, 0.6]);
    }

    #[test]
    fn bad_recordings_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let nonuniform = dir.path().join("nu.csv");
        std::fs::write(
            &nonuniform,
            "time_s,v_in,displacement\n0,1,1\n0.1,1,1\n0.35,1,1\n",
        )
        .unwrap();
        let err = ingest_recording(&nonuniform).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "time_s,v_in,displacement\n0,1,1\n0.1,1\n").unwrap();
        let err = ingest_recording(&ragged).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");

        let backwards = dir.path().join("back.csv");
        std::fs::write(&backwards, "time_s,v_in,displacement\n0,1,1\n-0.1,1,1\n").unwrap();
        assert!(ingest_recording(&backwards).is_err());
    }
}
