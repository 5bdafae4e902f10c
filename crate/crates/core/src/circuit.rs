//! Distributed-RC circuit model of an IPMC strip.
//!
//! The strip is split into `N` compartments from clamp to tip. Each
//! compartment is a first-order RC section with series electrode resistance
//! `RE_k`, a shunt branch holding the constant membrane resistance `RM` in
//! parallel with a series interface resistance `RI_k` and capacitance `C_k`.
//! Electrode and interface values grow linearly from clamp to tip; the
//! growth is parameterized by attenuation coefficients in (0, 1] whose
//! reciprocal maps a clamp value onto the corresponding tip value.
//!
//! Every stage has the transfer function `H_k(s) = G_k (s + Z_k)/(s + P_k)`
//! and the cascade response is the product of the stages. Time-domain
//! simulation discretizes each stage with the bilinear transform at an
//! oversampled internal rate; the bilinear map preserves the DC gain
//! exactly and keeps every stage stable for `P_k > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Geometry and material constants of the strip plus the unknown interface
/// parameters. Serialized field names follow the SI-unit symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Free length of the strip (m).
    #[serde(rename = "L")]
    pub length: f64,
    /// Width of the strip (m).
    #[serde(rename = "W")]
    pub width: f64,
    /// Electrode layer thickness (m).
    #[serde(rename = "h_E")]
    pub electrode_thickness: f64,
    /// Electrode resistivity (ohm·m).
    #[serde(rename = "rho_E")]
    pub electrode_resistivity: f64,
    /// Membrane thickness (m).
    #[serde(rename = "h_M")]
    pub membrane_thickness: f64,
    /// Membrane conductivity; its reciprocal is the membrane resistivity
    /// in ohm·m.
    #[serde(rename = "sigma_M")]
    pub membrane_conductivity: f64,
    /// Interface/metal resistivity ratio (IMRR), dimensionless.
    pub xi_rho: f64,
    /// Interface/metal thickness ratio (IMTR), dimensionless.
    pub xi_h: f64,
    /// Interface capacitance at the clamp (F).
    #[serde(rename = "C_clamp")]
    pub c_clamp: f64,
    /// Electrode-current attenuation coefficient, in (0, 1].
    #[serde(rename = "alpha_E")]
    pub alpha_e: f64,
    /// Interface-current attenuation coefficient, in (0, 1].
    #[serde(rename = "alpha_I")]
    pub alpha_i: f64,
    /// Capacitance attenuation coefficient, in (0, 1].
    #[serde(rename = "alpha_C")]
    pub alpha_c: f64,
}

impl PhysicalParams {
    /// Reference Pt/Nafion-117 strip: 22 mm x 5.5 mm, 1 um Pt electrodes,
    /// 183 um membrane. The interface parameters have no measured values;
    /// the placeholders here are smoke-test defaults and are normally
    /// replaced by [`crate::estimate::estimate_params`].
    pub fn reference() -> Self {
        PhysicalParams {
            length: 22e-3,
            width: 5.5e-3,
            electrode_thickness: 1e-6,
            electrode_resistivity: 1.06e-7,
            membrane_thickness: 183e-6,
            membrane_conductivity: 10.26,
            xi_rho: 100.0,
            xi_h: 10.0,
            c_clamp: 5e-3,
            alpha_e: 0.5,
            alpha_i: 0.5,
            alpha_c: 0.5,
        }
    }

    /// Check every field against its domain, naming the offender.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("L", self.length),
            ("W", self.width),
            ("h_E", self.electrode_thickness),
            ("rho_E", self.electrode_resistivity),
            ("h_M", self.membrane_thickness),
            ("sigma_M", self.membrane_conductivity),
            ("xi_rho", self.xi_rho),
            ("xi_h", self.xi_h),
            ("C_clamp", self.c_clamp),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, a) in [
            ("alpha_E", self.alpha_e),
            ("alpha_I", self.alpha_i),
            ("alpha_C", self.alpha_c),
        ] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::domain(format!("{name} must be in (0, 1], got {a}")));
            }
        }
        Ok(())
    }
}

/// Clamp-region electrical values derived from the physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampValues {
    /// Electrode resistance at the clamp (ohm).
    #[serde(rename = "RE_clamp")]
    pub re_clamp: f64,
    /// Interface resistance at the clamp (ohm).
    #[serde(rename = "RI_clamp")]
    pub ri_clamp: f64,
    /// Membrane resistance, constant across compartments (ohm).
    #[serde(rename = "RM")]
    pub rm: f64,
    /// Interface capacitance at the clamp (F).
    #[serde(rename = "C_clamp")]
    pub c_clamp: f64,
}

/// Electrical values of one compartment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompartmentValues {
    pub re: f64,
    pub ri: f64,
    pub c: f64,
    pub rm: f64,
}

/// Gain/zero/pole triple of one compartment's transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTF {
    /// Dimensionless gain in (0, 1].
    #[serde(rename = "G")]
    pub gain: f64,
    /// Zero frequency (rad/s).
    #[serde(rename = "Z")]
    pub zero: f64,
    /// Pole frequency (rad/s).
    #[serde(rename = "P")]
    pub pole: f64,
}

impl StageTF {
    /// DC gain of the stage, `G·Z/P`.
    pub fn dc_gain(&self) -> f64 {
        self.gain * self.zero / self.pole
    }
}

/// Ordered clamp-to-tip list of stage transfer functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    #[serde(rename = "N")]
    pub n_stages: usize,
    pub stages: Vec<StageTF>,
}

/// Impulse response of one stage in partial-fraction form:
/// `h(t) = direct_gain·delta(t) + exp_coefficient·exp(-exp_rate·t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageImpulseResponse {
    pub direct_gain: f64,
    pub exp_coefficient: f64,
    pub exp_rate: f64,
}

/// Clamp-region values from the strip geometry:
/// `RE_clamp = rho_E·L/(W·h_E)`, `RM = (1/sigma_M)·L/(W·h_M)` and
/// `RI_clamp = (xi_rho/xi_h)·RE_clamp`.
pub fn derive_clamp_values(p: &PhysicalParams) -> Result<ClampValues> {
    p.validate()?;
    let re_clamp = p.electrode_resistivity * p.length / (p.width * p.electrode_thickness);
    let rm = (1.0 / p.membrane_conductivity) * p.length / (p.width * p.membrane_thickness);
    let ri_clamp = (p.xi_rho * p.electrode_resistivity) * p.length
        / (p.width * p.xi_h * p.electrode_thickness);
    Ok(ClampValues {
        re_clamp,
        ri_clamp,
        rm,
        c_clamp: p.c_clamp,
    })
}

/// Values of compartment `k` (1-based) out of `n`: the tip value is the
/// clamp value divided by the attenuation coefficient, and compartments
/// interpolate linearly, `X_k = (X_tip - X_clamp)·k/N + X_clamp`.
pub fn compartment_params(
    clamp: &ClampValues,
    alpha_e: f64,
    alpha_i: f64,
    alpha_c: f64,
    k: usize,
    n: usize,
) -> Result<CompartmentValues> {
    if k < 1 || k > n {
        return Err(Error::Index(format!(
            "compartment index k={k} out of range 1..={n}"
        )));
    }
    for (name, a) in [("alpha_E", alpha_e), ("alpha_I", alpha_i), ("alpha_C", alpha_c)] {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::domain(format!("{name} must be in (0, 1], got {a}")));
        }
    }
    let frac = k as f64 / n as f64;
    let lerp = |clamp_v: f64, alpha: f64| {
        let tip = clamp_v / alpha;
        (tip - clamp_v) * frac + clamp_v
    };
    Ok(CompartmentValues {
        re: lerp(clamp.re_clamp, alpha_e),
        ri: lerp(clamp.ri_clamp, alpha_i),
        c: lerp(clamp.c_clamp, alpha_c),
        rm: clamp.rm,
    })
}

/// Gain, zero and pole of one compartment:
/// `G = (1 + RE/RM + RE/RI)^-1`, `Z = (RI·C)^-1`,
/// `P = (1/C)·(RI + RE·RM/(RE+RM))^-1`.
///
/// At `RE = 0` the pole is computed through the same expression as the
/// zero, so an identity stage satisfies `P == Z` bit-for-bit and the
/// discretized stage passes signals through unchanged.
pub fn stage_tf(re: f64, ri: f64, c: f64, rm: f64) -> Result<StageTF> {
    if !(re >= 0.0) || !re.is_finite() {
        return Err(Error::domain(format!("RE must be non-negative, got {re}")));
    }
    for (name, v) in [("RI", ri), ("C", c), ("RM", rm)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let gain = 1.0 / (1.0 + re / rm + re / ri);
    let zero = 1.0 / (ri * c);
    let pole = if re > 0.0 {
        (1.0 / c) * (1.0 / (ri + re * rm / (re + rm)))
    } else {
        1.0 / (ri * c)
    };
    Ok(StageTF { gain, zero, pole })
}

/// Build the `n`-stage cascade for a parameter set, clamp to tip.
pub fn build_cascade(p: &PhysicalParams, n: usize) -> Result<CascadeModel> {
    if n == 0 {
        return Err(Error::domain("stage count N must be >= 1".to_string()));
    }
    let clamp = derive_clamp_values(p)?;
    let stages = (1..=n)
        .map(|k| {
            let cp = compartment_params(&clamp, p.alpha_e, p.alpha_i, p.alpha_c, k, n)?;
            stage_tf(cp.re, cp.ri, cp.c, cp.rm)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CascadeModel { n_stages: n, stages })
}

/// Partial-fraction impulse response of a stage:
/// `h(t) = G·delta(t) + G·(Z-P)·exp(-P·t)`.
pub fn stage_impulse_response(s: &StageTF) -> StageImpulseResponse {
    StageImpulseResponse {
        direct_gain: s.gain,
        exp_coefficient: s.gain * (s.zero - s.pole),
        exp_rate: s.pole,
    }
}

/// DC gain of the whole cascade, the product of the per-stage `G·Z/P`.
pub fn dc_gain(m: &CascadeModel) -> f64 {
    m.stages.iter().map(StageTF::dc_gain).product()
}

/// Bilinear-transform coefficients of one stage at a given internal rate:
/// `y[n] = b0·x[n] + b1·x[n-1] - a1·y[n-1]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BilinearStage {
    pub b0: f64,
    pub b1: f64,
    pub a1: f64,
}

impl BilinearStage {
    pub(crate) fn design(s: &StageTF, internal_rate: f64) -> Self {
        // s <- (2/T)(1 - z^-1)/(1 + z^-1) applied to G(s+Z)/(s+P).
        let c = 2.0 * internal_rate;
        let denom = c + s.pole;
        BilinearStage {
            b0: s.gain * (c + s.zero) / denom,
            b1: s.gain * (s.zero - c) / denom,
            a1: (s.pole - c) / denom,
        }
    }
}

/// Simulate the cascade response to `v_in`, returning a signal at the same
/// rate and length.
///
/// Each stage is discretized independently by the bilinear transform at
/// `sample_rate * oversample`; the input is zero-order-hold upsampled, the
/// stages run in cascade order from zero initial state, and the internal
/// stream is decimated back by taking the first internal sample of each
/// input block (output `n` is internal index `n * oversample`).
pub fn simulate_cascade(m: &CascadeModel, v_in: &Signal, oversample: usize) -> Result<Signal> {
    if oversample == 0 {
        return Err(Error::domain("oversample must be >= 1".to_string()));
    }
    if m.stages.len() != m.n_stages {
        return Err(Error::domain(format!(
            "cascade claims {} stages but holds {}",
            m.n_stages,
            m.stages.len()
        )));
    }
    if let Some(i) = v_in.samples().iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("input sample {i} is not finite")));
    }
    if v_in.is_empty() {
        return Signal::new(Vec::new(), v_in.sample_rate());
    }

    let internal_rate = v_in.sample_rate() * oversample as f64;
    let coeffs: Vec<BilinearStage> = m
        .stages
        .iter()
        .map(|s| BilinearStage::design(s, internal_rate))
        .collect();
    let mut x_prev = vec![0.0_f64; coeffs.len()];
    let mut y_prev = vec![0.0_f64; coeffs.len()];
    let mut out = Vec::with_capacity(v_in.len());

    for &u in v_in.samples() {
        for rep in 0..oversample {
            let mut x = u;
            for (i, c) in coeffs.iter().enumerate() {
                let y = c.b0 * x + c.b1 * x_prev[i] - c.a1 * y_prev[i];
                x_prev[i] = x;
                y_prev[i] = y;
                x = y;
            }
            if rep == 0 {
                out.push(x);
            }
        }
    }
    Signal::new(out, v_in.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn step(n: usize, rate: f64) -> Signal {
        Signal::new(vec![1.0; n], rate).unwrap()
    }

    #[test]
    fn clamp_values_match_hand_evaluation() {
        let p = PhysicalParams::reference();
        let c = derive_clamp_values(&p).unwrap();
        // 1.06e-7 * 0.022 / (5.5e-3 * 1e-6)
        assert_relative_eq!(c.re_clamp, 0.424, max_relative = 1e-12);
        // (1/10.26) * 0.022 / (5.5e-3 * 183e-6)
        assert_relative_eq!(c.rm, 2130.4, max_relative = 1e-4);
        // xi_rho/xi_h = 10 here
        assert_relative_eq!(c.ri_clamp, 4.24, max_relative = 1e-12);
        assert_eq!(c.c_clamp, 5e-3);
    }

    #[test]
    fn equal_ratios_make_interface_equal_electrode() {
        let p = PhysicalParams {
            xi_rho: 7.0,
            xi_h: 7.0,
            ..PhysicalParams::reference()
        };
        let c = derive_clamp_values(&p).unwrap();
        assert_relative_eq!(c.ri_clamp, c.re_clamp, max_relative = 1e-12);
    }

    #[test]
    fn invalid_params_name_the_field() {
        let p = PhysicalParams {
            membrane_conductivity: 0.0,
            ..PhysicalParams::reference()
        };
        let err = derive_clamp_values(&p).unwrap_err();
        assert!(err.to_string().contains("sigma_M"), "{err}");
    }

    #[test]
    fn tip_value_is_clamp_over_alpha() {
        let clamp = ClampValues {
            re_clamp: 0.424,
            ri_clamp: 4.24,
            rm: 2130.4,
            c_clamp: 5e-3,
        };
        let tip = compartment_params(&clamp, 0.5, 0.5, 0.5, 4, 4).unwrap();
        assert_relative_eq!(tip.re, 0.848, max_relative = 1e-12);
    }

    #[test]
    fn linear_interpolation_midpoint() {
        // RE_clamp = 1, RE_tip = 3 (alpha = 1/3), N = 4, k = 2 -> 2.
        let clamp = ClampValues {
            re_clamp: 1.0,
            ri_clamp: 1.0,
            rm: 1.0,
            c_clamp: 1.0,
        };
        let cp = compartment_params(&clamp, 1.0 / 3.0, 1.0, 1.0, 2, 4).unwrap();
        assert_relative_eq!(cp.re, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn unit_alphas_keep_clamp_values() {
        let clamp = ClampValues {
            re_clamp: 0.424,
            ri_clamp: 4.24,
            rm: 2130.4,
            c_clamp: 5e-3,
        };
        for k in 1..=5 {
            let cp = compartment_params(&clamp, 1.0, 1.0, 1.0, k, 5).unwrap();
            assert_eq!(cp.re, clamp.re_clamp);
            assert_eq!(cp.ri, clamp.ri_clamp);
            assert_eq!(cp.c, clamp.c_clamp);
        }
    }

    #[test]
    fn compartment_index_out_of_range() {
        let clamp = ClampValues {
            re_clamp: 1.0,
            ri_clamp: 1.0,
            rm: 1.0,
            c_clamp: 1.0,
        };
        assert!(compartment_params(&clamp, 0.5, 0.5, 0.5, 0, 4).is_err());
        assert!(compartment_params(&clamp, 0.5, 0.5, 0.5, 5, 4).is_err());
    }

    #[test]
    fn stage_gain_example() {
        let s = stage_tf(1.0, 2.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(s.gain, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn stage_zero_example() {
        let s = stage_tf(0.5, 1.0, 1.0, 10.0).unwrap();
        assert_relative_eq!(s.zero, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_re_gives_identity_stage() {
        let s = stage_tf(0.0, 3.7, 2.5e-3, 1234.0).unwrap();
        assert_eq!(s.gain, 1.0);
        // Bitwise equality: pole and zero share the expression at RE = 0.
        assert_eq!(s.pole.to_bits(), s.zero.to_bits());
    }

    #[test]
    fn negative_inputs_are_domain_errors() {
        assert!(stage_tf(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(stage_tf(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(stage_tf(1.0, 1.0, -1.0, 1.0).is_err());
        assert!(stage_tf(1.0, 1.0, 1.0, 0.0).is_err());
    }

    proptest! {
        // G·Z/P = RM/(RE+RM) is an algebraic identity of the stage formulas.
        #[test]
        fn dc_identity_holds(
            re in 0.0..10.0f64,
            ri in 0.1..1e4f64,
            rm in 0.1..1e4f64,
            c in 1e-6..0.1f64,
        ) {
            let s = stage_tf(re, ri, c, rm).unwrap();
            let expected = rm / (re + rm);
            prop_assert!((s.dc_gain() - expected).abs() <= 1e-12 * expected);
        }

        // Framing of the partial fraction: integral of h over [0, inf) is
        // the DC gain, checked against trapezoidal quadrature.
        #[test]
        fn impulse_response_integrates_to_dc_gain(
            re in 0.01..5.0f64,
            ri in 0.5..50.0f64,
            rm in 0.5..50.0f64,
            c in 0.01..1.0f64,
        ) {
            let s = stage_tf(re, ri, c, rm).unwrap();
            let h = stage_impulse_response(&s);
            let t_end = 40.0 / h.exp_rate;
            let n = 200_000usize;
            let dt = t_end / n as f64;
            let mut integral = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                integral += w * h.exp_coefficient * (-h.exp_rate * (i as f64 * dt)).exp();
            }
            integral = integral * dt + h.direct_gain;
            prop_assert!((integral - s.dc_gain()).abs() < 1e-6 * s.dc_gain().abs().max(1.0));
        }
    }

    #[test]
    fn impulse_response_examples() {
        // Identity stage: exponential part cancels.
        let ident = StageTF { gain: 1.0, zero: 2.0, pole: 2.0 };
        let h = stage_impulse_response(&ident);
        assert_eq!(h.direct_gain, 1.0);
        assert_eq!(h.exp_coefficient, 0.0);

        // 0.5 (s+2)/(s+1) = 0.5 + 0.5/(s+1).
        let s = StageTF { gain: 0.5, zero: 2.0, pole: 1.0 };
        let h = stage_impulse_response(&s);
        assert_relative_eq!(h.direct_gain, 0.5, max_relative = 1e-12);
        assert_relative_eq!(h.exp_coefficient, 0.5, max_relative = 1e-12);
        assert_relative_eq!(h.exp_rate, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn single_stage_cascade_uses_clamp_values() {
        let p = PhysicalParams {
            alpha_e: 1.0,
            alpha_i: 1.0,
            alpha_c: 1.0,
            ..PhysicalParams::reference()
        };
        let cascade = build_cascade(&p, 1).unwrap();
        let clamp = derive_clamp_values(&p).unwrap();
        let expected = stage_tf(clamp.re_clamp, clamp.ri_clamp, clamp.c_clamp, clamp.rm).unwrap();
        assert_eq!(cascade.stages[0], expected);
    }

    #[test]
    fn cascade_re_grows_toward_tip() {
        let p = PhysicalParams::reference();
        let cascade = build_cascade(&p, 45).unwrap();
        assert_eq!(cascade.stages.len(), 45);
        // alpha_E < 1 makes per-stage DC gain RM/(RE_k+RM) non-increasing.
        let dc: Vec<f64> = cascade.stages.iter().map(StageTF::dc_gain).collect();
        for pair in dc.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }
    }

    #[test]
    fn unit_alphas_make_all_stages_identical() {
        let p = PhysicalParams {
            alpha_e: 1.0,
            alpha_i: 1.0,
            alpha_c: 1.0,
            ..PhysicalParams::reference()
        };
        let cascade = build_cascade(&p, 7).unwrap();
        for s in &cascade.stages[1..] {
            assert_eq!(*s, cascade.stages[0]);
        }
    }

    #[test]
    fn identity_cascade_passes_signal_through() {
        let stages: Vec<StageTF> = (0..45)
            .map(|i| stage_tf(0.0, 1.0 + i as f64, 1e-3, 100.0).unwrap())
            .collect();
        let m = CascadeModel { n_stages: 45, stages };
        let v: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let sig = Signal::new(v.clone(), 30.0).unwrap();
        let out = simulate_cascade(&m, &sig, 16).unwrap();
        for (a, b) in out.samples().iter().zip(&v) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn single_stage_step_tracks_analytic_response() {
        // G = 0.5, Z = 2, P = 1; y(t) = 0.5 (2 - exp(-t)).
        let s = StageTF { gain: 0.5, zero: 2.0, pole: 1.0 };
        let m = CascadeModel { n_stages: 1, stages: vec![s] };
        let rate = 30.0;
        let out = simulate_cascade(&m, &step(600, rate), 16).unwrap();
        let mut max_err = 0.0_f64;
        for (n, y) in out.samples().iter().enumerate() {
            let t = n as f64 / rate;
            let exact = 0.5 * (2.0 - (-t).exp());
            max_err = max_err.max((y - exact).abs());
        }
        assert!(max_err < 1e-3, "max_err = {max_err}");
        // Final value reaches the DC gain 1.0.
        assert_relative_eq!(*out.samples().last().unwrap(), 1.0, max_relative = 1e-3);
    }

    #[test]
    fn step_final_value_matches_dc_product() {
        let p = PhysicalParams::reference();
        let m = build_cascade(&p, 5).unwrap();
        let rate = 30.0;
        let out = simulate_cascade(&m, &step(3000, rate), 16).unwrap();
        let expected = dc_gain(&m);
        assert_relative_eq!(*out.samples().last().unwrap(), expected, max_relative = 1e-3);
    }

    #[test]
    fn simulation_is_linear() {
        let p = PhysicalParams::reference();
        let m = build_cascade(&p, 10).unwrap();
        let xs: Vec<f64> = (0..300).map(|i| (i as f64 * 0.21).sin()).collect();
        let ys: Vec<f64> = (0..300).map(|i| (i as f64 * 0.13).cos()).collect();
        let (a, b) = (1.7, -0.4);
        let combined: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
        let sim = |v: Vec<f64>| {
            simulate_cascade(&m, &Signal::new(v, 30.0).unwrap(), 8)
                .unwrap()
                .samples()
                .to_vec()
        };
        let lhs = sim(combined);
        let sx = sim(xs);
        let sy = sim(ys);
        for i in 0..lhs.len() {
            assert!((lhs[i] - (a * sx[i] + b * sy[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn simulation_is_causal() {
        let p = PhysicalParams::reference();
        let m = build_cascade(&p, 10).unwrap();
        let base: Vec<f64> = (0..100).map(|i| (i as f64 * 0.31).sin()).collect();
        let mut bumped = base.clone();
        let j = 40;
        bumped[j] += 1.0;
        let out_a = simulate_cascade(&m, &Signal::new(base, 30.0).unwrap(), 4).unwrap();
        let out_b = simulate_cascade(&m, &Signal::new(bumped, 30.0).unwrap(), 4).unwrap();
        for i in 0..j {
            assert_eq!(out_a.samples()[i], out_b.samples()[i]);
        }
        assert_ne!(out_a.samples()[j], out_b.samples()[j]);
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let p = PhysicalParams::reference();
        let m = build_cascade(&p, 3).unwrap();
        let out = simulate_cascade(&m, &Signal::new(vec![], 30.0).unwrap(), 16).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn dc_gain_examples() {
        let ident = CascadeModel {
            n_stages: 2,
            stages: vec![
                StageTF { gain: 1.0, zero: 5.0, pole: 5.0 },
                StageTF { gain: 1.0, zero: 2.0, pole: 2.0 },
            ],
        };
        assert_eq!(dc_gain(&ident), 1.0);

        // One stage with RE = RM has DC gain RM/(RE+RM) = 0.5.
        let s = stage_tf(3.0, 7.0, 0.2, 3.0).unwrap();
        let single = CascadeModel { n_stages: 1, stages: vec![s] };
        assert_relative_eq!(dc_gain(&single), 0.5, max_relative = 1e-12);

        // Product law for identical stages.
        let g = s.dc_gain();
        let five = CascadeModel { n_stages: 5, stages: vec![s; 5] };
        assert_relative_eq!(dc_gain(&five), g.powi(5), max_relative = 1e-12);
    }

    #[test]
    fn params_serialize_with_symbol_names() {
        let p = PhysicalParams::reference();
        let json = serde_json::to_value(&p).unwrap();
        for key in [
            "L", "W", "h_E", "rho_E", "h_M", "sigma_M", "xi_rho", "xi_h", "C_clamp",
            "alpha_E", "alpha_I", "alpha_C",
        ] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }
}
