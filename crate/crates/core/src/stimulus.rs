//! Excitation signal generators: PRBS, sine, chirp and pulse train.
//!
//! All four stimuli are deterministic functions of their spec. The PRBS is
//! produced by a maximal-length Fibonacci LFSR with standard primitive
//! taps, so the bit sequence repeats with period `2^order - 1` and over one
//! full period the high and low bit counts differ by exactly one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Kind-specific stimulus parameters. Serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StimulusKind {
    /// Pseudo-random binary sequence toggling between -A and +A.
    Prbs {
        /// Duration of one bit (s).
        bit_duration: f64,
        /// LFSR register length; the sequence period is `2^order - 1` bits.
        lfsr_order: u32,
        /// Nonzero LFSR start state.
        seed: u32,
    },
    Sine {
        /// Frequency (Hz).
        frequency: f64,
    },
    /// Linear sweep from `f0` to `f1` over the signal duration.
    Chirp { f0: f64, f1: f64 },
    /// Rectangular train: `A` while the phase within a period is below
    /// `duty`, else 0.
    Pulse {
        /// Period (s).
        period: f64,
        /// On fraction of each period, in (0, 1).
        duty: f64,
    },
}

impl StimulusKind {
    pub fn name(&self) -> &'static str {
        match self {
            StimulusKind::Prbs { .. } => "prbs",
            StimulusKind::Sine { .. } => "sine",
            StimulusKind::Chirp { .. } => "chirp",
            StimulusKind::Pulse { .. } => "pulse",
        }
    }
}

/// Full stimulus description: waveform kind plus amplitude, duration and
/// sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    #[serde(flatten)]
    pub kind: StimulusKind,
    /// Peak amplitude (V).
    pub amplitude: f64,
    /// Signal duration (s).
    pub duration: f64,
    /// Sample rate (Hz).
    pub sample_rate: f64,
    /// Optional name used in file names and reports; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl StimulusSpec {
    pub fn name(&self) -> &str {
        self.label.as_deref().unwrap_or_else(|| self.kind.name())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("duration", self.duration),
            ("sample_rate", self.sample_rate),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        match &self.kind {
            StimulusKind::Prbs {
                bit_duration,
                lfsr_order,
                seed,
            } => {
                if !(*bit_duration > 0.0) {
                    return Err(Error::domain(format!(
                        "bit_duration must be positive, got {bit_duration}"
                    )));
                }
                if !(2..=16).contains(lfsr_order) {
                    return Err(Error::domain(format!(
                        "lfsr_order must be in 2..=16, got {lfsr_order}"
                    )));
                }
                let mask = (1u32 << lfsr_order) - 1;
                if seed & mask == 0 {
                    return Err(Error::domain(format!(
                        "lfsr seed must be nonzero in its low {lfsr_order} bits, got {seed:#x}"
                    )));
                }
            }
            StimulusKind::Sine { frequency } => {
                if !(*frequency > 0.0) {
                    return Err(Error::domain(format!(
                        "frequency must be positive, got {frequency}"
                    )));
                }
            }
            StimulusKind::Chirp { f0, f1 } => {
                if !(*f0 >= 0.0) || !(*f1 >= 0.0) {
                    return Err(Error::domain(format!(
                        "chirp frequencies must be non-negative, got f0={f0}, f1={f1}"
                    )));
                }
            }
            StimulusKind::Pulse { period, duty } => {
                if !(*period > 0.0) {
                    return Err(Error::domain(format!(
                        "pulse period must be positive, got {period}"
                    )));
                }
                if !(*duty > 0.0 && *duty < 1.0) {
                    return Err(Error::domain(format!(
                        "pulse duty must be in (0, 1), got {duty}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The four stimuli of the standard experiment. Amplitudes and
    /// frequencies are low-voltage, seconds-scale defaults suited to a
    /// 30 Hz capture rate.
    pub fn default_suite() -> Vec<StimulusSpec> {
        let common = |kind| StimulusSpec {
            kind,
            amplitude: 2.0,
            duration: 120.0,
            sample_rate: 30.0,
            label: None,
        };
        vec![
            common(StimulusKind::Prbs {
                bit_duration: 1.0,
                lfsr_order: 9,
                seed: 0b1_0101_0101,
            }),
            common(StimulusKind::Sine { frequency: 0.25 }),
            common(StimulusKind::Chirp { f0: 0.05, f1: 1.0 }),
            common(StimulusKind::Pulse { period: 8.0, duty: 0.5 }),
        ]
    }
}

/// Fibonacci LFSR. Feedback is the parity of `state & taps`, inserted at
/// the register MSB; the output bit is the register LSB before the shift.
struct Lfsr {
    state: u32,
    taps: u32,
    order: u32,
}

/// Primitive-polynomial tap masks for maximal-length sequences, indexed by
/// register length 2..=16. Bit `i` of a mask taps state bit `i`.
const MAXIMAL_TAPS: [u32; 15] = [
    0b11,              // 2: x^2 + x + 1
    0b011,             // 3: x^3 + x^2 + 1
    0b0011,            // 4: x^4 + x^3 + 1
    0b00101,           // 5: x^5 + x^3 + 1
    0b000011,          // 6: x^6 + x^5 + 1
    0b0000011,         // 7: x^7 + x^6 + 1
    0b00011101,        // 8: x^8 + x^6 + x^5 + x^4 + 1
    0b000010001,       // 9: x^9 + x^5 + 1
    0b0000001001,      // 10: x^10 + x^7 + 1
    0b00000000101,     // 11: x^11 + x^9 + 1
    0b000100000111,    // 12: x^12 + x^11 + x^10 + x^4 + 1
    0b0000000100111,   // 13: x^13 + x^12 + x^11 + x^8 + 1
    0b01000000000111,  // 14: x^14 + x^13 + x^12 + x^2 + 1
    0b000000000000011, // 15: x^15 + x^14 + 1
    0b1000000001011,   // 16: x^16 + x^15 + x^13 + x^4 + 1
];

impl Lfsr {
    fn new(order: u32, seed: u32) -> Self {
        let mask = (1u32 << order) - 1;
        Lfsr {
            state: seed & mask,
            taps: MAXIMAL_TAPS[(order - 2) as usize],
            order,
        }
    }

    fn next_bit(&mut self) -> u32 {
        let out = self.state & 1;
        let feedback = (self.state & self.taps).count_ones() & 1;
        self.state = (self.state >> 1) | (feedback << (self.order - 1));
        out
    }
}

/// Generate `floor(duration * sample_rate)` samples of the stimulus.
pub fn generate_stimulus(spec: &StimulusSpec) -> Result<Signal> {
    spec.validate()?;
    let n = (spec.duration * spec.sample_rate).floor() as usize;
    let a = spec.amplitude;
    let rate = spec.sample_rate;
    let samples = match &spec.kind {
        StimulusKind::Sine { frequency } => (0..n)
            .map(|i| a * (2.0 * std::f64::consts::PI * frequency * (i as f64 / rate)).sin())
            .collect(),
        StimulusKind::Chirp { f0, f1 } => (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let phase = 2.0
                    * std::f64::consts::PI
                    * (f0 * t + (f1 - f0) * t * t / (2.0 * spec.duration));
                a * phase.sin()
            })
            .collect(),
        StimulusKind::Pulse { period, duty } => (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let phase = (t / period).fract();
                if phase < *duty {
                    a
                } else {
                    0.0
                }
            })
            .collect(),
        StimulusKind::Prbs {
            bit_duration,
            lfsr_order,
            seed,
        } => {
            let mut lfsr = Lfsr::new(*lfsr_order, *seed);
            let samples_per_bit = rate * bit_duration;
            let mut current_bit_idx: Option<u64> = None;
            let mut level = 0.0;
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let bit_idx = (i as f64 / samples_per_bit).floor() as u64;
                if current_bit_idx != Some(bit_idx) {
                    // Bits are consumed one per bit slot; sample rates below
                    // the bit rate skip LFSR states deterministically.
                    let to_advance = match current_bit_idx {
                        None => bit_idx + 1,
                        Some(prev) => bit_idx - prev,
                    };
                    let mut bit = 0;
                    for _ in 0..to_advance {
                        bit = lfsr.next_bit();
                    }
                    level = if bit == 1 { a } else { -a };
                    current_bit_idx = Some(bit_idx);
                }
                out.push(level);
            }
            out
        }
    };
    let mut sig = Signal::new(samples, rate)?;
    sig = sig.with_label(spec.name());
    Ok(sig)
}
