//! Uniformly sampled real-valued time series.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for declaring two sample rates equal. Rates that come
/// back from CSV ingestion carry rounding at the last few ulps, so exact
/// float equality is too strict.
pub const RATE_REL_TOL: f64 = 1e-9;

/// Relative tolerance on time-column uniformity: one part in 1e6.
pub const UNIFORMITY_REL_TOL: f64 = 1e-6;

/// A uniformly sampled signal. Sample `i` sits at time `i / sample_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl Signal {
    /// Build a signal, rejecting non-positive rates and non-finite samples.
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::domain(format!(
                "sample_rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Signal {
            samples,
            sample_rate,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `i` in seconds.
    pub fn time_at(&self, i: usize) -> f64 {
        i as f64 / self.sample_rate
    }

    /// True when the two signals' rates agree to [`RATE_REL_TOL`].
    pub fn same_rate(&self, other: &Signal) -> bool {
        rates_equal(self.sample_rate, other.sample_rate)
    }

    /// Serialize as two-column CSV `time_s,value` with a one-line header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("time_s,value\n");
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(out, "{},{}", self.time_at(i), v).expect("string write");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read a two-column `time_s,value` CSV. The sample rate is inferred
    /// from the time column, which must be uniform to one part in 1e6.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let columns = parse_numeric_csv(&text, 2, "time_s")?;
        let (times, values) = {
            let mut it = columns.into_iter();
            (it.next().unwrap(), it.next().unwrap())
        };
        let sample_rate = infer_rate(&times)?;
        Signal::new(values, sample_rate)
    }
}

pub(crate) fn rates_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATE_REL_TOL * a.abs().max(b.abs())
}

/// Infer the sample rate from a strictly increasing, uniform time column.
/// The first gap is the uniformity reference so violations are reported at
/// the first row that breaks the spacing; the returned rate averages over
/// the whole column.
pub(crate) fn infer_rate(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::data(
            "need at least 2 rows to infer a sample rate".to_string(),
        ));
    }
    let n = times.len();
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::data(format!(
            "non-monotonic time at row 1: {} after {}",
            times[1], times[0]
        )));
    }
    for i in 2..n {
        let gap = times[i] - times[i - 1];
        if gap <= 0.0 {
            return Err(Error::data(format!(
                "non-monotonic time at row {i}: {} after {}",
                times[i],
                times[i - 1]
            )));
        }
        if (gap - dt).abs() > UNIFORMITY_REL_TOL * dt {
            return Err(Error::data(format!(
                "non-uniform sampling at row {i}: step {gap} vs step {dt}"
            )));
        }
    }
    Ok((n - 1) as f64 / (times[n - 1] - times[0]))
}

/// Parse a comma-separated numeric table with a fixed column count.
///
/// Lines starting with `#` are comments (used for unit declarations in
/// recording files). The first non-comment line must be a header whose
/// first field is `first_header`. Errors carry 1-based line numbers.
pub(crate) fn parse_numeric_csv(
    text: &str,
    n_columns: usize,
    first_header: &str,
) -> Result<Vec<Vec<f64>>> {
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_columns];
    let mut saw_header = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            let first = line.split(',').next().unwrap_or("").trim();
            if first != first_header {
                return Err(Error::data(format!(
                    "line {lineno}: expected header starting with '{first_header}', got '{first}'"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_columns {
            return Err(Error::data(format!(
                "line {lineno}: expected {n_columns} columns, got {}",
                fields.len()
            )));
        }
        for (c, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::data(format!("line {lineno}: cannot parse '{field}' as a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "line {lineno}: non-finite value {v}"
                )));
            }
            columns[c].push(v);
        }
    }
    if !saw_header {
        return Err(Error::data("file has no header line".to_string()));
    }
    Ok(columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan_and_bad_rate() {
        assert!(Signal::new(vec![0.0, f64::NAN], 30.0).is_err());
        assert!(Signal::new(vec![0.0], 0.0).is_err());
        assert!(Signal::new(vec![0.0], -1.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        let s = Signal::new(vec![0.0, 0.123456789012345, -2.5e-7, 3.0], 30.0).unwrap();
        s.write_csv(&path).unwrap();
        let back = Signal::read_csv(&path).unwrap();
        assert_eq!(back.samples(), s.samples());
        assert!(rates_equal(back.sample_rate(), 30.0));
    }

    #[test]
    fn non_uniform_time_is_rejected_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "time_s,value\n0,1\n0.1,2\n0.3,3\n").unwrap();
        let err = Signal::read_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("non-uniform"), "{msg}");
    }

    #[test]
    fn ragged_row_is_rejected_with_line_number() {
        let err = parse_numeric_csv("time_s,value\n0,1\n0.1\n", 2, "time_s").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
