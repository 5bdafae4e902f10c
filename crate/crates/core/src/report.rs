//! Rendering of experiment reports: an aligned text table shaped like the
//! Hybrid/Normal comparison, a machine-readable summary CSV, and the
//! estimation trace export.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::estimate::EstimationResult;
use crate::pipeline::ExperimentReport;

/// Scientific notation in the report's house style, e.g. `1.1225e-04`.
pub fn sci(x: f64) -> String {
    if x == 0.0 {
        return "0.0000e+00".to_string();
    }
    let s = format!("{x:.4e}");
    let (mantissa, exponent) = s.split_once('e').expect("exponent in {:.4e} output");
    let exp: i32 = exponent.parse().expect("integer exponent");
    format!("{mantissa}e{}{:02}", if exp < 0 { "-" } else { "+" }, exp.abs())
}

/// Fitting percent in the report's house style, e.g. `%97.71`.
pub fn percent(x: f64) -> String {
    format!("%{x:.2}")
}

/// Aligned text table: one row per stimulus plus the average row.
pub fn render_text(report: &ExperimentReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>12} {:>12} {:>12} {:>12}",
        "stimulus", "NMSE (H)", "NMSE (N)", "Fitting (H)", "Fitting (N)"
    )
    .expect("string write");
    for row in &report.rows {
        writeln!(
            out,
            "{:<12} {:>12} {:>12} {:>12} {:>12}",
            row.name,
            sci(row.nmse_hybrid),
            sci(row.nmse_normal),
            percent(row.fitting_hybrid),
            percent(row.fitting_normal)
        )
        .expect("string write");
    }
    if let Some(avg) = &report.averages {
        writeln!(
            out,
            "{:<12} {:>12} {:>12} {:>12} {:>12}",
            "average",
            sci(avg.nmse_hybrid),
            sci(avg.nmse_normal),
            percent(avg.fitting_hybrid),
            percent(avg.fitting_normal)
        )
        .expect("string write");
    }
    if !report.failures.is_empty() {
        writeln!(out, "\nfailed stimuli:").expect("string write");
        for f in &report.failures {
            writeln!(out, "  {}: {}", f.name, f.error).expect("string write");
        }
    }
    out
}

/// Machine-readable summary with full-precision values.
pub fn summary_csv(report: &ExperimentReport) -> String {
    let mut out =
        String::from("stimulus,nmse_hybrid,nmse_normal,fitting_hybrid,fitting_normal\n");
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.name, row.nmse_hybrid, row.nmse_normal, row.fitting_hybrid, row.fitting_normal
        )
        .expect("string write");
    }
    if let Some(avg) = &report.averages {
        writeln!(
            out,
            "average,{},{},{},{}",
            avg.nmse_hybrid, avg.nmse_normal, avg.fitting_hybrid, avg.fitting_normal
        )
        .expect("string write");
    }
    out
}

/// Write `report.txt` and `summary.csv` under `out_dir`.
pub fn write_outputs(report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    std::fs::write(out_dir.join("report.txt"), render_text(report))?;
    std::fs::write(out_dir.join("summary.csv"), summary_csv(report))?;
    Ok(())
}

/// Per-iteration objective CSV of a multi-start estimation.
pub fn write_estimation_trace(path: &Path, result: &EstimationResult) -> Result<()> {
    let mut out = String::from("restart,iteration,objective\n");
    for (r, trace) in result.traces.iter().enumerate() {
        for (i, obj) in trace.objective_per_iteration.iter().enumerate() {
            writeln!(out, "{r},{i},{obj}").expect("string write");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
