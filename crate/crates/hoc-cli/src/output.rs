//! Result persistence: the sampled series as CSV, the run summary as JSON,
//! optional state snapshots.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! re-running an identical configuration reproduces byte-identical files.

use crate::config::{OutputFormat, RunConfig};
use crate::scenario::{ScenarioLog, ScenarioResult};
use hoc_core::{Error, Result};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

fn io_err(e: std::io::Error) -> Error {
    Error::Numerical(format!("i/o failure: {e}"))
}

/// `series.csv`: header `t,mass,log_mass,<diagnostic columns>`.
pub fn series_csv(result: &ScenarioResult) -> String {
    let (times, mass, log_mass, diagnostics) = match &result.log {
        ScenarioLog::Measure(log) => (&log.times, &log.mass, &log.log_mass, &log.diagnostics),
        ScenarioLog::Dual(log) => (&log.times, &log.mass, &log.log_mass, &log.diagnostics),
    };
    let mut out = String::from("t,mass,log_mass");
    for (name, _) in diagnostics {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for k in 0..times.len() {
        let _ = write!(out, "{},{},{}", times[k], mass[k], log_mass[k]);
        for (_, series) in diagnostics {
            let _ = write!(out, ",{}", series[k]);
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'a str,
    config: &'a RunConfig,
    spectral: &'a hoc_core::SpectralReport,
    fits: &'a [crate::scenario::NamedFit],
    final_mass: f64,
    n_samples: usize,
}

pub fn summary_json(cfg: &RunConfig, result: &ScenarioResult) -> Result<String> {
    let summary = Summary {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        spectral: &result.report,
        fits: &result.fits,
        final_mass: result.final_mass,
        n_samples: result.log.times().len(),
    };
    serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Numerical(format!("summary serialization: {e}")))
}

fn snapshot_csv(header_label: &str, scalar0: f64, midpoints: &[f64], values: &[f64]) -> String {
    let mut out = format!("# {header_label} = {scalar0}\nmidpoint,density\n");
    for (x, v) in midpoints.iter().zip(values) {
        let _ = writeln!(out, "{x},{v}");
    }
    out
}

/// Writes the requested artifacts into `dir`, creating it if needed.
pub fn write_outputs(cfg: &RunConfig, result: &ScenarioResult, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut written = Vec::new();
    let formats = &cfg.output.formats;
    if formats.contains(&OutputFormat::Series) {
        let path = dir.join("series.csv");
        std::fs::write(&path, series_csv(result)).map_err(io_err)?;
        written.push(path.display().to_string());
    }
    if formats.contains(&OutputFormat::Summary) {
        let path = dir.join("summary.json");
        std::fs::write(&path, summary_json(cfg, result)?).map_err(io_err)?;
        written.push(path.display().to_string());
    }
    if formats.contains(&OutputFormat::Snapshots) {
        match &result.log {
            ScenarioLog::Measure(log) => {
                for (k, (t, state)) in log.snapshots.iter().enumerate() {
                    let path = dir.join(format!("snapshot_{k:03}_t{t}.csv"));
                    let body =
                        snapshot_csv("atom0", state.atom0, &grid_midpoints(cfg), &state.dens);
                    std::fs::write(&path, body).map_err(io_err)?;
                    written.push(path.display().to_string());
                }
            }
            ScenarioLog::Dual(log) => {
                for (k, (t, state)) in log.snapshots.iter().enumerate() {
                    let path = dir.join(format!("snapshot_{k:03}_t{t}.csv"));
                    let body =
                        snapshot_csv("value0", state.value0, &grid_midpoints(cfg), &state.values);
                    std::fs::write(&path, body).map_err(io_err)?;
                    written.push(path.display().to_string());
                }
            }
        }
    }
    Ok(written)
}

fn grid_midpoints(cfg: &RunConfig) -> Vec<f64> {
    hoc_core::TraitGrid::build(
        cfg.model.domain[0],
        cfg.model.domain[1],
        cfg.grid.n_cells,
        cfg.grid.grading,
    )
    .map(|g| g.midpoints)
    .unwrap_or_default()
}
