//! JSON run configuration: schema, defaults and validation.
//!
//! Unknown keys are rejected by the deserializer; numeric sanity is checked
//! afterwards with field-path error messages (`run.dt: ...`).

use hoc_core::diagnostics::FitKind;
use hoc_core::model::{AnalyticMeta, FitnessFamily, ModelSpec, MutationFamily};
use hoc_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub run: RunSection,
    #[serde(default)]
    pub diagnostics: Vec<DiagnosticEntry>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `[lo, hi]` with `lo <= 0 <= hi`.
    pub domain: [f64; 2],
    pub fitness: FitnessFamily,
    pub mutation: MutationFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticMeta>,
}

impl ModelSection {
    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            lo: self.domain[0],
            hi: self.domain[1],
            fitness: self.fitness.clone(),
            mutation: self.mutation.clone(),
            analytic: self.analytic.clone(),
        }
    }
}

fn default_grading() -> f64 {
    1.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_cells: usize,
    #[serde(default = "default_grading")]
    pub grading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Nonlinear,
    Linear,
    Conservative,
    Dual,
}

fn default_dt() -> f64 {
    0.01
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub equation: Equation,
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_times: Vec<f64>,
}

/// Initial state. For the dual equation, `uniform` means the constant
/// function 1 and `table` reads `atom0` as the value at the optimal trait.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Uniform,
    Atom0,
    Gamma,
    Table {
        #[serde(default)]
        atom0: f64,
        values: Vec<f64>,
    },
    Mix {
        atom_weight: f64,
        density: DensityKind,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Uniform,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormName {
    Tv,
    /// Total variation weighted by the dual eigenfunction h.
    TvH,
    /// `L^p(gamma^{1-p} h)`; requires the `p` field.
    LpGammaH,
    /// Sup of the density gap relative to gamma.
    LinfRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiName {
    #[serde(rename = "xlogx")]
    XLogX,
    /// `|x|^p`; requires the `p` field.
    AbsP,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub kind: FitKind,
    pub window: [f64; 2],
}

/// A named diagnostic column (or column family) attached to the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiagnosticEntry {
    /// Distance of the evolved state to the stationary measure gamma.
    DistanceToGamma {
        name: String,
        norm: NormName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fit: Option<FitSpec>,
    },
    /// Distance to the invariant density pi (conservative runs).
    DistanceToPi {
        name: String,
        norm: NormName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fit: Option<FitSpec>,
    },
    /// Mass within `|x| <= eps` (one column per eps); optionally of the
    /// running Cesaro average instead of the instantaneous state.
    AtomMass {
        name: String,
        eps: Vec<f64>,
        #[serde(default)]
        cesaro: bool,
    },
    /// `<v_t, a>`, optionally time-averaged.
    MeanFitness {
        name: String,
        #[serde(default)]
        cesaro: bool,
    },
    /// Trailing-window slope of the accumulated log mass (nonlinear runs).
    LambdaHat { name: String },
    /// Phi-entropy of the dual state against pi (dual runs).
    Entropy {
        name: String,
        phi: PhiName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fit: Option<FitSpec>,
    },
}

impl DiagnosticEntry {
    pub fn name(&self) -> &str {
        match self {
            DiagnosticEntry::DistanceToGamma { name, .. }
            | DiagnosticEntry::DistanceToPi { name, .. }
            | DiagnosticEntry::AtomMass { name, .. }
            | DiagnosticEntry::MeanFitness { name, .. }
            | DiagnosticEntry::LambdaHat { name }
            | DiagnosticEntry::Entropy { name, .. } => name,
        }
    }

    pub fn fit(&self) -> Option<&FitSpec> {
        match self {
            DiagnosticEntry::DistanceToGamma { fit, .. }
            | DiagnosticEntry::DistanceToPi { fit, .. }
            | DiagnosticEntry::Entropy { fit, .. } => fit.as_ref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Series,
    Summary,
    Snapshots,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Series, OutputFormat::Summary]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: None,
            formats: default_formats(),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
    validate(&cfg)?;
    Ok(cfg)
}

fn fail(path: &str, msg: &str) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let [lo, hi] = cfg.model.domain;
    if !(lo <= 0.0 && 0.0 <= hi && lo < hi) {
        return Err(fail("model.domain", "needs lo <= 0 <= hi and lo < hi"));
    }
    if cfg.grid.n_cells < 4 {
        return Err(fail("grid.n_cells", "needs at least 4 cells"));
    }
    if !(cfg.grid.grading >= 1.0) {
        return Err(fail("grid.grading", "must be a real >= 1"));
    }
    if !(cfg.run.t_final > 0.0) {
        return Err(fail("run.t_final", "must be positive"));
    }
    if !(cfg.run.dt > 0.0) {
        return Err(fail("run.dt", "must be positive"));
    }
    if cfg.run.sample_stride == 0 {
        return Err(fail("run.sample_stride", "must be at least 1"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (i, entry) in cfg.diagnostics.iter().enumerate() {
        let path = format!("diagnostics[{i}]");
        if !seen.insert(entry.name().to_string()) {
            return Err(fail(
                &path,
                &format!("duplicate diagnostic name '{}'", entry.name()),
            ));
        }
        match entry {
            DiagnosticEntry::DistanceToGamma { norm, p, .. }
            | DiagnosticEntry::DistanceToPi { norm, p, .. } => {
                if *norm == NormName::LpGammaH && !p.map(|p| p >= 1.0).unwrap_or(false) {
                    return Err(fail(&format!("{path}.p"), "lp_gamma_h needs p >= 1"));
                }
            }
            DiagnosticEntry::AtomMass { eps, .. } => {
                if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0)) {
                    return Err(fail(&format!("{path}.eps"), "needs positive radii"));
                }
            }
            DiagnosticEntry::Entropy { phi, p, .. } => {
                if *phi == PhiName::AbsP && !p.map(|p| (1.0..=2.0).contains(&p)).unwrap_or(false) {
                    return Err(fail(
                        &format!("{path}.p"),
                        "abs_p entropy needs p in [1, 2]",
                    ));
                }
            }
            _ => {}
        }
        if let Some(fit) = entry.fit() {
            if !(fit.window[0] < fit.window[1]) {
                return Err(fail(&format!("{path}.fit.window"), "needs t_lo < t_hi"));
            }
        }
    }
    for (i, entry) in cfg.diagnostics.iter().enumerate() {
        let dual_run = cfg.run.equation == Equation::Dual;
        let is_entropy = matches!(entry, DiagnosticEntry::Entropy { .. });
        if dual_run != is_entropy {
            return Err(fail(
                &format!("diagnostics[{i}]"),
                if dual_run {
                    "dual runs support entropy diagnostics only"
                } else {
                    "entropy diagnostics apply to dual runs only"
                },
            ));
        }
    }
    if let InitialSpec::Mix { atom_weight, .. } = &cfg.run.initial {
        if !(0.0..=1.0).contains(atom_weight) {
            return Err(fail("run.initial.atom_weight", "must lie in [0, 1]"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {
            "domain": [0.0, 1.0],
            "fitness": {"family": "power", "c": 1.0, "p": 1.0},
            "mutation": {"family": "uniform"}
        },
        "grid": {"n_cells": 64},
        "run": {
            "equation": "nonlinear",
            "t_final": 5.0,
            "initial": {"kind": "uniform"}
        }
    }"#;

    #[test]
    fn minimal_document_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.grid.grading, 1.2);
        assert_eq!(cfg.run.dt, 0.01);
        assert_eq!(cfg.run.sample_stride, 10);
        assert!(cfg.run.snapshot_times.is_empty());
        assert_eq!(
            cfg.output.formats,
            vec![OutputFormat::Series, OutputFormat::Summary]
        );
        assert!(cfg.diagnostics.is_empty());
    }

    #[test]
    fn negative_dt_rejected_with_field_path() {
        let text = MINIMAL.replace("\"t_final\": 5.0,", "\"t_final\": 5.0, \"dt\": -0.01,");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("run.dt"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("\"n_cells\": 64", "\"n_cells\": 64, \"ncells\": 64");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn duplicate_diagnostic_names_rejected() {
        let text = MINIMAL.replace(
            "\"run\": {",
            r#""diagnostics": [
                {"kind": "mean_fitness", "name": "x"},
                {"kind": "lambda_hat", "name": "x"}
            ],
            "run": {"#,
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn lp_norm_requires_p() {
        let text = MINIMAL.replace(
            "\"run\": {",
            r#""diagnostics": [
                {"kind": "distance_to_gamma", "name": "lp", "norm": "lp_gamma_h"}
            ],
            "run": {"#,
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains(".p"), "{err}");
    }

    #[test]
    fn entropy_diagnostics_only_on_dual_runs() {
        let text = MINIMAL.replace(
            "\"run\": {",
            r#""diagnostics": [
                {"kind": "entropy", "name": "ent", "phi": "xlogx"}
            ],
            "run": {"#,
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("dual"), "{err}");
    }
}
