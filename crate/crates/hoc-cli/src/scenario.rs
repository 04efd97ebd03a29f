//! Scenario orchestration: build the model, solve the spectral problem,
//! wire the configured diagnostics as hooks, integrate, fit rates.

use crate::config::{
    DensityKind, DiagnosticEntry, Equation, InitialSpec, NormName, PhiName, RunConfig,
};
use hoc_core::diagnostics::{
    atom_mass, distance, fit_rate, phi_entropy, running_cesaro, CesaroMean, NormSpec, PhiSpec,
    RateFit,
};
use hoc_core::dynamics::{
    evolve_conservative_dual, evolve_conservative_measure, evolve_linear, evolve_nonlinear, Hook,
    RunLog, RunSpecs,
};
use hoc_core::model::discretize_model;
use hoc_core::spectral::{self, ConservativeModel, Eigensystem, Regime, SpectralReport};
use hoc_core::{Error, GridFn, Measure, Model, Result, TraitGrid};
use serde::Serialize;
use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

/// Model plus spectral analysis, ready to run.
pub struct Prepared {
    pub model: Model,
    pub report: SpectralReport,
    pub eigen: Eigensystem,
    /// Present when the regime admits the h-transform and the run needs it.
    pub conservative: Option<ConservativeModel>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let grid = Arc::new(TraitGrid::build(
        cfg.model.domain[0],
        cfg.model.domain[1],
        cfg.grid.n_cells,
        cfg.grid.grading,
    )?);
    let model = discretize_model(&cfg.model.to_spec(), grid)?;
    let (report, eigen) = spectral::analyze(&model)?;
    let needs_transform = matches!(cfg.run.equation, Equation::Conservative | Equation::Dual);
    let conservative = if needs_transform {
        if report.regime == Regime::Subcritical {
            return Err(Error::Unsupported(
                "the conservative flow needs the h-transform, which does not exist in \
                 the subcritical regime"
                    .into(),
            ));
        }
        let alpha = report.alpha.ok_or_else(|| {
            Error::Unsupported("degenerate critical model: no h-transform".into())
        })?;
        Some(spectral::h_transform(&model, report.lambda, alpha)?)
    } else {
        None
    };
    Ok(Prepared {
        model,
        report,
        eigen,
        conservative,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedFit {
    pub series: String,
    pub fit: RateFit,
}

pub enum ScenarioLog {
    Measure(RunLog<Measure>),
    Dual(RunLog<GridFn>),
}

impl ScenarioLog {
    pub fn times(&self) -> &[f64] {
        match self {
            ScenarioLog::Measure(log) => &log.times,
            ScenarioLog::Dual(log) => &log.times,
        }
    }
}

pub struct ScenarioResult {
    pub report: SpectralReport,
    pub log: ScenarioLog,
    pub fits: Vec<NamedFit>,
    pub final_mass: f64,
}

fn initial_measure(spec: &InitialSpec, prepared: &Prepared) -> Result<Measure> {
    let grid = &prepared.model.grid;
    let n = grid.n_cells;
    Ok(match spec {
        InitialSpec::Uniform => Measure::uniform(grid),
        InitialSpec::Atom0 => Measure::dirac_atom(n),
        InitialSpec::Gamma => prepared.eigen.gamma.clone(),
        InitialSpec::Table { atom0, values } => {
            if values.len() != n {
                return Err(Error::Config(format!(
                    "run.initial.values: expected {n} entries, got {}",
                    values.len()
                )));
            }
            Measure {
                atom0: *atom0,
                dens: values.clone(),
            }
        }
        InitialSpec::Mix {
            atom_weight,
            density,
        } => {
            let mut base = match density {
                DensityKind::Uniform => Measure::uniform(grid),
                DensityKind::Gamma => prepared.eigen.gamma.clone(),
            };
            let scale = (1.0 - atom_weight) / base.total_mass(grid);
            for d in &mut base.dens {
                *d *= scale;
            }
            base.atom0 = base.atom0 * scale + atom_weight;
            base
        }
    })
}

fn initial_grid_fn(spec: &InitialSpec, n: usize) -> Result<GridFn> {
    Ok(match spec {
        InitialSpec::Uniform => GridFn::one(n),
        InitialSpec::Table { atom0, values } => {
            if values.len() != n {
                return Err(Error::Config(format!(
                    "run.initial.values: expected {n} entries, got {}",
                    values.len()
                )));
            }
            GridFn {
                value0: *atom0,
                values: values.clone(),
            }
        }
        other => {
            return Err(Error::Config(format!(
                "run.initial: {other:?} does not define a dual-flow test function; \
                 use 'uniform' or 'table'"
            )))
        }
    })
}

fn norm_hook(
    name: &str,
    norm: NormName,
    p: Option<f64>,
    target: Measure,
    weight: GridFn,
    gamma_dens: Vec<f64>,
    grid: Arc<TraitGrid>,
) -> Hook<Measure> {
    let name = name.to_string();
    let h_values = weight.values.clone();
    Hook::new(vec![name.as_str()], move |_, v: &Measure| {
        let spec = match norm {
            NormName::Tv => NormSpec::Tv,
            NormName::TvH => NormSpec::TvWeighted(&weight),
            NormName::LpGammaH => NormSpec::LpGammaH {
                p: p.unwrap(),
                gamma: &gamma_dens,
                h: &h_values,
            },
            NormName::LinfRatio => NormSpec::LinfRatio(&gamma_dens),
        };
        // states outside a norm's domain (e.g. an atom under linf_ratio)
        // record as NaN instead of aborting the run
        vec![distance(v, &target, &spec, &grid).unwrap_or(f64::NAN)]
    })
}

/// Runs the configured scenario. Deterministic: identical configurations
/// produce identical outputs.
pub fn run_scenario(cfg: &RunConfig) -> Result<ScenarioResult> {
    let prepared = prepare(cfg)?;
    let mut specs = RunSpecs::new(cfg.run.t_final, cfg.run.dt, cfg.run.sample_stride)?;
    specs.snapshot_times = cfg.run.snapshot_times.clone();
    let grid = prepared.model.grid.clone();

    match cfg.run.equation {
        Equation::Dual => {
            let cm = prepared.conservative.as_ref().unwrap();
            let f0 = initial_grid_fn(&cfg.run.initial, grid.n_cells)?;
            let mut hooks = Vec::new();
            for entry in &cfg.diagnostics {
                if let DiagnosticEntry::Entropy { name, phi, p, .. } = entry {
                    let phi = match phi {
                        PhiName::XLogX => PhiSpec::XLogX,
                        PhiName::AbsP => PhiSpec::AbsP(p.unwrap()),
                    };
                    let pi = cm.pi.clone();
                    let g = grid.clone();
                    hooks.push(Hook::<GridFn>::new(vec![name.as_str()], move |_, f| {
                        vec![phi_entropy(&f.values, &pi, phi, &g).unwrap_or(f64::NAN)]
                    }));
                }
            }
            let log = evolve_conservative_dual(cm, f0, &specs, &mut hooks)?;
            let final_mass = *log.mass.last().unwrap();
            let fits = collect_fits(cfg, &log.times, |name| log.series(name))?;
            Ok(ScenarioResult {
                report: prepared.report,
                log: ScenarioLog::Dual(log),
                fits,
                final_mass,
            })
        }
        equation => {
            let mut v0 = initial_measure(&cfg.run.initial, &prepared)?;
            if equation == Equation::Nonlinear {
                let mass = v0.total_mass(&grid);
                if !(mass > 0.0) || !mass.is_finite() {
                    return Err(Error::Config(format!(
                        "run.initial: nonlinear runs need positive initial mass, got {mass}"
                    )));
                }
                v0.renormalize(&grid);
            }
            let cesaro: Rc<RefCell<CesaroMean>> =
                Rc::new(RefCell::new(CesaroMean::new(grid.n_cells)));
            let needs_cesaro = cfg
                .diagnostics
                .iter()
                .any(|d| matches!(d, DiagnosticEntry::AtomMass { cesaro: true, .. }));
            let mut hooks: Vec<Hook<Measure>> = Vec::new();
            if needs_cesaro {
                let feed = cesaro.clone();
                hooks.push(Hook::new(Vec::new(), move |t, v: &Measure| {
                    feed.borrow_mut().accumulate(t, v);
                    Vec::new()
                }));
            }
            for entry in &cfg.diagnostics {
                match entry {
                    DiagnosticEntry::DistanceToGamma { name, norm, p, .. } => {
                        hooks.push(norm_hook(
                            name,
                            *norm,
                            *p,
                            prepared.eigen.gamma.clone(),
                            prepared.eigen.h.clone(),
                            prepared.eigen.gamma.dens.clone(),
                            grid.clone(),
                        ));
                    }
                    DiagnosticEntry::DistanceToPi { name, norm, p, .. } => {
                        let cm = prepared.conservative.as_ref().ok_or_else(|| {
                            Error::Config(format!(
                                "diagnostic '{name}': distance_to_pi needs a conservative run"
                            ))
                        })?;
                        hooks.push(norm_hook(
                            name,
                            *norm,
                            *p,
                            Measure::from_density(cm.pi.clone()),
                            GridFn::one(grid.n_cells),
                            cm.pi.clone(),
                            grid.clone(),
                        ));
                    }
                    DiagnosticEntry::AtomMass {
                        name,
                        eps,
                        cesaro: use_cesaro,
                    } => {
                        let columns: Vec<String> =
                            eps.iter().map(|e| format!("{name}_{e}")).collect();
                        let eps = eps.clone();
                        let g = grid.clone();
                        let ces = cesaro.clone();
                        let use_cesaro = *use_cesaro;
                        hooks.push(Hook {
                            columns,
                            f: Box::new(move |_, v: &Measure| {
                                let state;
                                let target: &Measure = if use_cesaro {
                                    state = ces.borrow().average().unwrap_or_else(|| v.clone());
                                    &state
                                } else {
                                    v
                                };
                                eps.iter().map(|&e| atom_mass(target, e, &g)).collect()
                            }),
                        });
                    }
                    DiagnosticEntry::MeanFitness { name, .. } => {
                        let a = prepared.model.a.clone();
                        let g = grid.clone();
                        hooks.push(Hook::new(vec![name.as_str()], move |_, v: &Measure| {
                            vec![g.quad2(&v.dens, &a)]
                        }));
                    }
                    DiagnosticEntry::LambdaHat { .. } => {} // derived post-run
                    DiagnosticEntry::Entropy { .. } => unreachable!("validated"),
                }
            }
            let mut log = match equation {
                Equation::Nonlinear => evolve_nonlinear(&prepared.model, v0, &specs, &mut hooks)?,
                Equation::Linear => evolve_linear(&prepared.model, v0, &specs, &mut hooks)?,
                Equation::Conservative => {
                    let cm = prepared.conservative.as_ref().unwrap();
                    evolve_conservative_measure(cm, v0, &specs, &mut hooks)?
                }
                Equation::Dual => unreachable!(),
            };
            // derived columns
            for entry in &cfg.diagnostics {
                match entry {
                    DiagnosticEntry::MeanFitness { name, cesaro: true } => {
                        let avg = running_cesaro(&log.times, log.series(name).unwrap());
                        if let Some(slot) = log.diagnostics.iter_mut().find(|(n, _)| n == name) {
                            slot.1 = avg;
                        }
                    }
                    DiagnosticEntry::LambdaHat { name } => {
                        let series: Vec<f64> = log
                            .times
                            .iter()
                            .map(|&t| log.lambda_hat_at(t).unwrap_or(f64::NAN))
                            .collect();
                        log.diagnostics.push((name.clone(), series));
                    }
                    _ => {}
                }
            }
            let final_mass = *log.mass.last().unwrap();
            let fits = collect_fits(cfg, &log.times, |name| log.series(name))?;
            Ok(ScenarioResult {
                report: prepared.report,
                log: ScenarioLog::Measure(log),
                fits,
                final_mass,
            })
        }
    }
}

fn collect_fits<'a>(
    cfg: &RunConfig,
    times: &[f64],
    series: impl Fn(&str) -> Option<&'a [f64]>,
) -> Result<Vec<NamedFit>> {
    let mut fits = Vec::new();
    for entry in &cfg.diagnostics {
        if let Some(spec) = entry.fit() {
            let name = entry.name();
            let values = series(name).ok_or_else(|| {
                Error::Config(format!("fit requested for unknown series '{name}'"))
            })?;
            let fit = fit_rate(times, values, (spec.window[0], spec.window[1]), spec.kind)?;
            fits.push(NamedFit {
                series: name.to_string(),
                fit,
            });
        }
    }
    Ok(fits)
}
