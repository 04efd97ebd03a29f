//! Perron eigenelements and the conservative change of variables.
//!
//! The generator `A u = -a u + Q <u, 1>` has an explicit principal
//! eigenpair. The eigenvalue `lambda >= 0` is the unique root of
//! `F(lambda) = quad(Q / (lambda + a)) = 1` when `rho = quad(Q/a) >= 1`,
//! and 0 otherwise. The stationary measure is
//!
//! * `gamma = Q/(lambda + a) dx` when `rho >= 1`,
//! * `gamma = (1 - rho) delta_0 + Q/a dx` when `rho < 1` (atomic part
//!   exactly balancing the density mass),
//!
//! and the dual eigenfunction `h` satisfies `-a h + <Q, h> = lambda h` with
//! the normalization `<gamma, h> = 1`. Conjugating the linear semigroup by
//! `h` and rescaling time by `alpha = quad(Q/(lambda+a)^2)` produces a
//! conservative Markov flow with jump rate `ba = alpha (lambda + a)` and
//! mutant law `bQ = gamma`, whose invariant law `pi = bQ/ba` is a
//! probability measure.

use crate::error::{Error, Result};
use crate::grid::TraitGrid;
use crate::measure::{pair, GridFn, Measure};
use crate::model::Model;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Position of `rho = quad(Q/a)` relative to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Fast,
    Critical,
    Subcritical,
}

/// Margin around 1 below which a detected rho is treated as critical.
const RHO_MARGIN: f64 = 1e-3;
/// Relative disagreement between refinement levels flagging divergence.
const DIVERGENCE_RATIO: f64 = 0.05;
/// Default absolute tolerance of the eigenvalue bisection.
pub const LAMBDA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub rho_coarse: f64,
    pub rho_fine: f64,
    pub divergent: bool,
    pub regime: Regime,
    /// Critical model whose `quad(Q/a^2)` does not converge under
    /// refinement; `h` is unavailable (only degenerate eigenfunctions exist).
    pub degenerate_critical: bool,
    pub lambda: f64,
    pub alpha: Option<f64>,
    pub res_gamma: f64,
    pub res_h: f64,
    pub pairing_err: f64,
}

/// Principal eigenelements of a model.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub regime: Regime,
    pub lambda: f64,
    pub alpha: Option<f64>,
    pub gamma: Measure,
    pub h: GridFn,
}

/// The h-transformed conservative model: coefficients `ba`, `bQ` and the
/// invariant probability density `pi = bQ / ba`.
#[derive(Debug, Clone)]
pub struct ConservativeModel {
    pub grid: Arc<TraitGrid>,
    /// Jump rate at the midpoints, `alpha (lambda + a) > 0`.
    pub ba: Vec<f64>,
    /// Jump rate at the optimal trait, `alpha * lambda` (0 in the critical case).
    pub ba0: f64,
    /// Mutant law density (the gamma density), unit quadrature.
    pub bq: Vec<f64>,
    /// Invariant density `bq / ba`, unit quadrature within tolerance.
    pub pi: Vec<f64>,
}

impl ConservativeModel {
    pub fn inf_ba(&self) -> f64 {
        self.ba.iter().fold(self.ba0, |m, &v| m.min(v))
    }

    /// Applies the dual generator `f -> ba (<bQ, f> - f)` on the cells.
    pub fn dual_generator_apply(&self, f: &[f64]) -> Vec<f64> {
        let mean = self.grid.quad2(&self.bq, f);
        self.ba
            .iter()
            .zip(f)
            .map(|(ba, f)| ba * (mean - f))
            .collect()
    }
}

/// Evaluates `F(lambda) = quad(Q / (lambda + a))`, strictly decreasing in
/// `lambda`.
pub fn perron_value(model: &Model, lambda: f64) -> f64 {
    assert!(lambda >= 0.0, "perron_value needs lambda >= 0");
    model.quad_q_over(lambda)
}

/// Two-level estimate of `rho = quad(Q/a)` with the default 5% divergence
/// ratio.
pub fn estimate_rho(model: &Model) -> Result<(f64, f64, bool)> {
    estimate_rho_with(model, DIVERGENCE_RATIO)
}

/// The fine level doubles the cells and raises the grading; the integral is
/// declared divergent when the levels disagree by more than `ratio` of the
/// value and keep growing.
pub fn estimate_rho_with(model: &Model, ratio: f64) -> Result<(f64, f64, bool)> {
    let coarse = model.quad_q_over(0.0);
    let fine = model.refined(2, 1.0)?.quad_q_over(0.0);
    let divergent =
        (fine - coarse).abs() > ratio * coarse.abs().max(1e-300) && fine.abs() > coarse.abs();
    Ok((coarse, fine, divergent))
}

/// Regime classification. Declared facts win over detection: an explicit
/// regime override first, then a declared rho, then the two-level estimate
/// with a margin of `1e-3` around 1.
pub fn classify_regime(model: &Model, rho_fine: f64, divergent: bool) -> Regime {
    if let Some(meta) = &model.spec.analytic {
        if let Some(regime) = meta.regime {
            return regime;
        }
        if let Some(rho) = meta.rho {
            return if rho > 1.0 {
                Regime::Fast
            } else if rho < 1.0 {
                Regime::Subcritical
            } else {
                Regime::Critical
            };
        }
    }
    if divergent || rho_fine > 1.0 + RHO_MARGIN {
        Regime::Fast
    } else if rho_fine < 1.0 - RHO_MARGIN {
        Regime::Subcritical
    } else {
        Regime::Critical
    }
}

/// Solves `F(lambda) = 1` by bisection after bracketing by doubling.
///
/// `F` is monotone but only quadrature-accurate, so bisection is the safe
/// choice. Returns 0 when `F(0) <= 1` (critical and subcritical regimes).
pub fn solve_lambda(model: &Model, tol: f64) -> Result<f64> {
    assert!(tol > 0.0);
    if perron_value(model, 0.0) <= 1.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while perron_value(model, hi) > 1.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numerical(
                "lambda bracket failure: F(lambda) stays above 1 after 200 doublings".into(),
            ));
        }
    }
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if perron_value(model, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Builds the stationary measure `gamma` for the eigenvalue `lambda`.
///
/// With `lambda > 0` the mass is 1 within the bisection tolerance; with
/// `lambda = 0` the atom takes up exactly the mass the density is missing,
/// which is 0 for calibrated critical models and `1 - rho` below 1.
pub fn build_gamma(model: &Model, lambda: f64) -> Result<Measure> {
    let dens: Vec<f64> = model
        .q
        .iter()
        .zip(&model.a)
        .map(|(q, a)| q / (lambda + a))
        .collect();
    if lambda > 0.0 {
        return Ok(Measure::from_density(dens));
    }
    let mut atom0 = 1.0 - model.grid.quad(&dens);
    if atom0 < -1e-9 {
        return Err(Error::Numerical(format!(
            "gamma atom mass {atom0} went negative: regime misclassified as subcritical"
        )));
    }
    atom0 = atom0.max(0.0);
    Ok(Measure { atom0, dens })
}

/// Builds the normalized dual eigenfunction and the time-scale `alpha`.
///
/// Fast regime: `alpha = quad(Q/(lambda+a)^2)`, `h = 1/(alpha (lambda + a))`
/// extended by `1/(alpha lambda)` at 0. Critical regime: same formulas with
/// `lambda = 0`, accepted only if two refinement levels of `quad(Q/a^2)`
/// agree within 1%; `h` blows up at the optimal trait and the stored
/// `value0` is 0 (measures paired with the critical `h` carry no atom).
/// Subcritical regime: the only normalizable eigenfunction is supported at
/// the optimum, `h(0) = 1/(1-rho)`, zero elsewhere.
pub fn build_h(model: &Model, regime: Regime, lambda: f64) -> Result<(Option<f64>, GridFn)> {
    let n = model.grid.n_cells;
    match regime {
        Regime::Fast => {
            let alpha = model.grid.quad(
                &model
                    .q
                    .iter()
                    .zip(&model.a)
                    .map(|(q, a)| q / ((lambda + a) * (lambda + a)))
                    .collect::<Vec<_>>(),
            );
            let values = model
                .a
                .iter()
                .map(|a| 1.0 / (alpha * (lambda + a)))
                .collect();
            Ok((
                Some(alpha),
                GridFn {
                    value0: 1.0 / (alpha * lambda),
                    values,
                },
            ))
        }
        Regime::Critical => {
            let second_moment = |m: &Model| {
                m.grid.quad(
                    &m.q.iter()
                        .zip(&m.a)
                        .map(|(q, a)| q / (a * a))
                        .collect::<Vec<_>>(),
                )
            };
            let alpha = second_moment(model);
            let alpha_fine = second_moment(&model.refined(2, 1.0)?);
            if (alpha_fine - alpha).abs() > 0.01 * alpha.abs() {
                return Err(Error::Unsupported(format!(
                    "degenerate critical model: quad(Q/a^2) does not converge under \
                     refinement ({alpha} -> {alpha_fine}); no normalizable eigenfunction"
                )));
            }
            let values = model.a.iter().map(|a| 1.0 / (alpha * a)).collect();
            Ok((
                Some(alpha),
                GridFn {
                    value0: 0.0,
                    values,
                },
            ))
        }
        Regime::Subcritical => {
            let rho = model.quad_q_over(0.0);
            Ok((
                None,
                GridFn {
                    value0: 1.0 / (1.0 - rho),
                    values: vec![0.0; n],
                },
            ))
        }
    }
}

/// The h-transformed conservative model. Requires a positive eigenvalue or
/// a critical model with finite `alpha`.
pub fn h_transform(model: &Model, lambda: f64, alpha: f64) -> Result<ConservativeModel> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Unsupported(format!(
            "h-transform needs a finite positive alpha, got {alpha}"
        )));
    }
    if lambda < 0.0 {
        return Err(Error::Unsupported("h-transform needs lambda >= 0".into()));
    }
    let ba: Vec<f64> = model.a.iter().map(|a| alpha * (lambda + a)).collect();
    let ba0 = alpha * lambda;
    let mut bq: Vec<f64> = model
        .q
        .iter()
        .zip(&model.a)
        .map(|(q, a)| q / (lambda + a))
        .collect();
    let mass = model.grid.quad(&bq);
    for v in &mut bq {
        *v /= mass; // quad(bQ) = 1 exactly
    }
    let pi: Vec<f64> = bq.iter().zip(&ba).map(|(q, a)| q / a).collect();
    Ok(ConservativeModel {
        grid: model.grid.clone(),
        ba,
        ba0,
        bq,
        pi,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EigenResiduals {
    pub res_gamma: f64,
    pub res_h: f64,
    pub pairing_err: f64,
}

/// Residual norms of the eigen-equations under the discrete generator.
///
/// `res_gamma` is the TV norm of `A gamma - lambda gamma`, `res_h` the
/// sup-norm of `A* h - lambda h` over the cells, and `pairing_err` the
/// defect of the normalization `<gamma, h> = 1`.
pub fn eigen_residual(model: &Model, lambda: f64, gamma: &Measure, h: &GridFn) -> EigenResiduals {
    let grid = &model.grid;
    let mass = gamma.total_mass(grid);
    let res_dens: Vec<f64> = model
        .a
        .iter()
        .zip(&model.q)
        .zip(&gamma.dens)
        .map(|((a, q), g)| (-a * g + q * mass) - lambda * g)
        .collect();
    let res_gamma = (lambda * gamma.atom0).abs()
        + grid.quad(&res_dens.iter().map(|r| r.abs()).collect::<Vec<_>>());

    let hq = grid.quad2(&h.values, &model.q);
    let res_h = model
        .a
        .iter()
        .zip(&h.values)
        .map(|(a, hv)| ((-a * hv + hq) - lambda * hv).abs())
        .fold(0.0f64, f64::max);

    let pairing_err = (pair(gamma, h, grid) - 1.0).abs();
    EigenResiduals {
        res_gamma,
        res_h,
        pairing_err,
    }
}

/// Runs the whole spectral pipeline: rho estimation, regime classification,
/// eigenvalue, eigenelements and residuals.
pub fn analyze(model: &Model) -> Result<(SpectralReport, Eigensystem)> {
    let (rho_coarse, rho_fine, divergent) = estimate_rho(model)?;
    let regime = classify_regime(model, rho_fine, divergent);
    let lambda = match regime {
        Regime::Fast => solve_lambda(model, LAMBDA_TOL)?,
        _ => 0.0,
    };
    if regime == Regime::Fast && lambda == 0.0 {
        return Err(Error::Numerical(
            "fast regime classified but the eigenvalue solved to 0".into(),
        ));
    }
    let gamma = build_gamma(model, lambda)?;
    let (alpha, h, degenerate) = match build_h(model, regime, lambda) {
        Ok((alpha, h)) => (alpha, h, false),
        Err(Error::Unsupported(_)) if regime == Regime::Critical => {
            // Degenerate critical branch: keep gamma, report h unavailable.
            (
                None,
                GridFn {
                    value0: 0.0,
                    values: vec![0.0; model.grid.n_cells],
                },
                true,
            )
        }
        Err(e) => return Err(e),
    };
    let residuals = if degenerate {
        EigenResiduals {
            res_gamma: eigen_residual(model, lambda, &gamma, &h).res_gamma,
            res_h: f64::NAN,
            pairing_err: f64::NAN,
        }
    } else {
        eigen_residual(model, lambda, &gamma, &h)
    };
    let report = SpectralReport {
        rho_coarse,
        rho_fine,
        divergent,
        regime,
        degenerate_critical: degenerate,
        lambda,
        alpha,
        res_gamma: residuals.res_gamma,
        res_h: residuals.res_h,
        pairing_err: residuals.pairing_err,
    };
    Ok((
        report,
        Eigensystem {
            regime,
            lambda,
            alpha,
            gamma,
            h,
        },
    ))
}
