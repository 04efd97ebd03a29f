//! Norms, entropies, dissipations, estimators and rate regression.

use crate::error::{Error, Result};
use crate::grid::TraitGrid;
use crate::measure::{GridFn, Measure};
use crate::model::Model;
use crate::spectral::ConservativeModel;
use serde::{Deserialize, Serialize};

/// Distance notions between measures.
#[derive(Clone)]
pub enum NormSpec<'a> {
    /// Plain total variation: `|atom gap| + quad(|density gap|)`.
    Tv,
    /// Total variation weighted by a nonnegative function (typically `h`).
    TvWeighted(&'a GridFn),
    /// `L^p(gamma^{1-p} h)` on the density parts:
    /// `quad(|gap/gamma|^p gamma h)^{1/p}`.
    LpGammaH {
        p: f64,
        gamma: &'a [f64],
        h: &'a [f64],
    },
    /// Sup of the density gap relative to a positive reference density;
    /// only defined for atom-free measures.
    LinfRatio(&'a [f64]),
}

pub fn distance(u: &Measure, v: &Measure, spec: &NormSpec, grid: &TraitGrid) -> Result<f64> {
    let n = grid.n_cells;
    assert_eq!(u.dens.len(), n);
    assert_eq!(v.dens.len(), n);
    match spec {
        NormSpec::Tv => {
            let gaps: Vec<f64> = u
                .dens
                .iter()
                .zip(&v.dens)
                .map(|(a, b)| (a - b).abs())
                .collect();
            Ok((u.atom0 - v.atom0).abs() + grid.quad(&gaps))
        }
        NormSpec::TvWeighted(w) => {
            let gaps: Vec<f64> = u
                .dens
                .iter()
                .zip(&v.dens)
                .zip(&w.values)
                .map(|((a, b), w)| (a - b).abs() * w)
                .collect();
            Ok(w.value0 * (u.atom0 - v.atom0).abs() + grid.quad(&gaps))
        }
        NormSpec::LpGammaH { p, gamma, h } => {
            if !(*p >= 1.0) {
                return Err(Error::Config(format!("Lp norm needs p >= 1, got {p}")));
            }
            let integrand: Vec<f64> = u
                .dens
                .iter()
                .zip(&v.dens)
                .zip(gamma.iter().zip(h.iter()))
                .map(|((a, b), (g, h))| ((a - b) / g).abs().powf(*p) * g * h)
                .collect();
            Ok(grid.quad(&integrand).powf(1.0 / p))
        }
        NormSpec::LinfRatio(reference) => {
            if u.atom0 != 0.0 || v.atom0 != 0.0 {
                return Err(Error::Unsupported(
                    "linf_ratio compares atom-free densities only".into(),
                ));
            }
            if reference.iter().any(|&r| !(r > 0.0)) {
                return Err(Error::Config(
                    "linf_ratio needs a positive reference".into(),
                ));
            }
            Ok(u.dens
                .iter()
                .zip(&v.dens)
                .zip(reference.iter())
                .map(|((a, b), r)| ((a - b) / r).abs())
                .fold(0.0, f64::max))
        }
    }
}

/// Convex functions whose Jensen gaps drive the entropy estimates.
#[derive(Debug, Clone, Copy)]
pub enum PhiSpec {
    /// `|x|^p` with `p` in `[1, 2]`.
    AbsP(f64),
    /// `x log x` on positive functions.
    XLogX,
}

impl PhiSpec {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            PhiSpec::AbsP(p) => x.abs().powf(p),
            PhiSpec::XLogX => {
                let x = x.max(1e-300);
                x * x.ln()
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            PhiSpec::AbsP(p) => p * x.signum() * x.abs().powf(p - 1.0),
            PhiSpec::XLogX => x.max(1e-300).ln() + 1.0,
        }
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        match *self {
            PhiSpec::AbsP(p) => {
                if !(1.0..=2.0).contains(&p) {
                    return Err(Error::Config(format!(
                        "abs_p entropy needs p in [1,2], got {p}"
                    )));
                }
            }
            PhiSpec::XLogX => {
                if f.iter().any(|&v| v < 0.0) {
                    return Err(Error::Model(
                        "x log x entropy needs a nonnegative function".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Jensen gap `quad(Phi(f) pi) - Phi(quad(f pi))` against a probability
/// density `pi`.
pub fn phi_entropy(f: &[f64], pi: &[f64], phi: PhiSpec, grid: &TraitGrid) -> Result<f64> {
    phi.check(f)?;
    let mean = grid.quad2(f, pi);
    let phis: Vec<f64> = f.iter().map(|&x| phi.apply(x)).collect();
    Ok(grid.quad2(&phis, pi) - phi.apply(mean))
}

/// Entropy dissipation of the dual flow as the double quadrature
/// `sum over cell pairs of [Phi(f(x)) - Phi(f(y)) - Phi'(f(y)) (f(x)-f(y))]
/// bQ(x) bQ(y)`; nonnegative by convexity.
pub fn phi_dissipation(f: &[f64], bq: &[f64], phi: PhiSpec, grid: &TraitGrid) -> Result<f64> {
    phi.check(f)?;
    let n = grid.n_cells;
    assert_eq!(f.len(), n);
    let phis: Vec<f64> = f.iter().map(|&x| phi.apply(x)).collect();
    let dphis: Vec<f64> = f.iter().map(|&x| phi.derivative(x)).collect();
    let mut total = 0.0;
    for y in 0..n {
        let wy = bq[y] * grid.weights[y];
        let mut inner = 0.0;
        for x in 0..n {
            let wx = bq[x] * grid.weights[x];
            inner += wx * (phis[x] - phis[y] - dphis[y] * (f[x] - f[y]));
        }
        total += wy * inner;
    }
    Ok(total)
}

/// `quad(f log(f/g))` with the `0 log 0 = 0` convention.
pub fn kl_divergence(f: &[f64], g: &[f64], grid: &TraitGrid) -> Result<f64> {
    let mut integrand = Vec::with_capacity(f.len());
    for (&fi, &gi) in f.iter().zip(g) {
        if fi < 0.0 || gi < 0.0 {
            return Err(Error::Model(
                "KL divergence needs nonnegative densities".into(),
            ));
        }
        if fi == 0.0 {
            integrand.push(0.0);
        } else if gi == 0.0 {
            return Err(Error::Model(
                "KL divergence support violation: f > 0 where g = 0".into(),
            ));
        } else {
            integrand.push(fi * (fi / gi).ln());
        }
    }
    Ok(grid.quad(&integrand))
}

/// Running time average of measures by the trapezoid rule.
///
/// Feeding probability measures keeps the average a probability measure to
/// rounding.
#[derive(Debug, Clone)]
pub struct CesaroMean {
    acc: Measure,
    span: f64,
    last: Option<(f64, Measure)>,
}

impl CesaroMean {
    pub fn new(n_cells: usize) -> Self {
        CesaroMean {
            acc: Measure::zero(n_cells),
            span: 0.0,
            last: None,
        }
    }

    pub fn accumulate(&mut self, t: f64, state: &Measure) {
        if let Some((t_prev, prev)) = &self.last {
            let dt = t - t_prev;
            assert!(dt > 0.0, "cesaro accumulation needs increasing times");
            self.acc.atom0 += 0.5 * dt * (prev.atom0 + state.atom0);
            for i in 0..self.acc.dens.len() {
                self.acc.dens[i] += 0.5 * dt * (prev.dens[i] + state.dens[i]);
            }
            self.span += dt;
        }
        self.last = Some((t, state.clone()));
    }

    /// The normalized running average; `None` until two samples arrived.
    pub fn average(&self) -> Option<Measure> {
        if self.span <= 0.0 {
            return None;
        }
        let mut avg = self.acc.clone();
        avg.atom0 /= self.span;
        for d in &mut avg.dens {
            *d /= self.span;
        }
        Some(avg)
    }
}

/// Mass of the atom plus the density within `|x| <= eps`.
///
/// A grid cannot separate an emerging atom from an integrable singularity;
/// compare against `(1 - rho) + qa_window(model, eps)`, not `1 - rho`.
pub fn atom_mass(m: &Measure, eps: f64, grid: &TraitGrid) -> f64 {
    let mut total = m.atom0;
    for i in 0..grid.n_cells {
        if grid.midpoints[i].abs() <= eps {
            total += m.dens[i] * grid.weights[i];
        }
    }
    total
}

/// The absolutely continuous correction `integral of Q/a over |x| <= eps`.
pub fn qa_window(model: &Model, eps: f64) -> f64 {
    let grid = &model.grid;
    let mut total = 0.0;
    for i in 0..grid.n_cells {
        if grid.midpoints[i].abs() <= eps {
            total += model.q[i] / model.a[i] * grid.weights[i];
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `log v = c - rate t`.
    Exponential,
    /// `log v = c - rate log t`.
    Polynomial,
    /// `log v = c - rate t - kappa log t`: an exponential with a polynomial
    /// prefactor. The relaxation spectra here touch their edge, so pure
    /// exponential fits overestimate the rate by roughly `1/t`; this kind
    /// separates the two.
    ExponentialPoly,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub kind: FitKind,
    pub rate: f64,
    /// Exponent of the polynomial prefactor (ExponentialPoly only).
    pub prefactor_exponent: Option<f64>,
    pub r2: f64,
    pub window: (f64, f64),
    /// `r2 >= 0.98`; fits below that are reported but flagged unreliable.
    pub reliable: bool,
}

/// Least-squares rate regression of a positive series over a window.
pub fn fit_rate(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
    kind: FitKind,
) -> Result<RateFit> {
    assert_eq!(times.len(), values.len());
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= window.0 && t <= window.1)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 10 {
        return Err(Error::Config(format!(
            "rate fit needs at least 10 points in the window, got {}",
            pts.len()
        )));
    }
    if pts.iter().any(|&(t, v)| !(v > 0.0) || !(t > 0.0)) {
        return Err(Error::Numerical(
            "rate fit needs positive times and values in the window".into(),
        ));
    }
    let ys: Vec<f64> = pts.iter().map(|&(_, v)| v.ln()).collect();
    let (coeffs, r2) = match kind {
        FitKind::Exponential => {
            let xs: Vec<f64> = pts.iter().map(|&(t, _)| t).collect();
            let (slope, _, r2) = simple_ls(&xs, &ys);
            (vec![slope], r2)
        }
        FitKind::Polynomial => {
            let xs: Vec<f64> = pts.iter().map(|&(t, _)| t.ln()).collect();
            let (slope, _, r2) = simple_ls(&xs, &ys);
            (vec![slope], r2)
        }
        FitKind::ExponentialPoly => {
            let x1: Vec<f64> = pts.iter().map(|&(t, _)| t).collect();
            let x2: Vec<f64> = pts.iter().map(|&(t, _)| t.ln()).collect();
            let (b1, b2, r2) = two_regressor_ls(&x1, &x2, &ys);
            (vec![b1, b2], r2)
        }
    };
    Ok(RateFit {
        kind,
        rate: -coeffs[0],
        prefactor_exponent: coeffs.get(1).map(|&b| -b),
        r2,
        window,
        reliable: r2 >= 0.98,
    })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, r2)`.
fn simple_ls(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    (a, b, r_squared(ys, |i| a * xs[i] + b))
}

/// Least squares `y = b1 x1 + b2 x2 + c` via the 2x2 normal equations on
/// centered regressors.
fn two_regressor_ls(x1: &[f64], x2: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = ys.len() as f64;
    let m1 = x1.iter().sum::<f64>() / n;
    let m2 = x2.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut s11, mut s22, mut s12, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..ys.len() {
        let (d1, d2, dy) = (x1[i] - m1, x2[i] - m2, ys[i] - my);
        s11 += d1 * d1;
        s22 += d2 * d2;
        s12 += d1 * d2;
        s1y += d1 * dy;
        s2y += d2 * dy;
    }
    let det = s11 * s22 - s12 * s12;
    let b1 = (s22 * s1y - s12 * s2y) / det;
    let b2 = (s11 * s2y - s12 * s1y) / det;
    let c = my - b1 * m1 - b2 * m2;
    (b1, b2, r_squared(ys, |i| b1 * x1[i] + b2 * x2[i] + c))
}

fn r_squared(ys: &[f64], predict: impl Fn(usize) -> f64) -> f64 {
    let n = ys.len() as f64;
    let my = ys.iter().sum::<f64>() / n;
    let ss_res: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, y)| (y - predict(i)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if ss_tot == 0.0 {
        return 1.0;
    }
    1.0 - ss_res / ss_tot
}

/// Self-test of the dual generator assembly: applying it to `ba^{-q}` must
/// reproduce `quad(ba^{-q} bQ) ba - ba^{1-q}` to rounding.
pub fn drift_residual(cm: &ConservativeModel, q: f64) -> f64 {
    assert!(q > 1.0, "drift condition needs q > 1");
    let v: Vec<f64> = cm.ba.iter().map(|a| a.powf(-q)).collect();
    let applied = cm.dual_generator_apply(&v);
    let moment = cm.grid.quad2(&v, &cm.bq);
    applied
        .iter()
        .zip(&cm.ba)
        .map(|(lhs, &a)| (lhs - (moment * a - a.powf(1.0 - q))).abs())
        .fold(0.0, f64::max)
}

/// Running time average of a recorded diagnostic series, e.g. the mean
/// fitness along a nonlinear run.
pub fn mean_fitness_cesaro(
    log: &crate::dynamics::RunLog<Measure>,
    series: &str,
) -> Result<Vec<f64>> {
    let values = log
        .series(series)
        .ok_or_else(|| Error::Config(format!("run log has no series named '{series}'")))?;
    Ok(running_cesaro(&log.times, values))
}

/// Running trapezoid average of a sampled series; entry `k` averages over
/// `[t_0, t_k]`. The first entry repeats the first value.
pub fn running_cesaro(times: &[f64], values: &[f64]) -> Vec<f64> {
    assert_eq!(times.len(), values.len());
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for k in 0..values.len() {
        if k == 0 {
            out.push(values[0]);
        } else {
            acc += 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
            out.push(acc / (times[k] - times[0]));
        }
    }
    out
}
