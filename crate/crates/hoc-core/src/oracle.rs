//! Brute-force references: dense generator assembly, matrix-exponential
//! propagation and refined quadrature.
//!
//! Everything here is deliberately independent of the production steppers:
//! the generator is materialized as a dense matrix in mass coordinates
//! (density times cell weight, plus the atom slot) and exponentiated by
//! scaling-and-squaring, so integrator bugs cannot hide behind a shared
//! code path.

use crate::error::{Error, Result};
use crate::grid::TraitGrid;
use crate::measure::Measure;
use crate::model::Model;
use crate::spectral::ConservativeModel;
use nalgebra::{DMatrix, DVector};

/// Dense feasibility cap on the number of cells.
pub const MAX_DENSE_CELLS: usize = 256;

/// Discretized generator acting on `(atom, density * weight)` coordinates.
///
/// In these coordinates conservativeness is a plain column-sum property,
/// independent of the grading.
#[derive(Debug, Clone)]
pub struct DenseGenerator {
    pub dim: usize,
    pub mat: DMatrix<f64>,
}

/// Generator of the linear non-conservative equation. Row 0 is the atom:
/// `a(0) = 0` and the mutation source is absolutely continuous, so the row
/// vanishes identically while the atom still feeds the total mass.
pub fn dense_generator(model: &Model) -> Result<DenseGenerator> {
    let n = model.grid.n_cells;
    if n > MAX_DENSE_CELLS {
        return Err(Error::Config(format!(
            "dense oracle capped at {MAX_DENSE_CELLS} cells, got {n}"
        )));
    }
    let dim = n + 1;
    let mut mat = DMatrix::zeros(dim, dim);
    for j in 0..n {
        let source = model.q[j] * model.grid.weights[j];
        for k in 0..dim {
            mat[(j + 1, k)] += source;
        }
        mat[(j + 1, j + 1)] -= model.a[j];
    }
    Ok(DenseGenerator { dim, mat })
}

/// Generator of the conservative equation; columns sum to zero.
pub fn dense_generator_conservative(cm: &ConservativeModel) -> Result<DenseGenerator> {
    let n = cm.grid.n_cells;
    if n > MAX_DENSE_CELLS {
        return Err(Error::Config(format!(
            "dense oracle capped at {MAX_DENSE_CELLS} cells, got {n}"
        )));
    }
    let dim = n + 1;
    let mut mat = DMatrix::zeros(dim, dim);
    mat[(0, 0)] = -cm.ba0;
    for j in 0..n {
        let profile = cm.bq[j] * cm.grid.weights[j];
        mat[(j + 1, 0)] += profile * cm.ba0;
        for k in 0..n {
            mat[(j + 1, k + 1)] += profile * cm.ba[k];
        }
        mat[(j + 1, j + 1)] -= cm.ba[j];
    }
    Ok(DenseGenerator { dim, mat })
}

/// Measure to mass coordinates: `[atom0, dens_i * w_i, ...]`.
pub fn to_coords(m: &Measure, grid: &TraitGrid) -> DVector<f64> {
    let mut y = DVector::zeros(grid.n_cells + 1);
    y[0] = m.atom0;
    for i in 0..grid.n_cells {
        y[i + 1] = m.dens[i] * grid.weights[i];
    }
    y
}

pub fn from_coords(y: &DVector<f64>, grid: &TraitGrid) -> Measure {
    let dens = (0..grid.n_cells)
        .map(|i| y[i + 1] / grid.weights[i])
        .collect();
    Measure { atom0: y[0], dens }
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dense matrix exponential by [13/13] Pade approximation with scaling and
/// squaring (Higham 2005).
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    const THETA_13: f64 = 5.371_920_351_148_152;
    #[rustfmt::skip]
    const B: [f64; 14] = [
        64_764_752_532_480_000.0, 32_382_376_266_240_000.0, 7_771_770_303_897_600.0,
        1_187_353_796_428_800.0, 129_060_195_264_000.0, 10_559_470_521_600.0,
        670_442_572_800.0, 33_522_128_640.0, 1_323_241_920.0, 40_840_800.0,
        960_960.0, 16_380.0, 182.0, 1.0,
    ];
    let dim = a.nrows();
    if dim != a.ncols() {
        return Err(Error::Config("expm needs a square matrix".into()));
    }
    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);

    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let eye = DMatrix::<f64>::identity(dim, dim);

    let u_inner = &a6 * B[13] + &a4 * B[11] + &a2 * B[9];
    let u = &a * (&a6 * &u_inner + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &eye * B[1]);
    let v_inner = &a6 * B[12] + &a4 * B[10] + &a2 * B[8];
    let v = &a6 * &v_inner + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &eye * B[0];

    let lhs = &v - &u;
    let rhs = &v + &u;
    let lu = lhs.lu();
    let mut r = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Pade denominator in expm".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `exp(t A) y0` through [`expm`].
pub fn expm_propagate(gen: &DenseGenerator, y0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    if !(t >= 0.0) {
        return Err(Error::Config(format!(
            "propagation time must be >= 0, got {t}"
        )));
    }
    if y0.len() != gen.dim {
        return Err(Error::Config(format!(
            "coordinate vector has length {}, generator dimension is {}",
            y0.len(),
            gen.dim
        )));
    }
    Ok(expm(&(&gen.mat * t))? * y0)
}

/// The spectral integrands whose quadrature convergence is probed by
/// refinement.
#[derive(Debug, Clone, Copy)]
pub enum SpectralIntegrand {
    /// `Q/a` (the regime integral rho).
    QOverA,
    /// `Q/(lambda + a)`.
    QOverShifted(f64),
    /// `Q/(lambda + a)^2` (the time-scale alpha).
    QOverShiftedSq(f64),
    /// `Q a` (the mean-fitness moment).
    QTimesA,
    /// `Q a^power`, e.g. `power = -q` for the drift moments.
    QTimesAPow(f64),
}

impl SpectralIntegrand {
    fn eval(&self, q: f64, a: f64) -> f64 {
        match *self {
            SpectralIntegrand::QOverA => q / a,
            SpectralIntegrand::QOverShifted(l) => q / (l + a),
            SpectralIntegrand::QOverShiftedSq(l) => q / ((l + a) * (l + a)),
            SpectralIntegrand::QTimesA => q * a,
            SpectralIntegrand::QTimesAPow(p) => q * a.powf(p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineReport {
    /// Quadrature values on successively refined grids (cells doubled,
    /// grading raised by one per level).
    pub values: Vec<f64>,
    /// Absolute difference of the last two levels.
    pub error_estimate: f64,
    /// Levels stopped agreeing: differences grow and exceed 5% of the value.
    pub divergent: bool,
}

/// Evaluates the integrand on `levels` refinements of the model's grid.
pub fn refine_quadrature(
    model: &Model,
    integrand: SpectralIntegrand,
    levels: usize,
) -> Result<RefineReport> {
    if levels < 2 {
        return Err(Error::Config(
            "refinement study needs at least 2 levels".into(),
        ));
    }
    let mut values = Vec::with_capacity(levels);
    for level in 0..levels {
        let m = if level == 0 {
            model.clone()
        } else {
            model.refined(1 << level, level as f64)?
        };
        let vals: Vec<f64> =
            m.q.iter()
                .zip(&m.a)
                .map(|(&q, &a)| integrand.eval(q, a))
                .collect();
        values.push(m.grid.quad(&vals));
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let error_estimate = *diffs.last().unwrap();
    let last = values.last().unwrap().abs().max(1e-300);
    let growing = diffs.windows(2).all(|w| w[1] >= w[0]) || diffs.len() == 1;
    let divergent = error_estimate > 0.05 * last && growing;
    Ok(RefineReport {
        values,
        error_estimate,
        divergent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{discretize_model, FitnessFamily, ModelSpec, MutationFamily};
    use crate::spectral;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn model_f(n: usize, g: f64) -> Model {
        let spec = ModelSpec::new(
            0.0,
            1.0,
            FitnessFamily::Power { c: 1.0, p: 1.0 },
            MutationFamily::Uniform,
        );
        discretize_model(&spec, Arc::new(TraitGrid::build(0.0, 1.0, n, g).unwrap())).unwrap()
    }

    fn model_c(n: usize, g: f64) -> Model {
        let spec = ModelSpec::new(
            0.0,
            1.0,
            FitnessFamily::Power { c: 4.0, p: 0.5 },
            MutationFamily::Uniform,
        )
        .with_rho(0.5);
        discretize_model(&spec, Arc::new(TraitGrid::build(0.0, 1.0, n, g).unwrap())).unwrap()
    }

    #[test]
    fn propagation_at_zero_time_is_identity() {
        let m = model_f(16, 1.0);
        let gen = dense_generator(&m).unwrap();
        let u = Measure::uniform(&m.grid);
        let y = to_coords(&u, &m.grid);
        let z = expm_propagate(&gen, &y, 0.0).unwrap();
        assert!((&z - &y).amax() < 1e-14);
    }

    #[test]
    fn constant_fitness_has_closed_form() {
        let spec = ModelSpec::new(
            0.0,
            1.0,
            FitnessFamily::Table {
                values: vec![1.0; 12],
            },
            MutationFamily::Uniform,
        );
        let m = discretize_model(
            &spec,
            Arc::new(TraitGrid::build(0.0, 1.0, 12, 1.0).unwrap()),
        )
        .unwrap();
        let gen = dense_generator(&m).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let u = Measure::from_density((0..12).map(|_| rng.gen_range(0.0..2.0)).collect());
        let mass = u.total_mass(&m.grid);
        let t = 0.7;
        let z = from_coords(
            &expm_propagate(&gen, &to_coords(&u, &m.grid), t).unwrap(),
            &m.grid,
        );
        for i in 0..12 {
            let want = (-t).exp() * u.dens[i] + (1.0 - (-t).exp()) * mass * m.q[i];
            assert!((z.dens[i] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn semigroup_property_and_positivity() {
        let m = model_f(24, 2.0);
        let gen = dense_generator(&m).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let mut u = Measure::from_density((0..24).map(|_| rng.gen_range(0.0..1.0)).collect());
            u.atom0 = rng.gen_range(0.0..0.5);
            let y = to_coords(&u, &m.grid);
            let (t, s) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));
            let via_sum = expm_propagate(&gen, &y, t + s).unwrap();
            let via_steps = expm_propagate(&gen, &expm_propagate(&gen, &y, s).unwrap(), t).unwrap();
            assert!((&via_sum - &via_steps).amax() < 1e-9);
            assert!(via_sum.iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn generator_reproduces_the_eigen_relation() {
        let m = model_f(64, 2.0);
        let lam = spectral::solve_lambda(&m, spectral::LAMBDA_TOL).unwrap();
        let gamma = spectral::build_gamma(&m, lam).unwrap();
        let gen = dense_generator(&m).unwrap();
        let y = to_coords(&gamma, &m.grid);
        let residual = &gen.mat * &y - &y * lam;
        assert!(residual.amax() < 1e-9);
    }

    #[test]
    fn conservative_generator_columns_sum_to_zero_and_kill_pi() {
        let m = model_f(64, 2.0);
        let lam = spectral::solve_lambda(&m, spectral::LAMBDA_TOL).unwrap();
        let (alpha, _) = spectral::build_h(&m, spectral::Regime::Fast, lam).unwrap();
        let cm = spectral::h_transform(&m, lam, alpha.unwrap()).unwrap();
        let gen = dense_generator_conservative(&cm).unwrap();
        for j in 0..gen.dim {
            let col: f64 = gen.mat.column(j).iter().sum();
            assert!(col.abs() < 1e-12, "column {j} sums to {col}");
        }
        let pi = Measure::from_density(cm.pi.clone());
        let residual = &gen.mat * to_coords(&pi, &cm.grid);
        assert!(residual.amax() < 1e-12);
    }

    #[test]
    fn dense_oracle_rejects_large_grids() {
        let m = model_f(512, 2.0);
        assert!(dense_generator(&m).is_err());
    }

    #[test]
    fn refine_quadrature_closed_forms() {
        let c = model_c(512, 4.0);
        let r = refine_quadrature(&c, SpectralIntegrand::QOverA, 3).unwrap();
        assert!(!r.divergent);
        assert!((r.values.last().unwrap() - 0.5).abs() < 1e-4);

        let f = model_f(512, 2.0);
        let r = refine_quadrature(&f, SpectralIntegrand::QOverA, 3).unwrap();
        assert!(
            r.divergent,
            "log-divergent rho must be flagged: {:?}",
            r.values
        );

        let lam = 0.581_976_706_869_326_4;
        let r = refine_quadrature(&f, SpectralIntegrand::QOverShiftedSq(lam), 3).unwrap();
        assert!(!r.divergent);
        assert!((r.values.last().unwrap() - 1.086_161_269_630_487_6).abs() < 1e-6);

        // critical time scale: quad(Q/a^2) = 9/8 for the S model
        let spec = ModelSpec::new(
            0.0,
            1.0,
            FitnessFamily::Power {
                c: 4.0 / 3.0,
                p: 0.25,
            },
            MutationFamily::Uniform,
        )
        .with_rho(1.0);
        let s = discretize_model(
            &spec,
            Arc::new(TraitGrid::build(0.0, 1.0, 512, 4.0).unwrap()),
        )
        .unwrap();
        let r = refine_quadrature(&s, SpectralIntegrand::QOverShiftedSq(0.0), 3).unwrap();
        assert!(!r.divergent);
        assert!((r.values.last().unwrap() - 1.125).abs() < 1e-4);
    }
}
