//! Model families and their discretization onto a grid.
//!
//! A model is a fitness penalty `a` (continuous, `a(0) = 0`, positive away
//! from 0) together with a mutant trait density `Q` (strictly positive,
//! unit mass). Discretization evaluates both at the cell midpoints,
//! renormalizes `Q` so its quadrature is exactly 1, and pins `a(0) = 0` in
//! the dedicated atom slot.

use crate::error::{Error, Result};
use crate::grid::TraitGrid;
use crate::spectral::Regime;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitnessFamily {
    /// `a(x) = c |x|^p` with `c > 0`, `0 < p <= 2`.
    Power { c: f64, p: f64 },
    /// `a(x) = c0 + c1 |x|`; the replicator-mutator context requires `c0 = 0`.
    Affine { c0: f64, c1: f64 },
    /// Explicit per-cell values.
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MutationFamily {
    Uniform,
    /// `(s+1) |x|^s`, the normalized power density on `[0, 1]`; general
    /// domains are handled by the discrete renormalization.
    Power {
        s: f64,
    },
    Table {
        values: Vec<f64>,
    },
}

/// Optional analytically known facts about a model, used to declare the
/// regime instead of detecting it (critical models are measure-zero in
/// parameter space and should be declared, not detected).
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticMeta {
    pub rho: Option<f64>,
    pub singularity_p: Option<f64>,
    pub regime: Option<Regime>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSpec {
    pub lo: f64,
    pub hi: f64,
    pub fitness: FitnessFamily,
    pub mutation: MutationFamily,
    pub analytic: Option<AnalyticMeta>,
}

impl ModelSpec {
    pub fn new(lo: f64, hi: f64, fitness: FitnessFamily, mutation: MutationFamily) -> Self {
        ModelSpec {
            lo,
            hi,
            fitness,
            mutation,
            analytic: None,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.analytic.get_or_insert_with(AnalyticMeta::default).rho = Some(rho);
        self
    }
}

/// A model evaluated on a grid.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Arc<TraitGrid>,
    /// Fitness penalty at the midpoints, strictly positive.
    pub a: Vec<f64>,
    /// Fitness at the optimal trait; always 0 for this equation.
    pub a0: f64,
    /// Mutant density at the midpoints, renormalized to unit quadrature.
    pub q: Vec<f64>,
    pub spec: ModelSpec,
}

/// Evaluates the model families at the grid midpoints.
///
/// `Q` is renormalized so `quad(Q) = 1` exactly: mass identities downstream
/// then hold to machine precision rather than quadrature precision.
/// Models declared critical (`analytic.rho == 1`) get their fitness rescaled
/// by the discrete `quad(Q/a)`, which makes the zero Perron eigenvalue exact
/// on the grid; the factor is within quadrature error of 1.
pub fn discretize_model(spec: &ModelSpec, grid: Arc<TraitGrid>) -> Result<Model> {
    if (spec.lo, spec.hi) != (grid.lo, grid.hi) {
        return Err(Error::Model(format!(
            "spec domain [{}, {}] does not match grid [{}, {}]",
            spec.lo, spec.hi, grid.lo, grid.hi
        )));
    }
    let n = grid.n_cells;

    let a: Vec<f64> = match &spec.fitness {
        FitnessFamily::Power { c, p } => {
            if !(*c > 0.0) || !(*p > 0.0 && *p <= 2.0) {
                return Err(Error::Model(format!(
                    "power fitness requires c > 0 and 0 < p <= 2, got c={c}, p={p}"
                )));
            }
            grid.midpoints
                .iter()
                .map(|x| c * x.abs().powf(*p))
                .collect()
        }
        FitnessFamily::Affine { c0, c1 } => {
            if *c0 != 0.0 {
                return Err(Error::Model(
                    "affine fitness needs c0 = 0: the equation requires a(0) = 0".into(),
                ));
            }
            if !(*c1 > 0.0) {
                return Err(Error::Model("affine fitness needs c1 > 0".into()));
            }
            grid.midpoints.iter().map(|x| c0 + c1 * x.abs()).collect()
        }
        FitnessFamily::Table { values } => {
            if values.len() != n {
                return Err(Error::Model(format!(
                    "fitness table has {} entries for {} cells",
                    values.len(),
                    n
                )));
            }
            values.clone()
        }
    };
    if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Model(format!(
            "fitness must be positive at every midpoint, a({}) = {v}",
            grid.midpoints[i]
        )));
    }

    let mut q: Vec<f64> = match &spec.mutation {
        MutationFamily::Uniform => vec![1.0; n],
        MutationFamily::Power { s } => {
            if !(*s >= 0.0) {
                return Err(Error::Model(format!(
                    "power mutation requires s >= 0, got {s}"
                )));
            }
            grid.midpoints
                .iter()
                .map(|x| (s + 1.0) * x.abs().powf(*s))
                .collect()
        }
        MutationFamily::Table { values } => {
            if values.len() != n {
                return Err(Error::Model(format!(
                    "mutation table has {} entries for {} cells",
                    values.len(),
                    n
                )));
            }
            values.clone()
        }
    };
    if let Some((i, v)) = q.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Model(format!(
            "mutant density must be positive at every midpoint, Q({}) = {v}",
            grid.midpoints[i]
        )));
    }
    let mass = grid.quad(&q);
    if !mass.is_finite() || mass <= 0.0 {
        return Err(Error::Model(
            "mutant density has no finite positive mass".into(),
        ));
    }
    for v in &mut q {
        *v /= mass;
    }

    let mut model = Model {
        grid,
        a,
        a0: 0.0,
        q,
        spec: spec.clone(),
    };

    if spec.analytic.as_ref().and_then(|m| m.rho) == Some(1.0) {
        let rho_d = model.grid.quad(
            &model
                .q
                .iter()
                .zip(&model.a)
                .map(|(q, a)| q / a)
                .collect::<Vec<_>>(),
        );
        if !rho_d.is_finite() || rho_d <= 0.0 {
            return Err(Error::Model(
                "declared-critical model has non-finite quad(Q/a)".into(),
            ));
        }
        for a in &mut model.a {
            *a *= rho_d;
        }
    }

    Ok(model)
}

impl Model {
    /// `quad(Q/(lambda + a))`; convenience wrapper over per-cell division.
    pub fn quad_q_over(&self, shift: f64) -> f64 {
        self.grid.quad(
            &self
                .q
                .iter()
                .zip(&self.a)
                .map(|(q, a)| q / (shift + a))
                .collect::<Vec<_>>(),
        )
    }

    /// Rebuilds the same model spec on a refined grid.
    pub fn refined(&self, factor: usize, grading_bump: f64) -> Result<Model> {
        let grid = Arc::new(self.grid.refined(factor, grading_bump)?);
        discretize_model(&self.spec, grid)
    }
}
