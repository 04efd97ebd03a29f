//! Atom-plus-density representation of finite measures and of test
//! functions on the grid.
//!
//! Every evolved state, eigenmeasure and invariant law is a `Measure`: a
//! point mass at the optimal trait 0 plus a per-cell density. The atom slot
//! is exact by construction; the dynamics never smear it into a cell.

use crate::grid::TraitGrid;
use serde::Serialize;

/// Finite (signed) measure on the trait interval: `atom0 * delta_0 + dens dx`.
#[derive(Debug, Clone, Serialize)]
pub struct Measure {
    /// Mass of the atom at trait 0.
    pub atom0: f64,
    /// Per-cell density values at the midpoints.
    pub dens: Vec<f64>,
}

impl Measure {
    pub fn zero(n_cells: usize) -> Self {
        Measure {
            atom0: 0.0,
            dens: vec![0.0; n_cells],
        }
    }

    /// Unit Dirac mass at the optimal trait.
    pub fn dirac_atom(n_cells: usize) -> Self {
        Measure {
            atom0: 1.0,
            dens: vec![0.0; n_cells],
        }
    }

    pub fn from_density(dens: Vec<f64>) -> Self {
        Measure { atom0: 0.0, dens }
    }

    /// Unit-mass uniform density on the grid interval.
    pub fn uniform(grid: &TraitGrid) -> Self {
        let c = 1.0 / (grid.hi - grid.lo);
        Measure {
            atom0: 0.0,
            dens: vec![c; grid.n_cells],
        }
    }

    /// All mass in a single cell (a discrete Dirac at that midpoint).
    pub fn cell_concentrated(grid: &TraitGrid, cell: usize) -> Self {
        let mut dens = vec![0.0; grid.n_cells];
        dens[cell] = 1.0 / grid.weights[cell];
        Measure { atom0: 0.0, dens }
    }

    pub fn total_mass(&self, grid: &TraitGrid) -> f64 {
        self.atom0 + grid.quad(&self.dens)
    }

    /// Divides by the current total mass and returns it.
    pub fn renormalize(&mut self, grid: &TraitGrid) -> f64 {
        let m = self.total_mass(grid);
        self.atom0 /= m;
        for d in &mut self.dens {
            *d /= m;
        }
        m
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atom0 >= 0.0 && self.dens.iter().all(|&d| d >= 0.0)
    }
}

/// Function on the grid: a value at the trait 0 plus per-cell values.
///
/// Dual objects (the eigenfunction `h`, test functions of the dual flow)
/// live here; the value at 0 matters because the dual flow freezes it
/// whenever the decay rate vanishes at the optimum.
#[derive(Debug, Clone, Serialize)]
pub struct GridFn {
    pub value0: f64,
    pub values: Vec<f64>,
}

impl GridFn {
    pub fn constant(c: f64, n_cells: usize) -> Self {
        GridFn {
            value0: c,
            values: vec![c; n_cells],
        }
    }

    pub fn one(n_cells: usize) -> Self {
        GridFn::constant(1.0, n_cells)
    }
}

/// Duality bracket `<mu, f> = atom0 * f(0) + integral of f against the density`.
pub fn pair(mu: &Measure, f: &GridFn, grid: &TraitGrid) -> f64 {
    mu.atom0 * f.value0 + grid.quad2(&mu.dens, &f.values)
}
