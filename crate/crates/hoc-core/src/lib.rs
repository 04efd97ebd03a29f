//! Numerical laboratory for house-of-cards selection-mutation dynamics on a
//! bounded one-dimensional trait interval.
//!
//! The model family couples a fitness penalty `a(x)` (zero exactly at the
//! optimal trait `x = 0`) with a trait-independent mutant distribution
//! `Q(x)`. The crate discretizes the trait interval with a graded cell
//! partition, computes the Perron eigenelements in closed form by quadrature
//! and root-finding, integrates the four associated evolution equations with
//! positivity-preserving exponential steppers, and measures convergence
//! rates and entropy dissipation against the regime dictated by
//! `rho = integral of Q/a`:
//!
//! * `rho > 1` (possibly infinite): exponential relaxation at the Perron
//!   eigenvalue `lambda > 0`,
//! * `rho = 1`: critical regime; zero eigenvalue, algebraic decay and linear
//!   mass growth from a Dirac initial condition,
//! * `rho < 1`: subcritical regime; the stationary profile carries an atom
//!   of mass `1 - rho` at the optimal trait and time averages concentrate.
//!
//! [`acceptance`] bundles the verification suite run both by `cargo test`
//! and by the CLI `check` subcommand.

pub mod acceptance;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod measure;
pub mod model;
pub mod oracle;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::TraitGrid;
pub use measure::{pair, GridFn, Measure};
pub use model::{FitnessFamily, Model, ModelSpec, MutationFamily};
pub use spectral::{ConservativeModel, Eigensystem, Regime, SpectralReport};
