//! Numerical toolkit for diffusion with volume exclusion.
//!
//! Three descriptions of the same system are provided and can be checked
//! against each other:
//!
//! * [`particles`]: Brownian dynamics of `N` particles with soft repulsion or
//!   hard-core contacts, integrated with Euler–Maruyama;
//! * [`fv`]: a finite-volume solver for the macroscopic equation
//!   `∂p/∂t = ∇·[(1 + β p) ∇p + p ∇V]`, with `β = α_u (N − 1) ε^d`;
//! * [`jko`]: a one-dimensional minimizing-movement solver for the same
//!   free energy, using the quantile form of the Wasserstein distance.

pub mod analysis;
pub mod config;
pub mod error;
pub mod fv;
pub mod grid;
pub mod initial;
pub mod jko;
pub mod particles;
pub mod potentials;
mod quadrature;

pub use error::{Error, Result};
pub use config::Config;
pub use fv::MacroModel;
pub use grid::{DensityField, Grid, RngPlan};
pub use initial::InitialDensity;
pub use potentials::{ExternalPotential, InteractionKind, InteractionPotential};
