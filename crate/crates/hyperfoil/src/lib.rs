//! Hyperboloidal-foliation diagnostics for coupled wave / Klein-Gordon
//! systems on 2+1-dimensional grids.
//!
//! The crate evolves two small nonlinear systems with compactly supported
//! data inside the light cone `t >= |x| + 1`:
//!
//! * a reduced Klein-Gordon-Zakharov model ([`evolve_kgz`]), where the wave
//!   component is the potential of the physical density,
//! * a quasilinear wave / Klein-Gordon model with coefficient tensors on the
//!   Hessian coupling ([`evolve_qwkg`]),
//!
//! and measures them on hyperboloids `H_s = { t² = |x|² + s² }`
//! ([`hyperboloid`]): natural energies through three algebraically
//! equivalent expressions, ghost-weighted energies, flat `L^p` norms, and
//! energies of derivative words `∂^I L^J u` built from closed-form jets of
//! the Lorentz boosts `L_a = x_a ∂_t + t ∂_a` ([`calculus`]).
//!
//! The [`verify`] module turns these measurements into a falsifiable
//! ledger: decay-rate fits, energy and ghost inequalities with sides taken
//! from the same run, Sobolev-constant stability, and identity-residual
//! convergence ladders. [`config`] supplies the flat key=value run
//! configuration shared with the command-line driver.

pub mod calculus;
pub mod config;
pub mod error;
pub mod evolve_kgz;
pub mod evolve_qwkg;
pub mod grid;
pub mod hyperboloid;
pub mod verify;

pub use error::{Error, Result};
