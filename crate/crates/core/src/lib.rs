//! Generalized conditional gradient (GCG) iteration for second-order mean
//! field games with quadratic Hamiltonian and local coupling on the periodic
//! torus in one or two dimensions.
//!
//! The building blocks, bottom up:
//!
//! - [`grid`]: periodic space-time grids, discrete calculus, quadrature, norms
//! - [`coupling`]: local couplings `a(x) + c min(m, beta)` and their potentials
//! - [`pde`]: Cole-Hopf HJB / Fokker-Planck solves plus direct oracles
//! - [`functionals`]: `J`, `Z[gamma]`, exploitability, optimality gap, `D_k`
//! - [`stepsize`]: QAG, golden-section, exploitability-based and predefined rules
//! - [`gcg`]: the outer loop
//! - [`config`], [`io`], [`experiment`]: config files, outputs, subcommands

pub mod config;
pub mod coupling;
pub mod error;
pub mod experiment;
pub mod functionals;
pub mod gcg;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod pde;
pub mod stepsize;

pub use error::{Error, Result};
