//! Numerical toolkit for singular Moser–Trudinger functionals and the
//! mean-field (Liouville) equation on the round 2-sphere.
//!
//! The crate is organised bottom-up:
//!
//! * [`series`]: the critical set Γ(α), the generating function g(x) and
//!   Leray–Schauder degree bookkeeping.
//! * [`sphere`]: Gauss–Legendre grids, spherical-harmonic transforms, the
//!   Laplace–Beltrami operator, the Green's function and stereographic maps.
//! * [`potential`]: singular potentials h = K·exp(−4π Σ αᵢ G(·, pᵢ)) and the
//!   Morse data of h.
//! * [`solver`]: the functional J_ρ^h, its Euler–Lagrange residual and a
//!   preconditioned descent solver on mean-zero fields.
//! * [`radial`]: the axially symmetric reduction and the explicit family.
//! * [`blowup`]: blow-up location functional, rate formula and sequence
//!   classification.
//! * [`cli`]: config/report plumbing behind the `liouville` binary.

pub mod blowup;
pub mod cli;
pub mod error;
pub mod optim;
pub mod potential;
pub mod radial;
pub mod series;
pub mod solver;
pub mod sphere;

pub use error::{Error, Result};

/// Crate version, embedded into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
