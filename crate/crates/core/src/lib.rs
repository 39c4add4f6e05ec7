//! Variable-exponent Lebesgue/Sobolev machinery and a Galerkin solver for
//! the unsteady system
//!
//! ```text
//! ∂ₜu − div S(t, x, ε(u)) + b(t, x, u) = f − div F   in (0, T) × Ω,
//!                                     u = 0        on (0, T) × ∂Ω,
//!                                  u(0) = u₀       in Ω,
//! ```
//!
//! where `S` has `(p(·,·), δ)`-structure and `ε(u)` is the symmetric gradient.
//!
//! The crate is organised bottom-up:
//!
//! * [`exponent`]: variable exponents, conjugates, parabolic interpolation
//!   exponents and log-Hölder diagnostics.
//! * [`spaces`]: quadrature-sampled fields, modulars, Luxemburg norms and the
//!   elementary Hölder/embedding inequalities.
//! * [`mesh`]: nested P1 triangulations and vector finite element functions.
//! * [`models`]: flux and lower-order models plus structure-condition samplers.
//! * [`solver`]: implicit Euler / Galerkin time stepping with an energy ledger.
//! * [`inequalities`]: the Poincaré counterexample and calibrated inequality checks.
//! * [`io`]: CSV emission shared by the command-line driver.

pub mod assembly;
pub mod error;
pub mod exponent;
pub mod inequalities;
pub mod io;
pub mod mesh;
pub mod models;
pub mod quadrature;
pub mod sampling;
pub mod solver;
pub mod spaces;
pub mod tensor;

pub use error::{Error, Result};

/// Absolute tolerance applied to quadrature-evaluated inequality slacks.
pub const TOL_NUM: f64 = 1e-9;

/// A point `(t, x)` in space-time.
pub type SpaceTimePoint = (f64, [f64; 2]);
