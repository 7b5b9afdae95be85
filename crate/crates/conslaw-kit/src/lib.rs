//! Exact symbolic toolkit for conservation laws of differential equations.
//!
//! Everything is computed over canonical multivariate expressions with
//! arbitrary-precision rational coefficients: no floats, no numerical
//! tolerances. The crate provides
//!
//! - a jet-space expression kernel (atoms are independent variables, jet
//!   variables `u^a_alpha`, opaque function symbols with registered
//!   derivative rules, exponential factors, and reciprocals of sums),
//! - total derivatives, covering total derivatives and weight bookkeeping,
//! - differential systems in solved form with confluent reduction,
//! - variational calculus: Euler operators, higher Euler operators,
//!   Fréchet derivatives and adjoints, divergence tests, homotopy
//!   reconstruction of conserved vectors from total divergences, and a
//!   rule-based `D_x` inverter,
//! - conservation-law operations: verification and extraction of
//!   characteristics, cosymmetry tests, equivalence of conserved vectors,
//! - potential systems and coverings (two-dimensional, Abelian, standard
//!   multidimensional, general), including the purity test that decides
//!   whether a conservation law of a potential system is induced by a
//!   local one and, when it is, constructs the local conserved vector.
//!
//! The `corpus` module bundles the diffusion-convection verification
//! corpus the crate is tested against; the `conslaw` binary exposes the
//! operations on the command line.

pub mod conslaw;
pub mod corpus;
pub mod diffsys;
pub mod error;
pub mod expr;
pub mod jet;
pub mod multiindex;
pub mod parse;
pub mod potential;
pub mod session;
pub mod variational;

pub use error::{Error, Result};
pub use expr::{Atom, Expr, Term};
pub use multiindex::MultiIndex;
pub use session::{FuncDef, FuncId, Session};
