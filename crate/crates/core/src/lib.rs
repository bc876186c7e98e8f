//! Weighted simplicial complexes, their coboundary and boundary operators,
//! links of simplices, and numerical tests of when `∂∂ = 0` holds on ℓ².
//!
//! The failure of `∂∂ω(ρ) = 0` at a simplex `ρ` is governed by the link graph
//! of `ρ`: it holds for all square-summable `ω` exactly when every connected
//! component of the link is recurrent. [`recurrence`] classifies link graphs
//! from finite exhaustions and [`defect`] measures the defect and builds
//! witness forms on truncations produced by [`generators`].

pub mod complex;
pub mod defect;
pub mod error;
pub mod generators;
pub mod hodge;
pub mod io;
pub mod linalg;
pub mod links;
pub mod operators;
pub mod par;
pub mod recurrence;

pub use complex::{sign, ComplexBuilder, Simplex, VertexId, WeightedComplex};
pub use error::{Error, Result};
pub use generators::{Family, Truncation};
pub use num_complex::Complex64;
pub use operators::Cochain;
pub use par::Execution;
