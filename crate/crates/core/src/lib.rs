//! Numerical laboratory for Korovkin-type approximation by weakly nonlinear
//! operators: grid functions, distorted-Lebesgue capacities, discrete Choquet
//! integrals, Bernstein/Szász-Kantorovich(-Choquet) operators and randomized
//! checks of their axioms and convergence.

pub mod analysis;
pub mod capacity;
pub mod choquet;
pub mod error;
pub mod gridfn;
pub mod operators;
pub mod report;
pub mod rng;
mod text;

pub use capacity::{Capacity, Distortion};
pub use error::{Error, Result};
pub use gridfn::{Domain, DomainKind, FunctionSpec, Grid, GridFunction, NormMode};
pub use operators::{Operator, OperatorSpec};
pub use report::{Property, PropertyReport, Witness};
