//! Operator-valued dyadic harmonic analysis on a finite dyadic lattice with an
//! arbitrary measure: measure-adapted Haar systems, Cuculescu projections, the
//! six-term Calderón–Zygmund decomposition and Haar shift operators.

pub mod cuculescu;
pub mod czd;
pub mod error;
pub mod generate;
pub mod haar;
pub mod io;
pub mod lattice;
pub mod opalgebra;
pub mod report;
pub mod shift;

pub use error::{Error, Result};
pub use lattice::{Cube, DyadicLattice, Measure};
pub use opalgebra::{Mat, OperatorField};
pub use report::CheckRow;
