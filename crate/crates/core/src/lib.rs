//! Marginal log-linear parameters of strictly positive contingency tables,
//! with checks for collapsibility and conditional independence.

pub mod cli;
pub mod collapse;
pub mod error;
pub mod generator;
pub mod independence;
pub mod io;
pub mod mll;
pub mod spec;
pub mod table;
pub mod tensor;
pub mod tolerance;
pub mod varset;

pub use error::{MllError, Result};
pub use table::Table;
pub use tensor::Tensor;
pub use tolerance::Tolerance;
pub use varset::VarSet;
