pub mod bounds;
pub mod error;
pub mod fixture;
pub mod instruments;
pub mod pricing;
pub mod scenarios;
pub mod solver;
pub mod sweeps;

pub use error::{Error, Result};
