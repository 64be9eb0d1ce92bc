//! Uncertainty sets calibrated from data by hypothesis tests, their support
//! functions, and cutting-plane solvers for robust linear programs.

pub mod alloc;
pub mod data;
pub mod error;
pub mod lp;
pub mod portfolio;
pub mod queue;
pub mod robust;
pub mod scalar;
pub mod sets;

pub use error::{DdroError, Result};
