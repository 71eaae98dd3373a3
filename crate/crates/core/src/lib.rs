//! Periodic homogenization of perforated piezoelectric media.

pub mod cellfem;
pub mod cli;
pub mod corrector;
pub mod effective;
pub mod error;
pub mod geometry;
pub mod hex8;
pub mod io;
pub mod linalg;
pub mod macrodns;
pub mod tensors;

pub use error::{Error, Result};
