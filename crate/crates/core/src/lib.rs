//! Super-resolution of gridded fire-exposure maps.

mod container;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod raster;
pub mod scale;
pub mod training;

pub use error::{Error, ErrorCategory, Result};
pub use scale::Scale;
