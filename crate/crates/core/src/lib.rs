pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod raster;
pub mod stages;

pub use error::{Error, Result};
