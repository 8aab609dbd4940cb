//! Detection pipeline for terrestrial waste aggregations in multispectral
//! time series: data engine, classifiers, distillation, candidate detection
//! and footprint monitoring.

pub mod dataengine;
pub mod detect;
pub mod distill;
mod error;
pub mod geo;
pub mod models;
pub mod monitor;
pub mod raster;

pub use error::{CoreError, Result};
