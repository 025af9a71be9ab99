pub mod autodiff;
pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod inference;
pub mod model;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
