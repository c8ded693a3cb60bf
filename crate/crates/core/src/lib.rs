pub mod cli;
pub mod communities;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
