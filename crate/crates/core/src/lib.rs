pub mod analysis;
pub mod balance;
pub mod cli;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod propensity;
pub mod pseudo;
pub mod sim;
pub mod survival;
pub mod synthetic;
pub mod weighting;

pub use error::{Error, Result};
