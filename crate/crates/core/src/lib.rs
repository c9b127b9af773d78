pub mod cmi;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod math;
pub mod models;
pub mod runner;
pub mod theory;
pub mod trainers;

pub use error::{Error, Result};
