pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod likelihood;
pub mod markov;
pub mod models;
pub mod num;
pub mod optim;
pub mod params;
pub mod simulate;

pub use error::{DhmmError, Result};
