pub mod baselines;
pub mod config;
pub mod error;
pub mod gp;
pub mod learner;
pub mod linalg;
pub mod models;
pub mod report;
pub mod rv;
pub mod subspace;

pub use error::{Error, Result};
