pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod kriging;
pub mod model;
pub mod optim;
pub mod prediction;
pub mod priors;
pub mod simstudy;
pub mod sparse;
pub mod spde;

pub use error::{Error, Result};
