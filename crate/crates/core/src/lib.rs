pub mod config;
pub mod error;
pub mod fd;
pub mod market;
pub mod mc;
pub mod numerics;
pub mod pricing;
pub mod semi_markov;

pub use error::{Error, ErrorKind, Result};
