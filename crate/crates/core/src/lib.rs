pub mod bootstrap;
pub mod cli;
pub mod cluster;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod fixedb;
pub mod hac;
pub mod harness;
pub mod hetero;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod mbb;
pub mod panel;
pub mod rng;
pub mod spectral;

pub use error::{Error, ErrorFamily, Result};
