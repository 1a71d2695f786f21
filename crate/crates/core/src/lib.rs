pub mod channel;
pub mod classical;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod nets;
pub mod rng;
pub mod selftest;
pub mod tensor;

pub use error::{Error, Result};
