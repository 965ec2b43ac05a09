#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod forcefield;
pub mod grid;
pub mod hamiltonian;
pub mod initcond;
pub mod propagator;
pub mod qae;
pub mod resources;
pub mod spectrum;

pub use error::{Error, Result};
