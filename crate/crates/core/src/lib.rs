//! Tabular sandbox for comparing side-effect penalties in small gridworlds.

pub mod agent;
pub mod config;
pub mod error;
pub mod gridworlds;
pub mod harness;
pub mod mdp;
pub mod penalty;
pub mod reachability;
pub mod validate;

pub use error::{Error, Result};
