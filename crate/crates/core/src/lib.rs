//! Evaluation harness for tool-calling code agents: sandboxed episodes,
//! patch verification, the iterative retry protocol, pass@k sweeps,
//! reporting, and trajectory curation.

pub mod agent;
pub mod cli;
pub mod config;
pub mod curate;
pub mod error;
pub mod eval;
pub mod layout;
pub mod llm;
pub mod model;
pub mod runner;
pub mod sandbox;

pub use error::{Error, Result};
