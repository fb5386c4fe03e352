//! Few-shot compositional NLI on simulated quantum circuits: sentence
//! parsing with pregroup types, circuit compilation, statevector simulation,
//! three model families and per-parameter information metrics.

pub mod circuit;
pub mod data;
pub mod exec;
pub mod metrics;
pub mod models;
pub mod pregroup;
pub mod simulator;
pub mod training;

pub use exec::Exec;
