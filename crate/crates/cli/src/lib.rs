//! Orchestration layer: seeded, reproducible pipeline runs with one
//! machine-readable report per run, plus the bundled acceptance suite.

pub mod acceptance;
pub mod pipeline;
pub mod report;
