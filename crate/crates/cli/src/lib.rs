//! Library surface of the experiment runner: config schema, presets,
//! run orchestration and result emission. The `lsmc` binary is a thin
//! wrapper over these modules.

pub mod config;
pub mod emit;
pub mod presets;
pub mod runner;
