//! Orchestration behind the `nasic` binary.

pub mod check;
pub mod run;
pub mod sweep;
pub mod tables;
