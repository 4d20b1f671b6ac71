//! Behavioral and performance model of a 3D NAND compute-in-memory plane
//! that stores CAM-tagged Mixture-of-Experts weights and computes only the
//! routed experts' products.
//!
//! The crate is layered bottom-up: [`device`] (cells, strings, variation),
//! [`cam`] (in-string expert tags), [`encoding`] (signed thermometer weights
//! and multilevel inputs), [`array`] (plane state and the gated compute
//! cycle), [`mapping`] (expert placement), [`workload`] (MoE shapes and
//! traces) and [`perf`] (timing, energy and area).

pub mod array;
pub mod cam;
pub mod config;
pub mod device;
pub mod encoding;
pub mod error;
pub mod mapping;
pub mod perf;
pub mod verify;
pub mod workload;

pub use array::{
    execute_cycle, max_input_dimension, read_image, run_gemv, write_image, AdcModel, CycleCommand,
    GemvResult, Plane, PlaneGeometry, SenseResult,
};
pub use cam::{
    cam_match, entry_plan, entry_plan_with, truth_table, CamEntry, CamLayer, CamQuery, MatchResult,
};
pub use config::RunConfig;
pub use device::{
    cell_conducts, string_current, CellCoord, CellState, ReadPulseSchedule, StringImage,
    VariationModel,
};
pub use encoding::{
    decode_weight, encode_input, encode_weight, signed_product_model, CodeSpace, InputDrive,
    Polarity, WeightCode,
};
pub use error::{Error, Result};
pub use mapping::{place, utilization, ExpertLayout, Strategy, UtilizationReport};
pub use perf::{evaluate, gains, AblationConfig, Calibration, PerfReport, Stage};
pub use workload::{generate_trace, generate_weights, parse_trace, MoESpec, Routing, TokenTrace};
