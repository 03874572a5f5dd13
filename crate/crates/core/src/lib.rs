//! Analytical performance model for tiled DNN accelerator dataflows.
//!
//! A mapping is a loop nest over the six CONV dimensions, grouped by memory
//! level (DRAM, global buffer, array NoC, per-PE register file), together
//! with the positions at which each buffer is refilled. From that the model
//! derives refresh counts and volumes, per-level traffic, energy and
//! latency. An exhaustive loop-execution oracle cross-checks the counts on
//! small instances, and a search driver explores the space of mappings.

pub mod dse;
pub mod dsl;
pub mod error;
pub mod loopnest;
pub mod model;
pub mod oracle;
pub mod predictor;
pub mod presets;
pub mod report;

pub use dse::{enumerate, explore, Objective, SearchResult, SearchSpace, SearchStats, Strategy};
pub use dsl::{lower, parse, print, print_mapping, DslDocument};
pub use error::{DslError, Error, Result, Violation, Violations};
pub use loopnest::{
    build_nest, refresh_plan, validate_nest, Buffer, BuildOptions, LoopLevel, LoopNest, Mapping,
    RefreshLocations, RefreshPlan,
};
pub use model::{
    mac_count, DataKind, Dim, HardwareConfig, LayerShape, MemLevel, ModelOptions, PerKind,
    PerLevel,
};
pub use oracle::{check, simulate, AccessCounters, CheckReport};
pub use predictor::{
    access_counts, predict_layer, predict_network, AccessCounts, EnergyReport, LatencyReport,
    PredictionReport,
};
