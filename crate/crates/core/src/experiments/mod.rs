//! Experiment drivers: benchmark workloads, rule planting, the
//! pattern-count scaling study and its statistics.

mod plant;
mod scaling;
pub mod stats;
mod workload;

pub use plant::{plant_rule, PlantedRule};
pub use scaling::{
    pattern_variants, scaling_experiment, GroupSummary, ScalingConfig, ScalingReport, ScalingRow, MIN_SPACING,
};
pub use workload::echo_circuit;
