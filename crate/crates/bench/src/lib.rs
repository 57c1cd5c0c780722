//! Experiment harness for the doraemon learned index: the architecture
//! grid, the augmentation A/B comparison and the shift-and-reuse scenario.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ExperimentConfig, Mode};
pub use experiments::{
    run_augment_ab, run_grid, run_shift, AugmentReport, GridReport, ShiftReport, Variant,
};
