//! Scenario configuration, replicate runs, parameter sweeps, threshold
//! searches, calibration and the preset library.

pub mod calibrate;
pub mod config;
pub mod presets;
pub mod replicate;
pub mod results;
pub mod sweep;
pub mod threshold;

pub use calibrate::{
    calibrate, expected_mix, mix_distance, CalibrationMode, CalibrationPoint, CalibrationResult, CalibrationSearch,
};
pub use config::{Axis, GraphSource, NetworkConfig, ScenarioConfig, SweepSpec, ThresholdConfig, ThresholdMetric};
pub use presets::{preset, preset_names, resolve_scenario};
pub use replicate::{
    evaluate, generate_dataset, run_prepared, run_replicate, Dataset, Prepared, ReplicateMetrics, ReplicateResult,
    DATA_DIR_ENV,
};
pub use results::{aggregate, read_results, summary_mean, FlatRow, SummaryRow};
pub use sweep::{grid_points, run_grid, run_in_memory, GridPoint, GridRun, RunOptions};
pub use threshold::{critical_threshold, run_thresholds, ScanStep, ThresholdResult};
