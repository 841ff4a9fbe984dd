//! Experiment configuration, the synchronous simulator, Monte Carlo
//! experiments and record export.

mod config;
mod experiments;
mod export;
mod sim;

pub use config::{BoundsConfig, RecordConfig, Setup, SimConfig, TopologyConfig};
pub use experiments::{
    central_compare, coverage_experiment, grid_rmse, selfnorm_experiment, CompareReport,
    CoverageReport, NoiseKind, SelfNormReport, SelfNormSetup, WeightDist,
};
pub use export::{csv_header, export_records, write_csv, write_messages, Format, RecordLayout};
pub use sim::{run_simulation, EstimateRecord, Simulation};
