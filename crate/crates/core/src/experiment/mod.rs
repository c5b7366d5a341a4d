//! Experiment runner and CSV exports.

pub mod boundary;
pub mod cloud;
pub mod compare;
pub mod config;
pub mod run;

pub use boundary::{boundary_grid, BoundaryGrid, GridCell, GridSpec};
pub use cloud::{cloud_from_csv, cloud_to_csv, synthetic_cloud, CloudRow};
pub use compare::{compare_runs, read_metrics, summarize, summary_csv, RunSummary};
pub use config::{ClassifierSpec, DatasetSelector, ExportSpec, GeneratorSpec, RunConfig, PRESETS};
pub use run::{export_boundary, export_cloud, run, run_observed, RunOutcome, Session};
