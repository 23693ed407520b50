//! Experiment plumbing: seed sweeps, per-seed CSV metrics, cross-seed
//! aggregation, normalized scores and SVG charts.
//!
//! Output layout for a run is `<out>/<env>/<variant>/seed<k>.csv` plus an
//! `aggregate.json` next to the CSVs.

mod aggregate;
mod charts;
mod config;
mod metrics;
mod runner;

pub use aggregate::{
    aggregate_runs, final_window_len, final_window_mean, load_variant, normalized_return, AggregateSummary,
    SeedSummary, FINAL_WINDOW_FRACTION,
};
pub use charts::{band_from_runs, emit_charts, find_variant_dirs, render_line_chart, BandPoint, ChartFrame, SeriesBand};
pub use config::{env_overrides, parse_config_file, parse_config_str, Layered, ENV_PREFIX};
pub use metrics::{read_metrics_csv, write_metrics_csv, MetricWriter, CSV_HEADER};
pub use runner::{run, sweep_alpha, sweep_ent, RunReport, RunSpec, SweepRow};

pub use crate::trainer::MetricRow;
