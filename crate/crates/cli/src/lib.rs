//! Command-line front end: configuration files, grid sweeps and figure presets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod app;
pub mod config;
pub mod presets;
pub mod sweep;
pub mod table;

pub use config::{ConfigError, ExperimentConfig, RawConfig};
pub use presets::{run_figure, FigureId, FigureOutput};
pub use sweep::{run_sweep, SweepOutput};
pub use table::{Cell, Table};
