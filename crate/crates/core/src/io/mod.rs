//! File formats: legacy VTK meshes, history CSV, TOML run configs and JSON summaries.

mod config;
mod history;
mod vtk;

pub use config::{apply_overrides, parse_config, read_config, write_config, ExperimentCase, RunConfig, CONFIG_KEYS};
pub use history::{read_history_csv, write_history_csv, write_summary, HistoryRow, RunSummary};
pub use vtk::{parse_vtk, read_mesh, render_vtk, write_mesh, MeshFile};
