//! Synthetic-scene harness for `sqap-core`.
//!
//! Everything that touches the outside world lives here: the JSON config,
//! the scene generator, end-to-end runs, CSV sweeps and PGM heatmaps. The
//! `sqap` binary is a thin CLI over these modules.

pub mod config;
pub mod error;
pub mod heatmap;
pub mod pipeline;
pub mod scene;
pub mod sweep;

pub use config::Config;
pub use error::HarnessError;
pub use pipeline::{run_pipeline, RunOptions, RunRecord};
pub use scene::{generate_scene, Scene, SceneSpec};
