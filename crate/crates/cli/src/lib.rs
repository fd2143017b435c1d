//! Command-line driver for regime-wise local Gaussian correlation analysis:
//! CSV ingestion, the analysis pipeline, model selection, Monte Carlo
//! studies and the artifact files they produce.

pub mod config;
pub mod error;
pub mod exec;
pub mod input;
pub mod output;
pub mod pipeline;
pub mod simulate;
pub mod study;

pub use config::{PipelineConfig, StudyConfig};
pub use error::{CliError, Result};
pub use exec::{RayonExecutor, StdClock};
pub use pipeline::{run_model_selection, run_pipeline};
pub use study::run_study;
