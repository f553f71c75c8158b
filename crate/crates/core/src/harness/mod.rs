//! Seeded experiments on top of the library: JSON configs, multi-trial runs
//! with CSV/JSON output, gradient and hypothesis checks, sweeps and SVG plots.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod sweep;

pub use checks::{compare_at, gradcheck, gradcheck_with, hypcheck, GradcheckReport, HypcheckReport};
pub use config::{load_config, parse_config, ExperimentConfig};
pub use experiment::{run_experiment, run_trials, ExperimentOutput, RunOptions, Summary, TrialOutcome};
pub use plot::{emit_plot, render_svg};
pub use sweep::{sweep, SweepAxis, SweepOutput, SweepRow};
