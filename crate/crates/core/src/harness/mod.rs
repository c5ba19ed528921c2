//! Experiment configuration, diagnostics and artifact export.

pub mod config;
pub mod curvespec;
pub mod run;
pub mod spectrum;

pub use config::{parse_config, preset, ExperimentConfig, ExperimentKind, PRESETS};
pub use curvespec::{CurveSpec, LoadedCurve};
pub use run::{exit_code, run_experiment, Check, RunReport};
pub use spectrum::{count_local_maxima, fourier_modes, ModeSpectrum};
