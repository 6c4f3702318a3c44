//! Sweeps over synthesized networks and the statistics drawn from them.

pub mod analysis;
pub mod sensitivity;
pub mod stats;
pub mod sweep;

pub use analysis::{full_model_selection, model_selection, FitSummary, Metric, ModelGroup, Term};
pub use sensitivity::{sensitivity_sweep, Parameter, Perturbation, SensitivityCell, Shift};
pub use sweep::{run_sweep, ExperimentRecord, SweepConfig, SweepOutput, SweptNetwork};
