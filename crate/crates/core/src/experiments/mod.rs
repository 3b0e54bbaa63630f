//! Figure-by-figure studies: weight sweeps, parameter families, the
//! eigenvalue-versus-length-scale curve and the CG convergence runs.

pub mod cg;
pub mod config;
pub mod output;
pub mod presets;
pub mod problem;
pub mod sweep;
pub mod validation;

pub use cg::{cg_sweep, run_cg_study, CgStudy};
pub use config::{BetaGrid, ConfigOverrides, ExperimentConfig, Seeds};
pub use presets::{figure, run_figure, Figure, Panel, Study};
pub use problem::{Problem, SweepRecord, Violation};
pub use sweep::{run_beta_sweep, run_eigen_vs_lengthscale, run_parameter_family, Family, Sweep};
pub use validation::{run_sandwich_suite, ValidationReport};
