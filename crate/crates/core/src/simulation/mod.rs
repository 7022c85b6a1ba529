//! Simulated survival data and Monte Carlo power studies.

pub mod censoring;
pub mod curve;
pub mod generators;
pub mod harness;

pub use censoring::{apply_censoring, calibrate_uniform_bound, CensoringLaw, CensoringModel};
pub use curve::{load_curve, pava_nonincreasing, read_curve_csv, sample_from_curve, SurvivalCurve};
pub use generators::LifetimeGenerator;
pub use harness::{run_monte_carlo, McRow, ScenarioSpec, TestConfig};
