//! Two-sample tests for right-censored data built on Kaplan-Meier weighted
//! energy distances and kernel MMD, calibrated by permutation.
//!
//! Statistics use the event time alone unless the data carry covariates, in
//! which case every observation is the point `(time, covariates...)`.

pub mod bandwidth;
pub mod cli;
pub mod data;
pub mod error;
pub mod km;
pub mod metrics;
pub mod permutation;
pub mod rng;
pub mod simulation;
pub mod statistics;

pub use bandwidth::{median_heuristic, BandwidthRule, BandwidthScaling, MedianVariant};
pub use data::{CensoredObservation, CensoredSample, CsvSchema, TwoSampleData};
pub use error::{Error, Result};
pub use km::{km_weights, weigh, WeightedSample};
pub use metrics::{Bandwidth, KernelSpec, MaternNu};
pub use permutation::{permutation_battery, permutation_test, PermutationPlan, PlanMode, ResolvedMode, TestResult};
pub use statistics::{compute_statistic, Form, Measure, StatisticSpec, StatisticValue};
