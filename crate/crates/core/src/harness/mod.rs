//! Evaluation harness: metrics, baselines and ablations, sweeps, the
//! similarity case study, gradient self-tests and run reports.

pub mod casestudy;
pub mod commands;
pub mod config;
pub mod methods;
pub mod metrics;
pub mod report;
pub mod run;
pub mod selftest;
pub mod sweep;

pub use casestudy::{similarity, similarity_case_study, similarity_groups, ShiftedCollection};
pub use config::{DataFormat, RunConfig};
pub use methods::{evaluate, evaluate_model, fit, test_episodes, train_induct, Method, MethodOptions, Model};
pub use metrics::{confidence_interval, score, Counts, Interval, Metrics, SeedScore};
pub use run::{load_collection, run_method, MethodRun, Splits};
pub use sweep::{sweep, SweepParam, SweepRow};
