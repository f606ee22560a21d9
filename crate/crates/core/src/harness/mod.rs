//! Experiment orchestration: configuration, inequality checks, tail fits,
//! envelope comparisons and reports.

pub mod config;
pub mod experiment;
pub mod fit;
pub mod inequality;
pub mod suite;

pub use config::ExperimentConfig;
pub use experiment::{analyze_trace, compare_to_envelope, run_experiment, sweep, write_outcome, EnvelopeComparison, ExperimentOutcome};
pub use fit::{fit_tail_exponent, FitMode, FitReport};
pub use inequality::{check_integral_inequality, lemma_suite, InequalityReport, LemmaSuiteReport, Signal, TailMode};
