//! Continuous benchmarking for detecting performance regressions between two
//! versions of a workload.
//!
//! Three invocation strategies are provided:
//!
//! * **Independent**: every version is invoked on its own, all baseline calls
//!   first, then all candidate calls.
//! * **RMIT** (randomized multiple interleaved trials): both versions run
//!   sequentially inside one call, in an order chosen by a seeded coin flip
//!   per trial.
//! * **Duet**: both versions run in parallel on the same host, each pinned to
//!   its own core, released from a common start barrier.
//!
//! Paired per-repetition changes are summarized with a bootstrap percentile
//! confidence interval of the median change, and a threshold turns the interval
//! into a pipeline verdict.
//!
//! Strategies run either live (the [`executor`] measures real workloads) or
//! against [`simenv`], a seeded model of platform variability that makes the
//! comparative behavior of the strategies reproducible on any machine.

pub mod analysis;
pub mod executor;
pub mod harness;
pub mod simenv;
pub mod strategies;
pub mod workloads;

mod rng;

pub use analysis::{ConfidenceInterval, PairedSample, Verdict};
pub use executor::{ClockMode, CorePlan, Executor, Measurement, Strategy};
pub use harness::{ExperimentConfig, Report};
pub use simenv::{InstanceState, VariabilityModel};
pub use strategies::{Backend, MeasurementSet, StrategyConfig};
pub use workloads::{WorkResult, WorkloadKind, WorkloadSpec};
