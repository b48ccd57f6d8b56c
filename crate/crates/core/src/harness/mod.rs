//! Experiment orchestration: fan-out over instances, merging, analysis and
//! report output.
//!
//! An "instance" is one deployment. In simulated runs it is an independent
//! warm pool with its own PRNG stream; in live runs it is a fresh executor.
//! Live instances run one after another so they never compete for cores.

mod config;
mod report;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    bootstrap_ci, filter_cold_starts, median_change, sweep_sample_size, verdict, AnalysisError,
    Verdict, MIN_SAMPLE_SIZE,
};
use crate::executor::{CorePlan, Executor, Measurement, Pinning, Strategy};
use crate::rng::{stream, streams};
use crate::strategies::{
    pair_measurements, run_strategy, Backend, InvocationBackend, LiveBackend, MeasurementSet,
    SimulatedBackend, StrategyConfig, StrategyError,
};
use crate::workloads::{make_workload, WorkloadError, WorkloadSpec};

pub use config::{ExperimentConfig, SweepBounds};
pub use report::{
    emit_report, read_raw_csv, read_summary_csv, write_raw_csv, write_sweep_csv, RawRow, Report,
    ReportFormat, SampleCounts, StrategyReport, SummaryRow, Timestamps, RAW_CSV, SUMMARY_CSV,
    SUMMARY_JSON, SWEEP_CSV,
};

pub const BASELINE_LABEL: &str = "A";
pub const CANDIDATE_LABEL: &str = "B";

/// Process exit code for any failure; verdicts use 0, 1 and 3.
pub const ERROR_EXIT_CODE: i32 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("{strategy}: {source}")]
    Analysis {
        strategy: Strategy,
        #[source]
        source: AnalysisError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("report has no results to write")]
    EmptyReport,
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        ERROR_EXIT_CODE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: Strategy,
    pub width_pp: f64,
    pub median_change_pct: f64,
}

/// Baseline and candidate specs for `cfg`.
pub fn workload_pair(cfg: &ExperimentConfig) -> Result<(WorkloadSpec, WorkloadSpec), HarnessError> {
    Ok((
        make_workload(cfg.workload, cfg.scale, BASELINE_LABEL, 0.0)?,
        make_workload(cfg.workload, cfg.scale, CANDIDATE_LABEL, cfg.regression_pct)?,
    ))
}

fn strategy_config(cfg: &ExperimentConfig, strategy: Strategy, repetitions: u32) -> StrategyConfig {
    StrategyConfig {
        clock: cfg.clock,
        pairing: cfg.pairing,
        ..StrategyConfig::new(strategy, repetitions, cfg.seed, cfg.backend)
    }
}

fn strategy_stream(strategy: Strategy) -> u64 {
    match strategy {
        Strategy::Independent => 0,
        Strategy::Rmit => 1,
        Strategy::Duet => 2,
    }
}

/// Runs `strategy` on every instance and merges the results in
/// `(instance, repetition)` order, keeping execution order within a
/// repetition.
pub fn collect_measurements(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    specs: (&WorkloadSpec, &WorkloadSpec),
) -> Result<MeasurementSet, HarnessError> {
    let shares = cfg.instance_shares();
    let run_one = |&(instance, reps): &(u32, u32)| -> Result<MeasurementSet, StrategyError> {
        let scfg = strategy_config(cfg, strategy, reps);
        let mut backend: Box<dyn InvocationBackend> = match cfg.backend {
            Backend::Simulated => Box::new(SimulatedBackend::new(cfg.model.clone(), cfg.seed, instance)?),
            Backend::Live => {
                let mut executor = Executor::new();
                if cfg.allow_unpinned && executor.pinning() == Pinning::Required {
                    executor = executor.with_pinning(Pinning::Preferred);
                }
                if let Some(clock) = cfg.clock {
                    executor = executor.with_duet_clock(clock);
                }
                Box::new(LiveBackend::new(executor, CorePlan::default(), instance))
            }
        };
        run_strategy(&scfg, specs, backend.as_mut())
    };
    let sets: Vec<MeasurementSet> = match cfg.backend {
        Backend::Simulated => shares.par_iter().map(run_one).collect::<Result<_, _>>()?,
        Backend::Live => shares.iter().map(run_one).collect::<Result<_, _>>()?,
    };

    let mut measurements: Vec<Measurement> = sets.into_iter().flat_map(|s| s.measurements).collect();
    measurements.sort_by_key(|m| (m.instance_id, m.repetition));
    Ok(MeasurementSet {
        measurements,
        config: strategy_config(cfg, strategy, cfg.repetitions),
        labels: (specs.0.version_label().to_owned(), specs.1.version_label().to_owned()),
    })
}

/// Filters, pairs and summarizes one strategy's measurements. The bootstrap
/// stream depends only on the seed and the strategy, so the result can be
/// regenerated from archived raw measurements.
pub fn analyze_set(cfg: &ExperimentConfig, set: &MeasurementSet) -> Result<StrategyReport, HarnessError> {
    let strategy = set.config.strategy;
    let analysis_err = |source| HarnessError::Analysis { strategy, source };
    let pairs_before_filter = crate::analysis::pair_keys(set);
    let filtered = filter_cold_starts(set);
    let pairs = pair_measurements(&filtered)?;
    if pairs.len() < MIN_SAMPLE_SIZE {
        return Err(analysis_err(AnalysisError::InsufficientSamples {
            got: pairs.len(),
            min: MIN_SAMPLE_SIZE,
        }));
    }
    let median = median_change(&pairs).map_err(analysis_err)?;
    let mut rng = stream(cfg.seed, streams::BOOTSTRAP_BASE + strategy_stream(strategy));
    let ci = bootstrap_ci(&pairs, cfg.ci_level, cfg.resamples, &mut rng).map_err(analysis_err)?;

    let sweep = if cfg.sweep_enabled {
        let to = cfg.sweep.to.min(pairs.len());
        let mut rng = stream(cfg.seed, streams::SWEEP_BASE + strategy_stream(strategy));
        Some(
            sweep_sample_size(&pairs, cfg.sweep.from, to, cfg.sweep.step, cfg.ci_level, cfg.resamples, &mut rng)
                .map_err(analysis_err)?,
        )
    } else {
        None
    };

    Ok(StrategyReport {
        strategy,
        clock_mode: set.config.clock(),
        median_change_pct: median,
        ci,
        verdict: verdict(&ci, cfg.threshold_pct),
        samples: SampleCounts {
            measurements: set.measurements.len(),
            pairs_before_filter,
            pairs_after_filter: pairs.len(),
            cold_measurements: set.measurements.iter().filter(|m| m.cold).count(),
        },
        sweep,
    })
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// Runs every configured strategy and assembles the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let started = now();
    let (a, b) = workload_pair(cfg)?;
    let mut strategies = Vec::with_capacity(cfg.strategies.len());
    let mut raw = Vec::new();
    for &strategy in &cfg.strategies {
        let set = collect_measurements(cfg, strategy, (&a, &b))?;
        strategies.push(analyze_set(cfg, &set)?);
        raw.extend(set.measurements);
    }
    Ok(assemble(cfg.clone(), strategies, raw, started))
}

fn assemble(config: ExperimentConfig, strategies: Vec<StrategyReport>, raw: Vec<Measurement>, started: String) -> Report {
    Report {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        seed: config.seed,
        verdict: Verdict::combine(strategies.iter().map(|s| s.verdict)),
        strategies,
        config,
        timestamps: Some(Timestamps {
            started,
            finished: now(),
        }),
        raw,
    }
}

/// Runs the configured strategies on identical workloads and seeds and
/// tabulates interval width and median change.
pub fn compare_strategies(cfg: &ExperimentConfig) -> Result<(Report, Vec<ComparisonRow>), HarnessError> {
    let report = run_experiment(cfg)?;
    let rows = report
        .strategies
        .iter()
        .map(|s| ComparisonRow {
            strategy: s.strategy,
            width_pp: s.ci.width_pp,
            median_change_pct: s.median_change_pct,
        })
        .collect();
    Ok((report, rows))
}

/// Re-analyzes archived raw measurements. Strategies are reported in their
/// order of first appearance; `cfg` supplies seed, level, resamples,
/// threshold, pairing and sweep settings.
pub fn analyze_measurements(cfg: &ExperimentConfig, raw: Vec<Measurement>) -> Result<Report, HarnessError> {
    let started = now();
    if raw.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut order: Vec<Strategy> = Vec::new();
    for m in &raw {
        if !order.contains(&m.strategy) {
            order.push(m.strategy);
        }
    }
    let mut strategies = Vec::with_capacity(order.len());
    for &strategy in &order {
        let measurements: Vec<Measurement> = raw.iter().filter(|m| m.strategy == strategy).cloned().collect();
        let mut scfg = strategy_config(cfg, strategy, 0);
        scfg.clock = measurements.first().map(|m| m.clock_mode).filter(|&c| c != strategy.default_clock());
        let mut set = MeasurementSet {
            measurements,
            config: scfg,
            labels: (BASELINE_LABEL.to_owned(), CANDIDATE_LABEL.to_owned()),
        };
        set.config.repetitions = crate::analysis::pair_keys(&set) as u32;
        strategies.push(analyze_set(cfg, &set)?);
    }
    let config = ExperimentConfig {
        strategies: order,
        ..cfg.clone()
    };
    Ok(assemble(config, strategies, raw, started))
}
