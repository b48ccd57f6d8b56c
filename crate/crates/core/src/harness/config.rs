use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::analysis::{DEFAULT_LEVEL, DEFAULT_RESAMPLES, MIN_RESAMPLES, MIN_SAMPLE_SIZE};
use crate::executor::{ClockMode, Strategy};
use crate::simenv::VariabilityModel;
use crate::strategies::{Backend, PairingRule};
use crate::workloads::WorkloadKind;

/// Sample sizes evaluated by a sweep: `from, from + step, ..., <= to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBounds {
    pub from: usize,
    pub to: usize,
    pub step: usize,
}

impl Default for SweepBounds {
    fn default() -> Self {
        SweepBounds {
            from: 50,
            to: 1_500,
            step: 5,
        }
    }
}

/// One experiment, loadable from TOML. Unset fields take their defaults:
/// 1,500 repetitions, 4 instances, 99% intervals from 10,000 resamples, a 5%
/// injected regression, and a 50..=1500 step-5 sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategies: Vec<Strategy>,
    pub backend: Backend,
    pub repetitions: u32,
    pub instances: u32,
    pub seed: u64,
    pub workload: WorkloadKind,
    pub scale: u64,
    pub regression_pct: f64,
    pub ci_level: f64,
    pub resamples: usize,
    pub threshold_pct: f64,
    pub sweep_enabled: bool,
    pub sweep: SweepBounds,
    /// Forces one clock for all strategies.
    pub clock: Option<ClockMode>,
    pub pairing: PairingRule,
    /// Live backend: run unpinned if the platform refuses affinity.
    pub allow_unpinned: bool,
    pub output_dir: PathBuf,
    pub model: VariabilityModel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategies: vec![Strategy::Duet],
            backend: Backend::Simulated,
            repetitions: 1_500,
            instances: 4,
            seed: 42,
            workload: WorkloadKind::CpuMutation,
            scale: 100_000,
            regression_pct: 5.0,
            ci_level: DEFAULT_LEVEL,
            resamples: DEFAULT_RESAMPLES,
            threshold_pct: 1.0,
            sweep_enabled: false,
            sweep: SweepBounds::default(),
            clock: None,
            pairing: PairingRule::IndexOrder,
            allow_unpinned: false,
            output_dir: PathBuf::from("bench-out"),
            model: VariabilityModel::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_owned(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.strategies.is_empty() {
            return fail("at least one strategy is required".into());
        }
        if self.repetitions == 0 {
            return fail("repetitions must be >= 1".into());
        }
        if self.instances == 0 {
            return fail("instances must be >= 1".into());
        }
        if self.scale < 2 {
            return fail(format!("scale must be >= 2, got {}", self.scale));
        }
        if !self.regression_pct.is_finite() || self.regression_pct < 0.0 {
            return fail(format!("regression_pct must be >= 0, got {}", self.regression_pct));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return fail(format!("ci_level must lie in (0, 1), got {}", self.ci_level));
        }
        if self.resamples < MIN_RESAMPLES {
            return fail(format!("resamples must be >= {MIN_RESAMPLES}, got {}", self.resamples));
        }
        if !self.threshold_pct.is_finite() {
            return fail("threshold_pct must be finite".into());
        }
        if self.sweep.step == 0 || self.sweep.from < MIN_SAMPLE_SIZE || self.sweep.from > self.sweep.to {
            return fail(format!(
                "sweep bounds {}..={} step {} are invalid (from >= {MIN_SAMPLE_SIZE}, step >= 1)",
                self.sweep.from, self.sweep.to, self.sweep.step
            ));
        }
        self.model
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Repetitions handled by each fan-out instance:
    /// `ceil(repetitions / instances)`, the last ones truncated to the total.
    /// Instances left with nothing are omitted.
    pub fn instance_shares(&self) -> Vec<(u32, u32)> {
        let per = self.repetitions.div_ceil(self.instances);
        (0..self.instances)
            .map(|i| (i, per.min(self.repetitions.saturating_sub(i * per))))
            .filter(|&(_, reps)| reps > 0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.repetitions, 1_500);
        assert_eq!(cfg.ci_level, 0.99);
        assert_eq!(cfg.regression_pct, 5.0);
        assert_eq!(cfg.sweep, SweepBounds { from: 50, to: 1_500, step: 5 });
    }

    #[test]
    fn shares_cover_total() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.instance_shares(), vec![(0, 375), (1, 375), (2, 375), (3, 375)]);
        cfg.repetitions = 10;
        cfg.instances = 4;
        assert_eq!(cfg.instance_shares(), vec![(0, 3), (1, 3), (2, 3), (3, 1)]);
        cfg.repetitions = 5;
        cfg.instances = 4;
        assert_eq!(cfg.instance_shares(), vec![(0, 2), (1, 2), (2, 1)]);
        for instances in 1..20 {
            cfg.instances = instances;
            cfg.repetitions = 1_501;
            let total: u32 = cfg.instance_shares().iter().map(|s| s.1).sum();
            assert_eq!(total, 1_501);
        }
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);

        let partial = ExperimentConfig::from_toml_str(
            r#"
            strategies = ["rmit", "duet"]
            repetitions = 300
            workload = "mem-sieve"
            [model]
            temporal_sigma = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(partial.strategies, vec![Strategy::Rmit, Strategy::Duet]);
        assert_eq!(partial.repetitions, 300);
        assert_eq!(partial.workload, WorkloadKind::MemSieve);
        assert_eq!(partial.model.temporal_sigma, 0.1);
        assert_eq!(partial.model.instance_quality_cv, 0.15);

        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            ExperimentConfig { instances: 0, ..Default::default() },
            ExperimentConfig { strategies: vec![], ..Default::default() },
            ExperimentConfig { ci_level: 1.0, ..Default::default() },
            ExperimentConfig { resamples: 10, ..Default::default() },
            ExperimentConfig { sweep: SweepBounds { from: 10, to: 100, step: 5 }, ..Default::default() },
            ExperimentConfig { regression_pct: -5.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
