//! Deterministic, versioned benchmark workloads.
//!
//! A regression is injected by scaling the work parameter: a spec with
//! `regression_pct = 5` does `floor(scale * 1.05)` units of work.

use std::fmt;
use std::hint::black_box;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of weights mutated by [`WorkloadKind::CpuMutation`].
pub const MUTATION_WEIGHTS: usize = 64;

const MUTATION_SEED: u64 = 0x6d75_7461_7465_2121;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload: scale must be at least 2, got {0}")]
    InvalidScale(u64),
    #[error("invalid regression: percentage must be finite and non-negative, got {0}")]
    InvalidRegression(f64),
    #[error("invalid workload: effective scale {0} does not fit in memory")]
    TooLarge(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    /// CPU-bound, cache-resident perturbation of a small weight vector.
    CpuMutation,
    /// Memory-bound Sieve of Eratosthenes over `[2, scale]`.
    MemSieve,
}

impl std::str::FromStr for WorkloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cpu-mutation" | "cpu" => Ok(WorkloadKind::CpuMutation),
            "mem-sieve" | "sieve" => Ok(WorkloadKind::MemSieve),
            other => Err(format!("unknown workload `{other}`")),
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkloadKind::CpuMutation => "cpu-mutation",
            WorkloadKind::MemSieve => "mem-sieve",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    kind: WorkloadKind,
    scale: u64,
    version_label: String,
    regression_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkResult {
    /// Order-independent digest of the computed values.
    pub checksum: u64,
    /// Mutation iterations or primes found.
    pub units_done: u64,
}

/// Builds a validated workload spec.
pub fn make_workload(
    kind: WorkloadKind,
    scale: u64,
    version_label: impl Into<String>,
    regression_pct: f64,
) -> Result<WorkloadSpec, WorkloadError> {
    if scale < 2 {
        return Err(WorkloadError::InvalidScale(scale));
    }
    if !regression_pct.is_finite() || regression_pct < 0.0 {
        return Err(WorkloadError::InvalidRegression(regression_pct));
    }
    let spec = WorkloadSpec {
        kind,
        scale,
        version_label: version_label.into(),
        regression_pct,
    };
    if kind == WorkloadKind::MemSieve && usize::try_from(spec.effective_scale()).is_err() {
        return Err(WorkloadError::TooLarge(spec.effective_scale()));
    }
    Ok(spec)
}

impl WorkloadSpec {
    pub fn kind(&self) -> WorkloadKind {
        self.kind
    }

    /// Baseline work parameter, before any injected regression.
    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn version_label(&self) -> &str {
        &self.version_label
    }

    pub fn regression_pct(&self) -> f64 {
        self.regression_pct
    }

    /// `floor(scale * (1 + regression_pct / 100))`.
    pub fn effective_scale(&self) -> u64 {
        if self.regression_pct == 0.0 {
            return self.scale;
        }
        self.scale
            .saturating_add(floor_snapped(self.scale as f64 * self.regression_pct / 100.0))
    }

    /// Same work under a different version label.
    pub fn relabel(&self, version_label: impl Into<String>) -> WorkloadSpec {
        WorkloadSpec {
            version_label: version_label.into(),
            ..self.clone()
        }
    }
}

/// Floor that treats values within a few ulps of an integer as that integer,
/// so 0.7% of 1000 yields 7 even though `1000.0 * 0.7 / 100.0` is 6.999....
fn floor_snapped(x: f64) -> u64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        x.floor() as u64
    }
}

/// Executes the workload. Pure: uses only invocation-local memory.
pub fn run_workload(spec: &WorkloadSpec) -> WorkResult {
    let n = spec.effective_scale();
    match spec.kind {
        WorkloadKind::CpuMutation => mutate(n),
        WorkloadKind::MemSieve => sieve(n),
    }
}

/// Order-independent digest: wrapping sum of mixed values.
pub fn digest<I: IntoIterator<Item = u64>>(values: I) -> u64 {
    values
        .into_iter()
        .fold(0u64, |acc, v| acc.wrapping_add(mix64(v)))
}

// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sieve(upper: u64) -> WorkResult {
    let upper = upper as usize;
    let mut composite = vec![false; upper + 1];
    let mut i = 2;
    while i * i <= upper {
        if !composite[i] {
            let mut j = i * i;
            while j <= upper {
                composite[j] = true;
                j += i;
            }
        }
        i += 1;
    }
    let composite = black_box(composite);
    let mut checksum = 0u64;
    let mut found = 0u64;
    for (p, _) in composite.iter().enumerate().skip(2).filter(|(_, c)| !**c) {
        checksum = checksum.wrapping_add(mix64(p as u64));
        found += 1;
    }
    WorkResult {
        checksum,
        units_done: found,
    }
}

fn mutate(iterations: u64) -> WorkResult {
    let mut rng = ChaCha8Rng::seed_from_u64(MUTATION_SEED);
    let inputs: [f64; MUTATION_WEIGHTS] = std::array::from_fn(|i| ((i as f64) * 0.37).sin());
    let mut weights = [0.0f64; MUTATION_WEIGHTS];
    for w in weights.iter_mut() {
        *w = rng.random_range(-1.0..1.0);
    }
    let mut checksum = 0u64;
    for _ in 0..iterations {
        let idx = rng.random_range(0..MUTATION_WEIGHTS);
        let delta: f64 = rng.random_range(-0.05..0.05);
        weights[idx] = (weights[idx] + delta).clamp(-4.0, 4.0);
        let activation: f64 = weights.iter().zip(&inputs).map(|(w, x)| w * x).sum();
        let fitness = black_box(activation).tanh();
        checksum = checksum.wrapping_add(mix64(fitness.to_bits()));
    }
    WorkResult {
        checksum,
        units_done: iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn primes_by_trial_division(upper: u64) -> Vec<u64> {
        (2..=upper)
            .filter(|&n| (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
            .collect()
    }

    #[test]
    fn sieve_regression_scales_upper_bound() {
        let spec = make_workload(WorkloadKind::MemSieve, 1_000_000, "B", 5.0).unwrap();
        assert_eq!(spec.effective_scale(), 1_050_000);
    }

    #[test]
    fn zero_regression_is_identity() {
        let spec = make_workload(WorkloadKind::CpuMutation, 10_000, "A", 0.0).unwrap();
        assert_eq!(spec.effective_scale(), 10_000);
    }

    #[test]
    fn sieve_thirty_matches_trial_division() {
        let oracle = primes_by_trial_division(30);
        assert_eq!(oracle, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        let spec = make_workload(WorkloadKind::MemSieve, 30, "A", 0.0).unwrap();
        let result = run_workload(&spec);
        assert_eq!(result.units_done, 10);
        assert_eq!(result.checksum, digest(oracle));
    }

    #[test]
    fn smallest_sieve() {
        let spec = make_workload(WorkloadKind::MemSieve, 2, "A", 0.0).unwrap();
        let result = run_workload(&spec);
        assert_eq!(result.units_done, 1);
        assert_eq!(result.checksum, digest([2]));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert_eq!(
            make_workload(WorkloadKind::MemSieve, 1, "A", 0.0),
            Err(WorkloadError::InvalidScale(1))
        );
        assert_eq!(
            make_workload(WorkloadKind::CpuMutation, 100, "B", -1.0),
            Err(WorkloadError::InvalidRegression(-1.0))
        );
        assert!(make_workload(WorkloadKind::CpuMutation, 100, "B", f64::NAN).is_err());
    }

    #[test]
    fn aa_versions_do_identical_work() {
        for kind in [WorkloadKind::CpuMutation, WorkloadKind::MemSieve] {
            let a = make_workload(kind, 5_000, "A", 0.0).unwrap();
            let b = make_workload(kind, 5_000, "B", 0.0).unwrap();
            assert_eq!(run_workload(&a), run_workload(&b));
        }
    }

    #[test]
    fn regressed_mutation_does_more_work() {
        let a = make_workload(WorkloadKind::CpuMutation, 1_000, "A", 0.0).unwrap();
        let b = make_workload(WorkloadKind::CpuMutation, 1_000, "B", 5.0).unwrap();
        assert_eq!(run_workload(&b).units_done, 1_050);
        assert_ne!(run_workload(&a).checksum, run_workload(&b).checksum);
    }

    proptest! {
        #[test]
        fn effective_scale_is_floor(scale in 2u64..10_000_000, tenths in 0u32..1000) {
            let pct = f64::from(tenths) / 10.0;
            let spec = make_workload(WorkloadKind::CpuMutation, scale, "B", pct).unwrap();
            // Integer oracle: floor(scale * tenths / 1000) extra units.
            let expected = scale + scale * u64::from(tenths) / 1000;
            prop_assert_eq!(spec.effective_scale(), expected);
        }

        #[test]
        fn runs_are_deterministic(scale in 2u64..3_000, sieve in any::<bool>()) {
            let kind = if sieve { WorkloadKind::MemSieve } else { WorkloadKind::CpuMutation };
            let spec = make_workload(kind, scale, "A", 0.0).unwrap();
            prop_assert_eq!(run_workload(&spec), run_workload(&spec));
        }

        #[test]
        fn sieve_count_matches_oracle(upper in 2u64..2_000) {
            let spec = make_workload(WorkloadKind::MemSieve, upper, "A", 0.0).unwrap();
            let oracle = primes_by_trial_division(upper);
            let got = run_workload(&spec);
            prop_assert_eq!(got.units_done, oracle.len() as u64);
            prop_assert_eq!(got.checksum, digest(oracle));
        }
    }
}
