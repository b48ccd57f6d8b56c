//! Regression analysis: relative change, cold-start filtering, percentile and
//! bootstrap confidence intervals, sample-size sweeps and verdicts.
//!
//! Relative change is `(t_b - t_a) / t_a * 100` with `a` the baseline, so a
//! positive change means the candidate is slower.

use std::collections::HashMap;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream;
use crate::strategies::MeasurementSet;

/// Smallest sample the bootstrap accepts; below it the interval is
/// systematically too narrow.
pub const MIN_SAMPLE_SIZE: usize = 50;
pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const MIN_RESAMPLES: usize = 1_000;
pub const DEFAULT_LEVEL: f64 = 0.99;

/// Resamples per deterministic PRNG stream. Fixed so results do not depend on
/// the number of rayon workers.
const RESAMPLE_CHUNK: usize = 250;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("relative change undefined for baseline duration {0}")]
    DivisionDomain(f64),
    #[error("no samples")]
    EmptySamples,
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("insufficient samples: got {got}, bootstrap needs at least {min}")]
    InsufficientSamples { got: usize, min: usize },
    #[error("too few resamples: got {got}, need at least {min}")]
    TooFewResamples { got: usize, min: usize },
    #[error("invalid sweep range {from}..={to} step {step} over {available} samples")]
    InvalidRange {
        from: usize,
        to: usize,
        step: usize,
        available: usize,
    },
}

/// Per-repetition relative change between baseline and candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub instance_id: u32,
    pub repetition: u32,
    pub change_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower_pct: f64,
    pub upper_pct: f64,
    pub level: f64,
    pub width_pp: f64,
}

impl ConfidenceInterval {
    fn new(lower_pct: f64, upper_pct: f64, level: f64) -> Self {
        ConfidenceInterval {
            lower_pct,
            upper_pct,
            level,
            width_pp: upper_pct - lower_pct,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower_pct <= value && value <= self.upper_pct
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Regression,
    Inconclusive,
}

impl Verdict {
    /// Pipeline exit code: 0 pass, 1 regression, 3 inconclusive (2 is
    /// reserved for errors).
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Regression => 1,
            Verdict::Inconclusive => 3,
        }
    }

    /// Combines per-strategy verdicts: any regression wins, then any
    /// inconclusive result.
    pub fn combine<I: IntoIterator<Item = Verdict>>(verdicts: I) -> Verdict {
        verdicts.into_iter().fold(Verdict::Pass, |acc, v| match (acc, v) {
            (Verdict::Regression, _) | (_, Verdict::Regression) => Verdict::Regression,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        })
    }
}

pub fn relative_change(t_a: f64, t_b: f64) -> Result<f64, AnalysisError> {
    if !t_a.is_finite() || t_a <= 0.0 {
        return Err(AnalysisError::DivisionDomain(t_a));
    }
    Ok((t_b - t_a) / t_a * 100.0)
}

/// Drops cold measurements together with their partners, keyed by
/// `(instance_id, repetition)`.
pub fn filter_cold_starts(set: &MeasurementSet) -> MeasurementSet {
    let cold: std::collections::HashSet<(u32, u32)> = set
        .measurements
        .iter()
        .filter(|m| m.cold)
        .map(|m| (m.instance_id, m.repetition))
        .collect();
    if cold.is_empty() {
        return set.clone();
    }
    let mut filtered = set.clone();
    filtered
        .measurements
        .retain(|m| !cold.contains(&(m.instance_id, m.repetition)));
    filtered
}

/// Number of values trimmed from each end: `floor(n * (1 - level) / 2)`.
/// A relative tolerance absorbs representation error, e.g. `1 - 0.9` is
/// `0.09999999999999998`.
pub fn trim_count(n: usize, level: f64) -> usize {
    let exact = n as f64 * (1.0 - level) / 2.0;
    let nearest = exact.round();
    if (exact - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        exact.floor() as usize
    }
}

fn check_level(level: f64) -> Result<(), AnalysisError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::InvalidLevel(level))
    }
}

/// Sorts, removes `trim_count` values from both ends and returns the
/// remaining extremes.
pub fn percentile_interval(samples: &[f64], level: f64) -> Result<ConfidenceInterval, AnalysisError> {
    check_level(level)?;
    if samples.is_empty() {
        return Err(AnalysisError::EmptySamples);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(trimmed_bounds(&sorted, level))
}

fn trimmed_bounds(sorted: &[f64], level: f64) -> ConfidenceInterval {
    let k = trim_count(sorted.len(), level);
    ConfidenceInterval::new(sorted[k], sorted[sorted.len() - 1 - k], level)
}

/// Median; averages the two middle values for even lengths. Reorders `values`.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of empty slice");
    let mid = n / 2;
    let (left, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = left.iter().copied().max_by(f64::total_cmp).unwrap_or(upper);
        (lower + upper) / 2.0
    }
}

pub fn median_change(samples: &[PairedSample]) -> Result<f64, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptySamples);
    }
    let mut values: Vec<f64> = samples.iter().map(|s| s.change_pct).collect();
    Ok(median_in_place(&mut values))
}

/// Bootstrap percentile interval of the median change.
///
/// Consumes one `u64` from `rng`; resample `i` is drawn from stream
/// `i / 250` of that seed, so the result depends only on the seed and the
/// samples, never on thread count.
pub fn bootstrap_ci<R: RngCore + ?Sized>(
    samples: &[PairedSample],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<ConfidenceInterval, AnalysisError> {
    check_level(level)?;
    if samples.len() < MIN_SAMPLE_SIZE {
        return Err(AnalysisError::InsufficientSamples {
            got: samples.len(),
            min: MIN_SAMPLE_SIZE,
        });
    }
    if resamples < MIN_RESAMPLES {
        return Err(AnalysisError::TooFewResamples {
            got: resamples,
            min: MIN_RESAMPLES,
        });
    }
    let values: Vec<f64> = samples.iter().map(|s| s.change_pct).collect();
    if values.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let seed = rng.next_u64();
    let mut medians = bootstrap_medians(&values, resamples, seed);
    medians.sort_by(f64::total_cmp);
    Ok(trimmed_bounds(&medians, level))
}

/// Medians of `resamples` with-replacement resamples of `values`, in
/// resample order.
pub fn bootstrap_medians(values: &[f64], resamples: usize, seed: u64) -> Vec<f64> {
    let n = values.len();
    let chunks = resamples.div_ceil(RESAMPLE_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng = stream(seed, chunk as u64);
            let count = RESAMPLE_CHUNK.min(resamples - chunk * RESAMPLE_CHUNK);
            let mut buf = vec![0.0; n];
            (0..count)
                .map(|_| {
                    for slot in buf.iter_mut() {
                        *slot = values[rng.random_range(0..n)];
                    }
                    median_in_place(&mut buf)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub width_pp: f64,
}

/// Bootstrap CI width over the first `n` samples for each `n` in
/// `from, from + step, ..., <= to`.
pub fn sweep_sample_size<R: RngCore + ?Sized>(
    samples: &[PairedSample],
    from: usize,
    to: usize,
    step: usize,
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<Vec<SweepPoint>, AnalysisError> {
    if step == 0 || from < MIN_SAMPLE_SIZE || to > samples.len() || from > to {
        return Err(AnalysisError::InvalidRange {
            from,
            to,
            step,
            available: samples.len(),
        });
    }
    (from..=to)
        .step_by(step)
        .map(|n| {
            bootstrap_ci(&samples[..n], level, resamples, rng).map(|ci| SweepPoint {
                n,
                width_pp: ci.width_pp,
            })
        })
        .collect()
}

pub fn verdict(ci: &ConfidenceInterval, threshold_pct: f64) -> Verdict {
    if ci.lower_pct > threshold_pct {
        Verdict::Regression
    } else if ci.upper_pct < threshold_pct {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

/// Counts measurements per `(instance, repetition)` key, used by callers that
/// need to know how many pairs a set can yield.
pub fn pair_keys(set: &MeasurementSet) -> usize {
    let mut keys: HashMap<(u32, u32), usize> = HashMap::new();
    for m in &set.measurements {
        *keys.entry((m.instance_id, m.repetition)).or_default() += 1;
    }
    keys.len()
}
