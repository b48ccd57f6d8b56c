//! Fixtures shared by the benchmarks.

use duetbench::analysis::PairedSample;
use duetbench::{Backend, ExperimentConfig, Strategy};

/// `n` deterministic pseudo-random changes around +5%.
pub fn paired_changes(n: usize) -> Vec<PairedSample> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    (0..n)
        .map(|i| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let unit = (state >> 11) as f64 / (1u64 << 53) as f64;
            PairedSample {
                instance_id: 0,
                repetition: i as u32,
                change_pct: 5.0 + (unit - 0.5) * 2.0,
            }
        })
        .collect()
}

pub fn values(samples: &[PairedSample]) -> Vec<f64> {
    samples.iter().map(|s| s.change_pct).collect()
}

/// Simulated single-strategy experiment of `repetitions` pairs.
pub fn simulated(strategy: Strategy, repetitions: u32) -> ExperimentConfig {
    ExperimentConfig {
        strategies: vec![strategy],
        backend: Backend::Simulated,
        repetitions,
        resamples: 1_000,
        ..ExperimentConfig::default()
    }
}
