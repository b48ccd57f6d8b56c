//! Seeded model of FaaS platform variability.
//!
//! The duration of a simulated call is
//!
//! ```text
//! effective_scale * base_cost * quality * drift(t) * noise  (+ cold penalty)
//! ```
//!
//! * `quality` is fixed per platform instance, lognormal with coefficient of
//!   variation `instance_quality_cv`, truncated to `[0.5, 2.0]`.
//! * `drift(t) = 1 + drift_amplitude * sin(2πt / drift_period + phase)` is a
//!   slow sinusoid with a per-instance phase.
//! * `noise` is a lognormal per-draw factor with log-scale `temporal_sigma`.
//!   Duet passes one shared draw to both versions and adds only a small
//!   independent jitter (`duet_jitter_cv`); with the jitter at zero the two
//!   versions are fully correlated.
//!
//! All lognormal factors have median 1, so ratios of independent draws are
//! symmetric around 1. The lognormal shape is a modeling assumption; no
//! platform trace was used to calibrate it.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workloads::WorkloadSpec;

pub const QUALITY_MIN: f64 = 0.5;
pub const QUALITY_MAX: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid variability model: {0}")]
    InvalidModel(String),
    #[error("virtual time cannot move backwards (dt = {0})")]
    NegativeStep(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariabilityModel {
    /// Coefficient of variation of the per-instance speed multiplier.
    pub instance_quality_cv: f64,
    /// Log-scale standard deviation of the per-draw noise factor.
    pub temporal_sigma: f64,
    pub cold_penalty_ms: f64,
    pub base_cost_ns_per_unit: f64,
    /// Period of the slow sinusoidal drift, in seconds.
    pub drift_period_s: f64,
    pub drift_amplitude: f64,
    /// Independent residual jitter on top of a shared duet draw.
    pub duet_jitter_cv: f64,
    /// Virtual time consumed by one repetition.
    pub time_step_ms: f64,
    /// Warm platform instances a separately triggered call may land on.
    pub warm_pool: u32,
}

impl Default for VariabilityModel {
    fn default() -> Self {
        VariabilityModel {
            instance_quality_cv: 0.15,
            temporal_sigma: 0.05,
            cold_penalty_ms: 150.0,
            base_cost_ns_per_unit: 50.0,
            drift_period_s: 600.0,
            drift_amplitude: 0.02,
            duet_jitter_cv: 0.002,
            time_step_ms: 100.0,
            warm_pool: 4,
        }
    }
}

impl VariabilityModel {
    /// Deterministic platform: every call of the same spec costs the same.
    pub fn noise_free() -> Self {
        VariabilityModel {
            instance_quality_cv: 0.0,
            temporal_sigma: 0.0,
            cold_penalty_ms: 0.0,
            drift_amplitude: 0.0,
            duet_jitter_cv: 0.0,
            ..VariabilityModel::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let non_negative = [
            ("instance_quality_cv", self.instance_quality_cv),
            ("temporal_sigma", self.temporal_sigma),
            ("cold_penalty_ms", self.cold_penalty_ms),
            ("drift_amplitude", self.drift_amplitude),
            ("duet_jitter_cv", self.duet_jitter_cv),
            ("time_step_ms", self.time_step_ms),
        ];
        for (name, value) in non_negative {
            if !value.is_finite() || value < 0.0 {
                return Err(SimError::InvalidModel(format!(
                    "{name} must be finite and >= 0, got {value}"
                )));
            }
        }
        for (name, value) in [
            ("base_cost_ns_per_unit", self.base_cost_ns_per_unit),
            ("drift_period_s", self.drift_period_s),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(SimError::InvalidModel(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        if self.drift_amplitude >= 1.0 {
            return Err(SimError::InvalidModel(format!(
                "drift_amplitude must be < 1 to keep durations positive, got {}",
                self.drift_amplitude
            )));
        }
        if self.warm_pool == 0 {
            return Err(SimError::InvalidModel("warm_pool must be >= 1".into()));
        }
        Ok(())
    }

    /// Multiplicative drift at time `t` for an instance with `phase`.
    pub fn drift(&self, phase: f64, t: VirtualTime) -> f64 {
        1.0 + self.drift_amplitude * (TAU * t.seconds() / self.drift_period_s + phase).sin()
    }

    /// Draws a fresh platform instance.
    pub fn sample_instance<R: Rng + ?Sized>(&self, instance_id: u32, rng: &mut R) -> InstanceState {
        let quality = lognormal_from_cv(self.instance_quality_cv, rng).clamp(QUALITY_MIN, QUALITY_MAX);
        let drift_phase = rng.random_range(0.0..TAU);
        InstanceState {
            instance_id,
            quality,
            invocations_served: 0,
            drift_phase,
        }
    }

    /// Noise draw shared by both versions of one duet call.
    pub fn draw_shared<R: Rng + ?Sized>(&self, inst: &InstanceState, rng: &mut R) -> SharedDraw {
        SharedDraw {
            noise: lognormal(self.temporal_sigma, rng),
            cold: inst.invocations_served == 0,
        }
    }

    /// Simulates one call of `spec` on `inst` at time `t`.
    pub fn simulate_invocation<R: Rng + ?Sized>(
        &self,
        inst: &mut InstanceState,
        spec: &WorkloadSpec,
        t: VirtualTime,
        shared: Option<&SharedDraw>,
        rng: &mut R,
    ) -> SimulatedCall {
        let (noise, cold) = match shared {
            Some(draw) => (draw.noise * lognormal_from_cv(self.duet_jitter_cv, rng), draw.cold),
            None => (lognormal(self.temporal_sigma, rng), inst.invocations_served == 0),
        };
        let mut duration = spec.effective_scale() as f64
            * self.base_cost_ns_per_unit
            * inst.quality
            * self.drift(inst.drift_phase, t)
            * noise;
        if cold {
            duration += self.cold_penalty_ms * 1e6;
        }
        inst.invocations_served += 1;
        SimulatedCall {
            duration_ns: (duration.round() as u64).max(1),
            cold,
        }
    }
}

/// Simulated platform instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceState {
    pub instance_id: u32,
    /// Speed multiplier in `[0.5, 2.0]`; above 1 is a slow ("bad") instance.
    pub quality: f64,
    pub invocations_served: u64,
    pub drift_phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedDraw {
    pub noise: f64,
    pub cold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulatedCall {
    pub duration_ns: u64,
    pub cold: bool,
}

/// Monotone simulation clock, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct VirtualTime(f64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0.0);

    pub fn from_seconds(seconds: f64) -> Self {
        VirtualTime(seconds)
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

pub fn advance_time(t: VirtualTime, dt: f64) -> Result<VirtualTime, SimError> {
    if dt.is_nan() || dt < 0.0 {
        return Err(SimError::NegativeStep(dt));
    }
    Ok(VirtualTime(t.0 + dt))
}

/// Median-one lognormal factor `exp(sigma * Z)`. Always consumes one normal
/// draw so streams stay aligned across parameter settings.
fn lognormal<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (sigma * z).exp()
}

/// Lognormal factor with coefficient of variation `cv`:
/// `cv^2 = exp(sigma^2) - 1`.
fn lognormal_from_cv<R: Rng + ?Sized>(cv: f64, rng: &mut R) -> f64 {
    lognormal((1.0 + cv * cv).ln().sqrt(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::relative_change;
    use crate::rng::stream;
    use crate::workloads::{make_workload, WorkloadKind};

    fn spec(label: &str, pct: f64) -> WorkloadSpec {
        make_workload(WorkloadKind::CpuMutation, 10_000, label, pct).unwrap()
    }

    #[test]
    fn zero_cv_gives_unit_quality() {
        let model = VariabilityModel {
            instance_quality_cv: 0.0,
            ..VariabilityModel::default()
        };
        let mut rng = stream(1, 0);
        for id in 0..100 {
            assert_eq!(model.sample_instance(id, &mut rng).quality, 1.0);
        }
    }

    #[test]
    fn instance_draw_is_seeded() {
        let model = VariabilityModel::default();
        let a = model.sample_instance(3, &mut stream(99, 7));
        let b = model.sample_instance(3, &mut stream(99, 7));
        assert_eq!(a, b);
        assert_eq!(a.invocations_served, 0);
    }

    #[test]
    fn quality_cv_matches_model() {
        // Monte-Carlo check of the cv parameterization and truncation.
        let model = VariabilityModel::default();
        let mut rng = stream(2024, 0);
        let q: Vec<f64> = (0..10_000)
            .map(|i| model.sample_instance(i, &mut rng).quality)
            .collect();
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let var = q.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (q.len() - 1) as f64;
        let cv = var.sqrt() / mean;
        assert!((0.12..=0.18).contains(&cv), "empirical cv {cv}");
        assert!(q.iter().all(|x| (QUALITY_MIN..=QUALITY_MAX).contains(x)));
    }

    #[test]
    fn noise_free_pairs_are_exact() {
        let model = VariabilityModel::noise_free();
        let mut rng = stream(5, 0);
        let mut inst = model.sample_instance(0, &mut rng);
        let t = VirtualTime::from_seconds(12.5);
        let a = model.simulate_invocation(&mut inst, &spec("A", 0.0), t, None, &mut rng);
        let a2 = model.simulate_invocation(&mut inst, &spec("A", 0.0), t, None, &mut rng);
        let b = model.simulate_invocation(&mut inst, &spec("B", 5.0), t, None, &mut rng);
        assert_eq!(a.duration_ns, a2.duration_ns);
        let change = relative_change(a.duration_ns as f64, b.duration_ns as f64).unwrap();
        assert!((change - 5.0).abs() < 1e-9, "change {change}");
    }

    #[test]
    fn shared_draw_cancels_for_aa() {
        let model = VariabilityModel {
            duet_jitter_cv: 0.0,
            ..VariabilityModel::default()
        };
        let mut rng = stream(11, 0);
        let mut inst = model.sample_instance(0, &mut rng);
        let mut t = VirtualTime::ZERO;
        for _ in 0..1_000 {
            let draw = model.draw_shared(&inst, &mut rng);
            let a = model.simulate_invocation(&mut inst, &spec("A", 0.0), t, Some(&draw), &mut rng);
            let b = model.simulate_invocation(&mut inst, &spec("B", 0.0), t, Some(&draw), &mut rng);
            assert_eq!(a, b);
            t = advance_time(t, 0.1).unwrap();
        }
    }

    #[test]
    fn cold_flag_only_on_first_call() {
        let model = VariabilityModel::default();
        let mut rng = stream(3, 0);
        let mut inst = model.sample_instance(0, &mut rng);
        let first = model.simulate_invocation(&mut inst, &spec("A", 0.0), VirtualTime::ZERO, None, &mut rng);
        let second = model.simulate_invocation(&mut inst, &spec("A", 0.0), VirtualTime::ZERO, None, &mut rng);
        assert!(first.cold);
        assert!(!second.cold);
        assert_eq!(inst.invocations_served, 2);
        assert!(first.duration_ns > second.duration_ns + 100_000_000);
    }

    #[test]
    fn independent_aa_draws_are_unbiased() {
        let model = VariabilityModel::default();
        let mut rng = stream(77, 0);
        let mut inst = model.sample_instance(0, &mut rng);
        let t = VirtualTime::from_seconds(1.0);
        inst.invocations_served = 1;
        let mut changes: Vec<f64> = (0..10_000)
            .map(|_| {
                let a = model.simulate_invocation(&mut inst, &spec("A", 0.0), t, None, &mut rng);
                let b = model.simulate_invocation(&mut inst, &spec("B", 0.0), t, None, &mut rng);
                relative_change(a.duration_ns as f64, b.duration_ns as f64).unwrap()
            })
            .collect();
        changes.sort_by(f64::total_cmp);
        let median = (changes[4_999] + changes[5_000]) / 2.0;
        assert!(median.abs() <= 0.5, "median {median}");
    }

    #[test]
    fn time_advances_and_drift_is_periodic() {
        assert_eq!(advance_time(VirtualTime::ZERO, 1.0).unwrap(), VirtualTime::from_seconds(1.0));
        assert_eq!(
            advance_time(VirtualTime::ZERO, -1.0),
            Err(SimError::NegativeStep(-1.0))
        );
        assert!(advance_time(VirtualTime::ZERO, f64::NAN).is_err());
        let model = VariabilityModel::default();
        for t in [0.0, 3.7, 150.0, 1234.5] {
            let now = model.drift(0.4, VirtualTime::from_seconds(t));
            let later = model.drift(0.4, VirtualTime::from_seconds(t + model.drift_period_s));
            assert!((now - later).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        VariabilityModel::default().validate().unwrap();
        VariabilityModel::noise_free().validate().unwrap();
        let bad = [
            VariabilityModel { instance_quality_cv: -0.1, ..Default::default() },
            VariabilityModel { base_cost_ns_per_unit: 0.0, ..Default::default() },
            VariabilityModel { drift_amplitude: 1.0, ..Default::default() },
            VariabilityModel { warm_pool: 0, ..Default::default() },
            VariabilityModel { temporal_sigma: f64::INFINITY, ..Default::default() },
        ];
        for model in bad {
            assert!(model.validate().is_err(), "{model:?}");
        }
    }
}
