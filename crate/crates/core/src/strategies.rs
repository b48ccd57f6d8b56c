//! The three benchmarking strategies and the pairing of their measurements.
//!
//! Strategies talk to an [`InvocationBackend`], which is either the live
//! [`Executor`](crate::executor::Executor) or the seeded platform simulator.
//! A backend call corresponds to one function call on the platform:
//!
//! * independent: one call per version,
//! * RMIT: one call running both versions back to back,
//! * duet: one call running both versions in parallel.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{relative_change, AnalysisError, PairedSample};
use crate::executor::{ClockMode, CorePlan, ExecError, Executor, Invocation, Measurement, Strategy};
use crate::rng::{stream, streams};
use crate::simenv::{advance_time, InstanceState, SimError, VariabilityModel, VirtualTime};
use crate::workloads::WorkloadSpec;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("invalid strategy configuration: {0}")]
    InvalidConfig(String),
    #[error("execution failed: {0}")]
    Execution(#[from] ExecError),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
    #[error("pairing failed: {0}")]
    Pairing(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Live,
    Simulated,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Backend::Live),
            "simulated" | "sim" => Ok(Backend::Simulated),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

/// How independent samples, which have no natural partner, are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingRule {
    /// i-th baseline call with the i-th candidate call.
    #[default]
    IndexOrder,
    /// Seeded random permutation of the candidate calls within each instance.
    Shuffled,
}

impl std::str::FromStr for PairingRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "index-order" | "index" => Ok(PairingRule::IndexOrder),
            "shuffled" => Ok(PairingRule::Shuffled),
            other => Err(format!("unknown pairing rule `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub repetitions: u32,
    pub seed: u64,
    pub backend: Backend,
    /// Forces one clock for every strategy instead of the default policy.
    pub clock: Option<ClockMode>,
    pub pairing: PairingRule,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy, repetitions: u32, seed: u64, backend: Backend) -> Self {
        StrategyConfig {
            strategy,
            repetitions,
            seed,
            backend,
            clock: None,
            pairing: PairingRule::IndexOrder,
        }
    }

    pub fn clock(&self) -> ClockMode {
        self.clock.unwrap_or(self.strategy.default_clock())
    }

    fn check(&self, expected: Strategy) -> Result<(), StrategyError> {
        if self.strategy != expected {
            return Err(StrategyError::InvalidConfig(format!(
                "expected a {expected} configuration, got {}",
                self.strategy
            )));
        }
        if self.repetitions == 0 {
            return Err(StrategyError::InvalidConfig("repetitions must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub measurements: Vec<Measurement>,
    pub config: StrategyConfig,
    /// `(baseline, candidate)` version labels.
    pub labels: (String, String),
}

/// Platform access used by the strategies.
pub trait InvocationBackend {
    fn instance_id(&self) -> u32;

    /// One call running a single version.
    fn call_solo(&mut self, spec: &WorkloadSpec, clock: ClockMode) -> Result<Invocation, StrategyError>;

    /// One call running `first` then `second` on the same instance.
    fn call_sequential(
        &mut self,
        first: &WorkloadSpec,
        second: &WorkloadSpec,
        clock: ClockMode,
    ) -> Result<(Invocation, Invocation), StrategyError>;

    /// One call running both versions in parallel; returns `(a, b)`.
    fn call_duet(
        &mut self,
        a: &WorkloadSpec,
        b: &WorkloadSpec,
        clock: ClockMode,
    ) -> Result<(Invocation, Invocation), StrategyError>;
}

/// Live backend: a dedicated executor with its own core plan.
#[derive(Debug)]
pub struct LiveBackend {
    executor: Executor,
    plan: CorePlan,
    instance_id: u32,
}

impl LiveBackend {
    pub fn new(executor: Executor, plan: CorePlan, instance_id: u32) -> Self {
        LiveBackend {
            executor,
            plan,
            instance_id,
        }
    }

    fn solo_core(&self) -> Option<usize> {
        (self.plan.core_a < self.executor.available_cores()).then_some(self.plan.core_a)
    }
}

impl InvocationBackend for LiveBackend {
    fn instance_id(&self) -> u32 {
        self.instance_id
    }

    fn call_solo(&mut self, spec: &WorkloadSpec, clock: ClockMode) -> Result<Invocation, StrategyError> {
        Ok(self.executor.solo_invoke(spec, self.solo_core(), clock)?)
    }

    fn call_sequential(
        &mut self,
        first: &WorkloadSpec,
        second: &WorkloadSpec,
        clock: ClockMode,
    ) -> Result<(Invocation, Invocation), StrategyError> {
        let a = self.call_solo(first, clock)?;
        let b = self.call_solo(second, clock)?;
        Ok((a, b))
    }

    fn call_duet(
        &mut self,
        a: &WorkloadSpec,
        b: &WorkloadSpec,
        clock: ClockMode,
    ) -> Result<(Invocation, Invocation), StrategyError> {
        if self.executor.available_cores() < 2 {
            return Err(ExecError::InsufficientCores(self.executor.available_cores()).into());
        }
        let trace = self.executor.duet_invoke_traced(a, b, self.plan)?;
        let pick = |w: &crate::executor::WorkerTrace| Invocation {
            duration_ns: match clock {
                ClockMode::CpuTime => w.cpu_ns,
                ClockMode::WallClock => w.wall_ns,
            }
            .max(1),
            clock_mode: clock,
            cold: false,
            work: Some(w.result),
        };
        Ok((pick(&trace.a), pick(&trace.b)))
    }
}

/// Simulated deployment: a warm pool of platform instances on a virtual
/// clock. Every call is routed to a uniformly chosen pool member, so the two
/// versions share an instance only when they run inside the same call.
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    model: VariabilityModel,
    pool: Vec<InstanceState>,
    rng: ChaCha8Rng,
    now: VirtualTime,
    instance_id: u32,
}

impl SimulatedBackend {
    pub fn new(model: VariabilityModel, seed: u64, instance_id: u32) -> Result<Self, StrategyError> {
        model.validate()?;
        let mut rng = stream(seed, streams::SIM_BASE + u64::from(instance_id));
        let pool = (0..model.warm_pool)
            .map(|_| model.sample_instance(instance_id, &mut rng))
            .collect();
        Ok(SimulatedBackend {
            model,
            pool,
            rng,
            now: VirtualTime::ZERO,
            instance_id,
        })
    }

    pub fn pool(&self) -> &[InstanceState] {
        &self.pool
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    fn route(&mut self) -> usize {
        self.rng.random_range(0..self.pool.len())
    }

    fn tick(&mut self) -> Result<(), StrategyError> {
        self.now = advance_time(self.now, self.model.time_step_ms / 1e3)?;
        Ok(())
    }

    fn invocation(call: crate::simenv::SimulatedCall, clock: ClockMode) -> Invocation {
        Invocation {
            duration_ns: call.duration_ns,
            clock_mode: clock,
            cold: call.cold,
            work: None,
        }
    }
}

impl InvocationBackend for SimulatedBackend {
    fn instance_id(&self) -> u32 {
        self.instance_id
    }

    fn call_solo(&mut self, spec: &WorkloadSpec, clock: ClockMode) -> Result<Invocation, StrategyError> {
        let idx = self.route();
        let call = self
            .model
            .simulate_invocation(&mut self.pool[idx], spec, self.now, None, &mut self.rng);
        self.tick()?;
        Ok(Self::invocation(call, clock))
    }

    fn call_sequential(
        &mut self,
        first: &WorkloadSpec,
        second: &WorkloadSpec,
        clock: ClockMode,
    ) -> Result<(Invocation, Invocation), StrategyError> {
        let idx = self.route();
        let inst = &mut self.pool[idx];
        let a = self.model.simulate_invocation(inst, first, self.now, None, &mut self.rng);
        let b = self.model.simulate_invocation(inst, second, self.now, None, &mut self.rng);
        self.tick()?;
        Ok((Self::invocation(a, clock), Self::invocation(b, clock)))
    }

    fn call_duet(
        &mut self,
        a: &WorkloadSpec,
        b: &WorkloadSpec,
        clock: ClockMode,
    ) -> Result<(Invocation, Invocation), StrategyError> {
        let idx = self.route();
        let inst = &mut self.pool[idx];
        let draw = self.model.draw_shared(inst, &mut self.rng);
        let ia = self.model.simulate_invocation(inst, a, self.now, Some(&draw), &mut self.rng);
        let ib = self.model.simulate_invocation(inst, b, self.now, Some(&draw), &mut self.rng);
        self.tick()?;
        Ok((Self::invocation(ia, clock), Self::invocation(ib, clock)))
    }
}

fn labels(specs: (&WorkloadSpec, &WorkloadSpec)) -> Result<(String, String), StrategyError> {
    let (a, b) = (specs.0.version_label(), specs.1.version_label());
    if a == b {
        return Err(StrategyError::InvalidConfig(format!(
            "both versions carry the label `{a}`"
        )));
    }
    Ok((a.to_owned(), b.to_owned()))
}

/// All baseline calls, then all candidate calls, each alone.
pub fn run_independent(
    cfg: &StrategyConfig,
    specs: (&WorkloadSpec, &WorkloadSpec),
    backend: &mut dyn InvocationBackend,
) -> Result<MeasurementSet, StrategyError> {
    cfg.check(Strategy::Independent)?;
    let labels = labels(specs)?;
    let clock = cfg.clock();
    let instance = backend.instance_id();
    let mut measurements = Vec::with_capacity(2 * cfg.repetitions as usize);
    for spec in [specs.0, specs.1] {
        for rep in 0..cfg.repetitions {
            let inv = backend.call_solo(spec, clock)?;
            measurements.push(inv.into_measurement(
                spec.version_label(),
                Strategy::Independent,
                instance,
                rep,
                None,
            ));
        }
    }
    Ok(MeasurementSet {
        measurements,
        config: cfg.clone(),
        labels,
    })
}

/// One trial per repetition; a seeded fair coin picks AB or BA.
pub fn run_rmit(
    cfg: &StrategyConfig,
    specs: (&WorkloadSpec, &WorkloadSpec),
    backend: &mut dyn InvocationBackend,
) -> Result<MeasurementSet, StrategyError> {
    cfg.check(Strategy::Rmit)?;
    let labels = labels(specs)?;
    let clock = cfg.clock();
    let instance = backend.instance_id();
    let mut coin = stream(cfg.seed, streams::RMIT_BASE + u64::from(instance));
    let mut measurements = Vec::with_capacity(2 * cfg.repetitions as usize);
    for rep in 0..cfg.repetitions {
        let a_first: bool = coin.random_bool(0.5);
        let (first, second) = if a_first {
            (specs.0, specs.1)
        } else {
            (specs.1, specs.0)
        };
        let (i1, i2) = backend.call_sequential(first, second, clock)?;
        measurements.push(i1.into_measurement(first.version_label(), Strategy::Rmit, instance, rep, Some(0)));
        measurements.push(i2.into_measurement(second.version_label(), Strategy::Rmit, instance, rep, Some(1)));
    }
    Ok(MeasurementSet {
        measurements,
        config: cfg.clone(),
        labels,
    })
}

/// One synchronized parallel call per repetition.
pub fn run_duet(
    cfg: &StrategyConfig,
    specs: (&WorkloadSpec, &WorkloadSpec),
    backend: &mut dyn InvocationBackend,
) -> Result<MeasurementSet, StrategyError> {
    cfg.check(Strategy::Duet)?;
    let labels = labels(specs)?;
    let clock = cfg.clock();
    let instance = backend.instance_id();
    let mut measurements = Vec::with_capacity(2 * cfg.repetitions as usize);
    for rep in 0..cfg.repetitions {
        let (a, b) = backend.call_duet(specs.0, specs.1, clock)?;
        measurements.push(a.into_measurement(specs.0.version_label(), Strategy::Duet, instance, rep, None));
        measurements.push(b.into_measurement(specs.1.version_label(), Strategy::Duet, instance, rep, None));
    }
    Ok(MeasurementSet {
        measurements,
        config: cfg.clone(),
        labels,
    })
}

/// Dispatches on `cfg.strategy`.
pub fn run_strategy(
    cfg: &StrategyConfig,
    specs: (&WorkloadSpec, &WorkloadSpec),
    backend: &mut dyn InvocationBackend,
) -> Result<MeasurementSet, StrategyError> {
    match cfg.strategy {
        Strategy::Independent => run_independent(cfg, specs, backend),
        Strategy::Rmit => run_rmit(cfg, specs, backend),
        Strategy::Duet => run_duet(cfg, specs, backend),
    }
}

/// Pairs baseline and candidate measurements by `(instance, repetition)` and
/// computes their relative change. Independent sets honor `cfg.pairing`.
/// Output is ordered by instance, then repetition.
pub fn pair_measurements(set: &MeasurementSet) -> Result<Vec<PairedSample>, StrategyError> {
    let (base_label, cand_label) = (&set.labels.0, &set.labels.1);
    let mut slots: BTreeMap<(u32, u32), (Option<u64>, Option<u64>)> = BTreeMap::new();
    for m in &set.measurements {
        let slot = slots.entry((m.instance_id, m.repetition)).or_default();
        let target = if &m.version_label == base_label {
            &mut slot.0
        } else if &m.version_label == cand_label {
            &mut slot.1
        } else {
            return Err(StrategyError::Pairing(format!(
                "unexpected version label `{}`",
                m.version_label
            )));
        };
        if target.replace(m.duration_ns).is_some() {
            return Err(StrategyError::Pairing(format!(
                "duplicate {} measurement for instance {} repetition {}",
                m.version_label, m.instance_id, m.repetition
            )));
        }
    }

    let mut keys = Vec::with_capacity(slots.len());
    let mut base = Vec::with_capacity(slots.len());
    let mut cand = Vec::with_capacity(slots.len());
    for ((instance, rep), (a, b)) in slots {
        match (a, b) {
            (Some(a), Some(b)) => {
                keys.push((instance, rep));
                base.push(a);
                cand.push(b);
            }
            _ => {
                return Err(StrategyError::Pairing(format!(
                    "instance {instance} repetition {rep} lacks a partner measurement"
                )))
            }
        }
    }

    if set.config.strategy == Strategy::Independent && set.config.pairing == PairingRule::Shuffled {
        let mut rng = stream(set.config.seed, streams::PAIRING);
        let mut start = 0;
        while start < keys.len() {
            let instance = keys[start].0;
            let end = start + keys[start..].iter().take_while(|k| k.0 == instance).count();
            cand[start..end].shuffle(&mut rng);
            start = end;
        }
    }

    keys.iter()
        .zip(base.iter().zip(&cand))
        .map(|(&(instance_id, repetition), (&a, &b))| {
            Ok(PairedSample {
                instance_id,
                repetition,
                change_pct: relative_change(a as f64, b as f64)?,
            })
        })
        .collect()
}
