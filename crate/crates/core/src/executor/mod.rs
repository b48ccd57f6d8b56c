//! Live execution engine.
//!
//! [`Executor::solo_invoke`] runs a single workload on a worker thread, and
//! [`Executor::duet_invoke`] runs two workloads in parallel, each worker
//! pinned to its own core and both released from a common start gate. The
//! coordinator (the calling thread) owns the gate and re-arms it on every
//! call.

mod gate;
mod sys;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workloads::{run_workload, WorkResult, WorkloadSpec};
use gate::{GateError, StartGate};

/// Environment variable that disables pinning (CI runners without affinity rights).
pub const NO_PIN_ENV: &str = "DUETBENCH_NO_PIN";

/// How long the coordinator waits for both duet workers to become ready.
pub const BARRIER_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("duet execution needs at least 2 logical cores, host exposes {0}")]
    InsufficientCores(usize),
    #[error("invalid core plan {core_a}/{core_b} for {available} usable cores")]
    InvalidPlan {
        core_a: usize,
        core_b: usize,
        available: usize,
    },
    #[error("core index {core} out of range ({available} usable cores)")]
    InvalidCore { core: usize, available: usize },
    #[error("cannot pin worker to core {core}: {source}")]
    AffinityUnsupported {
        core: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("core {0} is already claimed by another executor")]
    CoreBusy(usize),
    #[error("duet workers did not reach the start barrier within {0:?}")]
    BarrierTimeout(Duration),
    #[error("cannot read the per-thread CPU clock: {0}")]
    Clock(#[source] std::io::Error),
    #[error("worker thread panicked")]
    WorkerPanicked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClockMode {
    /// Per-thread CPU time.
    CpuTime,
    /// Monotonic timestamps taken around the call.
    WallClock,
}

impl ClockMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClockMode::CpuTime => "cpu-time",
            ClockMode::WallClock => "wall-clock",
        }
    }
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cpu" | "cpu-time" | "cputime" => Ok(ClockMode::CpuTime),
            "wall" | "wall-clock" | "wallclock" => Ok(ClockMode::WallClock),
            other => Err(format!("unknown clock mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Independent,
    Rmit,
    Duet,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Independent, Strategy::Rmit, Strategy::Duet];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Independent => "independent",
            Strategy::Rmit => "rmit",
            Strategy::Duet => "duet",
        }
    }

    /// Clock used unless a uniform clock is forced: duet measures CPU time,
    /// the sequential strategies take wall-clock timestamps.
    pub fn default_clock(self) -> ClockMode {
        match self {
            Strategy::Duet => ClockMode::CpuTime,
            Strategy::Independent | Strategy::Rmit => ClockMode::WallClock,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "independent" => Ok(Strategy::Independent),
            "rmit" => Ok(Strategy::Rmit),
            "duet" => Ok(Strategy::Duet),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// One timed invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub duration_ns: u64,
    pub clock_mode: ClockMode,
    pub version_label: String,
    pub strategy: Strategy,
    pub instance_id: u32,
    pub repetition: u32,
    pub cold: bool,
    /// Position within an RMIT trial (0 runs first).
    pub order_position: Option<u8>,
    /// Result of the executed work; only the live backend has one.
    pub work: Option<WorkResult>,
}

/// Timing of a single live or simulated call, before it is labelled with
/// strategy and repetition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invocation {
    pub duration_ns: u64,
    pub clock_mode: ClockMode,
    pub cold: bool,
    pub work: Option<WorkResult>,
}

impl Invocation {
    pub fn into_measurement(
        self,
        version_label: &str,
        strategy: Strategy,
        instance_id: u32,
        repetition: u32,
        order_position: Option<u8>,
    ) -> Measurement {
        Measurement {
            duration_ns: self.duration_ns,
            clock_mode: self.clock_mode,
            version_label: version_label.to_owned(),
            strategy,
            instance_id,
            repetition,
            cold: self.cold,
            order_position,
            work: self.work,
        }
    }
}

/// Core assignment for the two duet workers, as ordinals into the host's
/// usable cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorePlan {
    pub core_a: usize,
    pub core_b: usize,
}

impl CorePlan {
    pub fn new(core_a: usize, core_b: usize) -> Self {
        CorePlan { core_a, core_b }
    }

    fn validate(self, available: usize) -> Result<(), ExecError> {
        if self.core_a == self.core_b || self.core_a >= available || self.core_b >= available {
            return Err(ExecError::InvalidPlan {
                core_a: self.core_a,
                core_b: self.core_b,
                available,
            });
        }
        Ok(())
    }
}

impl Default for CorePlan {
    fn default() -> Self {
        CorePlan::new(0, 1)
    }
}

/// Count of logical cores usable for pinning; always at least 1.
pub fn available_cores() -> usize {
    sys::usable_cpus().len().max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pinning {
    /// Pin workers; failure is an error.
    Required,
    /// Pin workers; fall back to unpinned execution if the platform refuses.
    Preferred,
    /// Never pin.
    Disabled,
}

/// Everything measured for one worker, including data only used for
/// self-checks.
#[derive(Debug, Clone)]
pub struct WorkerTrace {
    pub work_started: Instant,
    pub wall_ns: u64,
    pub cpu_ns: u64,
    pub pinned_to: Option<usize>,
    /// Affinity reported by the worker after pinning.
    pub affinity: Option<Vec<usize>>,
    pub result: WorkResult,
}

impl WorkerTrace {
    fn invocation(&self, clock: ClockMode) -> Invocation {
        let raw = match clock {
            ClockMode::CpuTime => self.cpu_ns,
            ClockMode::WallClock => self.wall_ns,
        };
        Invocation {
            // A completed call took time even if the clock resolution says otherwise.
            duration_ns: raw.max(1),
            clock_mode: clock,
            cold: false,
            work: Some(self.result),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DuetTrace {
    pub released_at: Instant,
    pub a: WorkerTrace,
    pub b: WorkerTrace,
}

#[derive(Debug)]
pub struct Executor {
    cpus: Vec<usize>,
    pinning: Pinning,
    duet_clock: ClockMode,
}

impl Default for Executor {
    fn default() -> Self {
        Executor::new()
    }
}

impl Executor {
    /// Executor over the host's usable cores. Pinning is required unless
    /// [`NO_PIN_ENV`] is set to a non-empty value other than `0`.
    pub fn new() -> Self {
        let pin_disabled = std::env::var(NO_PIN_ENV).is_ok_and(|v| !v.is_empty() && v != "0");
        Executor {
            cpus: sys::usable_cpus(),
            pinning: if pin_disabled {
                Pinning::Disabled
            } else {
                Pinning::Required
            },
            duet_clock: ClockMode::CpuTime,
        }
    }

    pub fn with_pinning(mut self, pinning: Pinning) -> Self {
        self.pinning = pinning;
        self
    }

    /// Clock reported by [`Executor::duet_invoke`]; CPU time unless forced.
    pub fn with_duet_clock(mut self, clock: ClockMode) -> Self {
        self.duet_clock = clock;
        self
    }

    pub fn pinning(&self) -> Pinning {
        self.pinning
    }

    pub fn available_cores(&self) -> usize {
        self.cpus.len().max(1)
    }

    /// Runs `spec` alone on a fresh worker thread, optionally pinned to the
    /// `core`-th usable core.
    pub fn solo_invoke(
        &self,
        spec: &WorkloadSpec,
        core: Option<usize>,
        clock: ClockMode,
    ) -> Result<Invocation, ExecError> {
        let cpu = match core {
            Some(core) => Some(self.cpu_id(core)?),
            None => None,
        };
        let trace = thread::scope(|s| {
            s.spawn(|| self.worker(spec, cpu, None))
                .join()
                .map_err(|_| ExecError::WorkerPanicked)?
        })?;
        Ok(trace.invocation(clock))
    }

    /// Runs both specs in parallel, returning `(A, B)`.
    pub fn duet_invoke(
        &self,
        spec_a: &WorkloadSpec,
        spec_b: &WorkloadSpec,
        plan: CorePlan,
    ) -> Result<(Invocation, Invocation), ExecError> {
        let trace = self.duet_invoke_traced(spec_a, spec_b, plan)?;
        Ok((
            trace.a.invocation(self.duet_clock),
            trace.b.invocation(self.duet_clock),
        ))
    }

    /// [`Executor::duet_invoke`] with the full per-worker trace.
    pub fn duet_invoke_traced(
        &self,
        spec_a: &WorkloadSpec,
        spec_b: &WorkloadSpec,
        plan: CorePlan,
    ) -> Result<DuetTrace, ExecError> {
        let available = self.available_cores();
        if available < 2 {
            return Err(ExecError::InsufficientCores(available));
        }
        plan.validate(available)?;
        let cpu_a = self.cpus[plan.core_a];
        let cpu_b = self.cpus[plan.core_b];
        let _claim = CoreClaim::acquire(&[cpu_a, cpu_b])?;
        run_pair(self, spec_a, spec_b, Some(cpu_a), Some(cpu_b))
    }

    fn cpu_id(&self, core: usize) -> Result<usize, ExecError> {
        self.cpus.get(core).copied().ok_or(ExecError::InvalidCore {
            core,
            available: self.cpus.len(),
        })
    }

    fn worker(
        &self,
        spec: &WorkloadSpec,
        cpu: Option<usize>,
        gate: Option<&StartGate>,
    ) -> Result<WorkerTrace, ExecError> {
        let pinned_to = match self.pin(cpu) {
            Ok(pinned) => pinned,
            Err(e) => {
                if let Some(gate) = gate {
                    gate.abort();
                }
                return Err(e);
            }
        };
        let affinity = pinned_to.and_then(|_| sys::current_thread_affinity());
        if let Some(gate) = gate {
            gate.arrive_and_wait(BARRIER_TIMEOUT).map_err(|e| match e {
                GateError::Timeout | GateError::Aborted => ExecError::BarrierTimeout(BARRIER_TIMEOUT),
            })?;
        }
        let work_started = Instant::now();
        let cpu_start = sys::thread_cpu_ns().map_err(ExecError::Clock)?;
        let result = run_workload(spec);
        let cpu_end = sys::thread_cpu_ns().map_err(ExecError::Clock)?;
        let wall_ns = work_started.elapsed().as_nanos() as u64;
        Ok(WorkerTrace {
            work_started,
            wall_ns,
            cpu_ns: cpu_end.saturating_sub(cpu_start),
            pinned_to,
            affinity,
            result,
        })
    }

    fn pin(&self, cpu: Option<usize>) -> Result<Option<usize>, ExecError> {
        let Some(cpu) = cpu else { return Ok(None) };
        match self.pinning {
            Pinning::Disabled => Ok(None),
            Pinning::Required => sys::pin_current_thread(cpu)
                .map(|()| Some(cpu))
                .map_err(|source| ExecError::AffinityUnsupported { core: cpu, source }),
            Pinning::Preferred => Ok(sys::pin_current_thread(cpu).ok().map(|()| cpu)),
        }
    }
}

/// Spawns two gated workers and coordinates their synchronized start.
/// Kept separate from the core-count check so the rendezvous can be
/// exercised on single-core hosts.
fn run_pair(
    executor: &Executor,
    spec_a: &WorkloadSpec,
    spec_b: &WorkloadSpec,
    cpu_a: Option<usize>,
    cpu_b: Option<usize>,
) -> Result<DuetTrace, ExecError> {
    let gate = StartGate::new(2);
    thread::scope(|s| {
        let wa = s.spawn(|| executor.worker(spec_a, cpu_a, Some(&gate)));
        let wb = s.spawn(|| executor.worker(spec_b, cpu_b, Some(&gate)));
        let released = gate.release_when_ready(BARRIER_TIMEOUT);
        let a = wa.join().map_err(|_| ExecError::WorkerPanicked)?;
        let b = wb.join().map_err(|_| ExecError::WorkerPanicked)?;
        // A worker error (e.g. pinning) explains an aborted gate better than the gate does.
        let (a, b) = (a?, b?);
        let released_at = released.map_err(|_| ExecError::BarrierTimeout(BARRIER_TIMEOUT))?;
        Ok(DuetTrace { released_at, a, b })
    })
}

fn claimed_cores() -> &'static Mutex<HashSet<usize>> {
    static CLAIMED: OnceLock<Mutex<HashSet<usize>>> = OnceLock::new();
    CLAIMED.get_or_init(Default::default)
}

/// Best-effort guard against two executors pinning to the same core at once.
struct CoreClaim(Vec<usize>);

impl CoreClaim {
    fn acquire(cpus: &[usize]) -> Result<CoreClaim, ExecError> {
        let mut claimed = claimed_cores().lock().unwrap_or_else(|e| e.into_inner());
        if let Some(&busy) = cpus.iter().find(|c| claimed.contains(c)) {
            return Err(ExecError::CoreBusy(busy));
        }
        claimed.extend(cpus.iter().copied());
        Ok(CoreClaim(cpus.to_vec()))
    }
}

impl Drop for CoreClaim {
    fn drop(&mut self) {
        let mut claimed = claimed_cores().lock().unwrap_or_else(|e| e.into_inner());
        for cpu in &self.0 {
            claimed.remove(cpu);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{make_workload, WorkloadKind};

    fn sieve(scale: u64) -> WorkloadSpec {
        make_workload(WorkloadKind::MemSieve, scale, "A", 0.0).unwrap()
    }

    fn mutation(scale: u64, label: &str, pct: f64) -> WorkloadSpec {
        make_workload(WorkloadKind::CpuMutation, scale, label, pct).unwrap()
    }

    #[test]
    fn available_cores_is_positive() {
        assert!(available_cores() >= 1);
        assert_eq!(Executor::new().available_cores(), available_cores());
    }

    #[test]
    fn smallest_solo_invocation() {
        let exec = Executor::new();
        let inv = exec
            .solo_invoke(&sieve(2), None, ClockMode::WallClock)
            .unwrap();
        assert!(inv.duration_ns > 0);
        assert_eq!(inv.clock_mode, ClockMode::WallClock);
        assert!(!inv.cold);
        assert_eq!(inv.work.unwrap().units_done, 1);
    }

    #[test]
    fn solo_echoes_requested_clock() {
        let exec = Executor::new().with_pinning(Pinning::Preferred);
        let inv = exec
            .solo_invoke(&mutation(2_000, "A", 0.0), Some(0), ClockMode::CpuTime)
            .unwrap();
        assert_eq!(inv.clock_mode, ClockMode::CpuTime);
        assert!(inv.duration_ns > 0);
    }

    #[test]
    fn solo_rejects_out_of_range_core() {
        let exec = Executor::new();
        let core = exec.available_cores();
        let err = exec
            .solo_invoke(&sieve(10), Some(core), ClockMode::WallClock)
            .unwrap_err();
        assert!(matches!(err, ExecError::InvalidCore { .. }));
    }

    #[test]
    fn repeated_solo_durations_share_magnitude() {
        let exec = Executor::new();
        let spec = mutation(200_000, "A", 0.0);
        // Warm caches and frequency scaling first.
        exec.solo_invoke(&spec, None, ClockMode::CpuTime).unwrap();
        let a = exec.solo_invoke(&spec, None, ClockMode::CpuTime).unwrap().duration_ns as f64;
        let b = exec.solo_invoke(&spec, None, ClockMode::CpuTime).unwrap().duration_ns as f64;
        let ratio = a.max(b) / a.min(b);
        assert!(ratio < 10.0, "durations {a} and {b} differ by more than 10x");
    }

    #[test]
    fn cpu_time_never_exceeds_wall_time() {
        let exec = Executor::new();
        for scale in [1_000, 50_000, 300_000] {
            let spec = mutation(scale, "A", 0.0);
            let trace = thread::scope(|s| s.spawn(|| exec.worker(&spec, None, None)).join().unwrap())
                .unwrap();
            assert!(
                trace.cpu_ns as f64 <= trace.wall_ns as f64 * 1.05,
                "cpu {} > wall {} * 1.05",
                trace.cpu_ns,
                trace.wall_ns
            );
        }
    }

    #[test]
    fn duet_rejects_same_core_plan() {
        let exec = Executor::new();
        let spec = sieve(100);
        let err = exec.duet_invoke(&spec, &spec, CorePlan::new(0, 0)).unwrap_err();
        // On single-core hosts the core check fires first; both are refusals.
        assert!(matches!(
            err,
            ExecError::InvalidPlan { .. } | ExecError::InsufficientCores(_)
        ));
    }

    #[test]
    fn duet_refuses_without_two_cores() {
        let exec = Executor {
            cpus: vec![0],
            pinning: Pinning::Disabled,
            duet_clock: ClockMode::CpuTime,
        };
        let spec = sieve(100);
        let err = exec.duet_invoke(&spec, &spec, CorePlan::default()).unwrap_err();
        assert!(matches!(err, ExecError::InsufficientCores(1)));
    }

    #[test]
    fn gated_pair_starts_after_release_and_keeps_aa_identity() {
        // Unpinned so it also runs on single-core hosts.
        let exec = Executor::new().with_pinning(Pinning::Disabled);
        let a = mutation(20_000, "A", 0.0);
        let b = mutation(20_000, "B", 0.0);
        for _ in 0..20 {
            let trace = run_pair(&exec, &a, &b, None, None).unwrap();
            assert!(trace.a.work_started >= trace.released_at);
            assert!(trace.b.work_started >= trace.released_at);
            assert_eq!(trace.a.result, trace.b.result);
        }
    }

    #[test]
    fn core_claims_are_exclusive() {
        let first = CoreClaim::acquire(&[10_001, 10_002]).unwrap();
        assert!(matches!(
            CoreClaim::acquire(&[10_002]),
            Err(ExecError::CoreBusy(10_002))
        ));
        drop(first);
        CoreClaim::acquire(&[10_002]).unwrap();
    }

    #[test]
    fn live_duet_pins_each_worker_to_its_core() {
        let exec = Executor::new();
        if exec.available_cores() < 2 {
            eprintln!("skipping: host exposes {} core(s)", exec.available_cores());
            return;
        }
        let a = mutation(50_000, "A", 0.0);
        let b = mutation(50_000, "B", 0.0);
        let trace = match exec.duet_invoke_traced(&a, &b, CorePlan::default()) {
            Ok(trace) => trace,
            Err(ExecError::AffinityUnsupported { .. }) => {
                eprintln!("skipping: affinity not settable here");
                return;
            }
            Err(e) => panic!("{e}"),
        };
        assert!(trace.a.work_started >= trace.released_at);
        assert!(trace.b.work_started >= trace.released_at);
        assert_eq!(trace.a.result, trace.b.result);
        assert_eq!(trace.a.affinity, Some(vec![exec.cpus[0]]));
        assert_eq!(trace.b.affinity, Some(vec![exec.cpus[1]]));
    }

    #[test]
    fn live_duet_detects_five_percent_regression() {
        let exec = Executor::new().with_pinning(Pinning::Preferred);
        if exec.available_cores() < 2 {
            eprintln!("skipping: host exposes {} core(s)", exec.available_cores());
            return;
        }
        let a = mutation(200_000, "A", 0.0);
        let b = mutation(200_000, "B", 5.0);
        let mut slower = 0;
        for _ in 0..100 {
            let (ia, ib) = exec.duet_invoke(&a, &b, CorePlan::default()).unwrap();
            assert_eq!(ia.clock_mode, ClockMode::CpuTime);
            if ib.duration_ns > ia.duration_ns {
                slower += 1;
            }
        }
        assert!(slower > 50, "B slower in only {slower}/100 repetitions");
    }

    #[test]
    fn parses_names() {
        assert_eq!("duet".parse::<Strategy>().unwrap(), Strategy::Duet);
        assert_eq!("RMIT".parse::<Strategy>().unwrap(), Strategy::Rmit);
        assert!("other".parse::<Strategy>().is_err());
        assert_eq!("cpu".parse::<ClockMode>().unwrap(), ClockMode::CpuTime);
        assert_eq!(Strategy::Duet.default_clock(), ClockMode::CpuTime);
        assert_eq!(Strategy::Rmit.default_clock(), ClockMode::WallClock);
    }
}
