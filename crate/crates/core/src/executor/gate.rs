//! Two-phase ready/go rendezvous owned by the coordinator.

use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

#[derive(Debug)]
struct GateState {
    ready: usize,
    released_at: Option<Instant>,
    aborted: bool,
}

#[derive(Debug)]
pub(crate) struct StartGate {
    parties: usize,
    state: Mutex<GateState>,
    cv: Condvar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GateError {
    Timeout,
    Aborted,
}

impl StartGate {
    pub fn new(parties: usize) -> Self {
        StartGate {
            parties,
            state: Mutex::new(GateState {
                ready: 0,
                released_at: None,
                aborted: false,
            }),
            cv: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, GateState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Worker side: signal readiness, then block until released.
    pub fn arrive_and_wait(&self, timeout: Duration) -> Result<(), GateError> {
        let mut state = self.lock();
        state.ready += 1;
        self.cv.notify_all();
        let (state, _) = self
            .cv
            .wait_timeout_while(state, timeout, |s| s.released_at.is_none() && !s.aborted)
            .unwrap_or_else(|e| e.into_inner());
        if state.aborted {
            Err(GateError::Aborted)
        } else if state.released_at.is_none() {
            Err(GateError::Timeout)
        } else {
            Ok(())
        }
    }

    /// Coordinator side: wait until every worker is ready, then release all of
    /// them at once. Returns the release timestamp, taken before any worker
    /// can observe the release.
    pub fn release_when_ready(&self, timeout: Duration) -> Result<Instant, GateError> {
        let state = self.lock();
        let (mut state, _) = self
            .cv
            .wait_timeout_while(state, timeout, |s| s.ready < self.parties && !s.aborted)
            .unwrap_or_else(|e| e.into_inner());
        if state.aborted {
            return Err(GateError::Aborted);
        }
        if state.ready < self.parties {
            state.aborted = true;
            self.cv.notify_all();
            return Err(GateError::Timeout);
        }
        let now = Instant::now();
        state.released_at = Some(now);
        self.cv.notify_all();
        Ok(now)
    }

    /// Wakes everybody with an error; used when a worker fails before arriving.
    pub fn abort(&self) {
        let mut state = self.lock();
        state.aborted = true;
        self.cv.notify_all();
    }
}
