//! Elapsed-time accounting for the run budget.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::config::ClockKind;

/// Source of elapsed run time.
///
/// `charge_*` is called after every LLM call and execution. The wall clock
/// ignores the charge (real time already passed); the logical clock advances
/// by fixed ticks so that budgets and journal timestamps are reproducible.
pub trait Clock: Send + Sync {
    /// Time spent since the run started, including time before a resume.
    fn elapsed(&self) -> Duration;
    fn charge_llm(&self);
    /// Returns the duration to record for the execution.
    fn charge_exec(&self, measured: Duration, timed_out: bool, limit: Duration) -> Duration;
}

pub struct WallClock {
    start: Instant,
    offset: Duration,
}

impl WallClock {
    pub fn new(offset: Duration) -> Self {
        WallClock { start: Instant::now(), offset }
    }
}

impl Clock for WallClock {
    fn elapsed(&self) -> Duration {
        self.offset + self.start.elapsed()
    }

    fn charge_llm(&self) {}

    fn charge_exec(&self, measured: Duration, _timed_out: bool, _limit: Duration) -> Duration {
        measured
    }
}

/// Deterministic clock: one second per LLM call, one second per execution,
/// the full limit for a timed-out execution.
pub struct LogicalClock {
    now: Mutex<Duration>,
}

pub const LOGICAL_LLM_TICK: Duration = Duration::from_secs(1);
pub const LOGICAL_EXEC_TICK: Duration = Duration::from_secs(1);

impl LogicalClock {
    pub fn new(offset: Duration) -> Self {
        LogicalClock { now: Mutex::new(offset) }
    }

    fn advance(&self, by: Duration) {
        let mut now = self.now.lock().unwrap_or_else(|e| e.into_inner());
        *now += by;
    }
}

impl Clock for LogicalClock {
    fn elapsed(&self) -> Duration {
        *self.now.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn charge_llm(&self) {
        self.advance(LOGICAL_LLM_TICK);
    }

    fn charge_exec(&self, _measured: Duration, timed_out: bool, limit: Duration) -> Duration {
        let tick = if timed_out { limit } else { LOGICAL_EXEC_TICK };
        self.advance(tick);
        tick
    }
}

pub fn make_clock(kind: ClockKind, offset: Duration) -> Box<dyn Clock> {
    match kind {
        ClockKind::Wall => Box::new(WallClock::new(offset)),
        ClockKind::Logical => Box::new(LogicalClock::new(offset)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logical_clock_ticks() {
        let clock = LogicalClock::new(Duration::from_secs(5));
        clock.charge_llm();
        let d = clock.charge_exec(Duration::from_millis(3), false, Duration::from_secs(10));
        assert_eq!(d, LOGICAL_EXEC_TICK);
        clock.charge_exec(Duration::from_secs(99), true, Duration::from_secs(10));
        assert_eq!(clock.elapsed(), Duration::from_secs(5 + 1 + 1 + 10));
    }

    #[test]
    fn wall_clock_includes_offset() {
        let clock = WallClock::new(Duration::from_secs(100));
        assert!(clock.elapsed() >= Duration::from_secs(100));
        let measured = Duration::from_millis(42);
        assert_eq!(clock.charge_exec(measured, false, Duration::ZERO), measured);
    }
}
