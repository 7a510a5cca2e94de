use std::fmt::Debug;
use std::sync::{Arc, Mutex};
use std::time::Instant;

pub const DEFAULT_SAFETY_FRACTION: f64 = 0.9;

/// Fraction of the budget after which a running trial is cut off.
pub const DEFAULT_HARD_FRACTION: f64 = 0.95;

/// Monotonic seconds since an arbitrary origin.
pub trait Clock: Debug + Send + Sync {
    fn now(&self) -> f64;
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Manually driven clock. Every reading advances it by `tick` seconds, so
/// a search observes time passing without sleeping.
#[derive(Debug)]
pub struct FakeClock {
    t: Mutex<f64>,
    tick: f64,
}

impl FakeClock {
    pub fn new(tick: f64) -> Self {
        FakeClock { t: Mutex::new(0.0), tick }
    }

    pub fn advance(&self, seconds: f64) {
        *self.t.lock().unwrap() += seconds;
    }

    pub fn peek(&self) -> f64 {
        *self.t.lock().unwrap()
    }
}

impl Clock for FakeClock {
    fn now(&self) -> f64 {
        let mut t = self.t.lock().unwrap();
        let now = *t;
        *t += self.tick;
        now
    }
}

#[derive(Debug, Clone)]
pub struct TimeBudget {
    pub total_seconds: f64,
    pub started_at: f64,
    pub safety_fraction: f64,
    pub hard_fraction: f64,
    clock: Arc<dyn Clock>,
}

impl TimeBudget {
    /// Starts a wall-clock budget now.
    pub fn new(total_seconds: f64) -> Self {
        Self::with_clock(total_seconds, Arc::new(SystemClock::new()))
    }

    pub fn with_clock(total_seconds: f64, clock: Arc<dyn Clock>) -> Self {
        let started_at = clock.now();
        TimeBudget {
            total_seconds: total_seconds.max(0.0),
            started_at,
            safety_fraction: DEFAULT_SAFETY_FRACTION,
            hard_fraction: DEFAULT_HARD_FRACTION,
            clock,
        }
    }

    pub fn elapsed(&self) -> f64 {
        (self.clock.now() - self.started_at).max(0.0)
    }

    pub fn remaining(&self) -> f64 {
        (self.total_seconds - self.elapsed()).max(0.0)
    }

    /// Whether a new trial may start.
    pub fn may_schedule(&self) -> bool {
        self.elapsed() <= self.safety_fraction * self.total_seconds
    }

    /// Whether running trials must stop.
    pub fn hard_exceeded(&self) -> bool {
        self.elapsed() > self.hard_fraction * self.total_seconds
    }

    /// A budget carved out of this one: same clock, starting now, capped at
    /// `fraction` of what remains.
    pub fn sub_budget(&self, fraction: f64) -> TimeBudget {
        let mut b = TimeBudget::with_clock(self.remaining() * fraction, Arc::clone(&self.clock));
        b.safety_fraction = self.safety_fraction;
        b.hard_fraction = self.hard_fraction;
        b
    }
}
