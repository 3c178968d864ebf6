use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Monotonic time source; injectable so tests can run rate limiting and
/// backoff without real sleeps.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// A clock that only moves when slept on.
#[derive(Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
    slept: Mutex<Vec<Duration>>,
}

impl ManualClock {
    /// Every sleep requested so far, in order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().expect("clock lock").clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock lock")
    }

    fn sleep(&self, d: Duration) {
        *self.now.lock().expect("clock lock") += d;
        self.slept.lock().expect("clock lock").push(d);
    }
}

/// At most `per_minute` acquisitions in any trailing 60-second window.
pub struct RateLimiter {
    per_minute: usize,
    sent: Mutex<VecDeque<Duration>>,
}

const WINDOW: Duration = Duration::from_secs(60);

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        RateLimiter {
            per_minute: per_minute.max(1) as usize,
            sent: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks (on `clock`) until a request may go out, then records it.
    /// The lock is held while waiting so concurrent callers queue in turn.
    pub fn acquire(&self, clock: &dyn Clock) {
        let mut sent = self.sent.lock().expect("limiter lock");
        loop {
            let now = clock.now();
            while sent.front().is_some_and(|t| now.saturating_sub(*t) >= WINDOW) {
                sent.pop_front();
            }
            if sent.len() < self.per_minute {
                sent.push_back(now);
                return;
            }
            let wait = WINDOW - now.saturating_sub(*sent.front().expect("non-empty"));
            clock.sleep(wait);
        }
    }
}
