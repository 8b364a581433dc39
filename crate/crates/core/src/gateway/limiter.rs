use std::sync::Mutex;
use std::time::Duration;

use crate::clock::Pacer;

/// Token bucket refilled continuously at `rate` tokens per second.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    rate: f64,
    state: Mutex<Option<(f64, Duration)>>,
}

impl TokenBucket {
    /// Bucket for `rpm` requests per minute, with a burst of five seconds' worth (at least one).
    pub fn per_minute(rpm: u32) -> Self {
        let rpm = rpm.max(1) as f64;
        Self {
            capacity: (rpm / 12.0).max(1.0),
            rate: rpm / 60.0,
            state: Mutex::new(None),
        }
    }

    /// Take one token, sleeping on `pacer` until one is available. Returns the time waited.
    pub fn acquire(&self, pacer: &dyn Pacer) -> Duration {
        let mut waited = Duration::ZERO;
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = pacer.elapsed();
                let (tokens, last) = state.unwrap_or((self.capacity, now));
                let refilled = (tokens + now.saturating_sub(last).as_secs_f64() * self.rate).min(self.capacity);
                if refilled >= 1.0 {
                    *state = Some((refilled - 1.0, now));
                    return waited;
                }
                *state = Some((refilled, now));
                Duration::from_secs_f64((1.0 - refilled) / self.rate)
            };
            pacer.sleep(wait);
            waited += wait;
        }
    }
}
