use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Retry budgets and backoff schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub transport_retries: u32,
    pub structure_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            transport_retries: 3,
            structure_retries: 2,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Default budgets without any waiting; used with local mocks.
    pub fn immediate() -> Self {
        RetryPolicy {
            base_delay_ms: 0,
            max_delay_ms: 0,
            jitter: false,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`
    /// capped at `max_delay_ms`, scaled into `[d/2, d]` when jitter is on.
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.saturating_sub(1).min(32));
        let capped = exp.min(self.max_delay_ms);
        let ms = if self.jitter && capped > 1 {
            rand::rng().random_range(capped / 2..=capped)
        } else {
            capped
        };
        Duration::from_millis(ms)
    }

    pub(crate) fn sleep(&self, attempt: u32) {
        let d = self.delay(attempt);
        if !d.is_zero() {
            std::thread::sleep(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_with_cap() {
        let p = RetryPolicy {
            jitter: false,
            base_delay_ms: 100,
            max_delay_ms: 1000,
            ..RetryPolicy::default()
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(3), Duration::from_millis(400));
        assert_eq!(p.delay(10), Duration::from_millis(1000));
    }

    #[test]
    fn jitter_stays_in_range() {
        let p = RetryPolicy::default();
        for _ in 0..50 {
            let d = p.delay(2).as_millis() as u64;
            assert!((500..=1000).contains(&d));
        }
    }
}
