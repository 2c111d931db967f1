use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Token bucket shared by every outbound request of a client.
///
/// The bucket holds at most `burst` tokens and refills at `rate` tokens per
/// second; [`acquire`](Self::acquire) blocks until a token is available. The
/// lock is held while waiting, so concurrent callers are served one at a time.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    burst: f64,
    bucket: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Instant,
}

impl RateLimiter {
    pub fn new(rate_per_sec: f64) -> Result<Self> {
        Self::with_burst(rate_per_sec, 1)
    }

    pub fn with_burst(rate_per_sec: f64, burst: u32) -> Result<Self> {
        if !(rate_per_sec.is_finite() && rate_per_sec > 0.0) {
            return Err(Error::validation(
                "rate_limit_rps",
                format!("{rate_per_sec} is not a positive rate"),
            ));
        }
        if burst == 0 {
            return Err(Error::validation("burst", "must be at least 1"));
        }
        Ok(Self {
            rate: rate_per_sec,
            burst: burst as f64,
            bucket: Mutex::new(Bucket {
                tokens: burst as f64,
                last: Instant::now(),
            }),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn acquire(&self) {
        let mut bucket = self.bucket.lock().unwrap();
        loop {
            let now = Instant::now();
            let elapsed = now.duration_since(bucket.last).as_secs_f64();
            bucket.tokens = (bucket.tokens + elapsed * self.rate).min(self.burst);
            bucket.last = now;
            if bucket.tokens >= 1.0 {
                bucket.tokens -= 1.0;
                return;
            }
            let wait = (1.0 - bucket.tokens) / self.rate;
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}
