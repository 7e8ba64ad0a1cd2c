//! Request pacing shared by every caller of one gateway.

use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Admits at most one request per `60 / rpm` seconds. Slots are handed out
/// in the order callers reach the lock, so waiting is first come, first
/// served and no admission is lost.
#[derive(Debug)]
pub struct Throttle {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl Throttle {
    pub fn new(requests_per_minute: u32) -> Self {
        let rpm = requests_per_minute.max(1);
        Self {
            interval: Duration::from_secs(60) / rpm,
            next_slot: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Blocks until the caller's slot arrives and returns the admission time.
    pub fn acquire(&self) -> Instant {
        let slot = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
        slot
    }
}
