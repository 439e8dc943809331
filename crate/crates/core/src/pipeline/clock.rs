use std::sync::atomic::{AtomicI64, Ordering};

use crate::schema::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp::now()
    }
}

/// Starts at a fixed instant and advances by `step_micros` on every reading.
#[derive(Debug)]
pub struct StepClock {
    next: AtomicI64,
    step_micros: i64,
}

impl StepClock {
    pub fn new(start_micros: i64, step_micros: i64) -> Self {
        StepClock { next: AtomicI64::new(start_micros), step_micros }
    }
}

impl Clock for StepClock {
    fn now(&self) -> Timestamp {
        Timestamp::from_unix_micros(self.next.fetch_add(self.step_micros, Ordering::SeqCst))
    }
}
