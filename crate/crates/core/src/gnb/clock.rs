use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Scenario time held in whole microseconds so repeated advances never drift.
/// Cloning shares the underlying counter; one driver advances it and any
/// number of readers observe it.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    micros: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_s(&self) -> f64 {
        self.micros.load(Ordering::Acquire) as f64 / 1e6
    }

    pub fn now_micros(&self) -> u64 {
        self.micros.load(Ordering::Acquire)
    }

    pub fn advance_s(&self, dt_s: f64) -> f64 {
        let dt = (dt_s.max(0.0) * 1e6).round() as u64;
        let now = self.micros.fetch_add(dt, Ordering::AcqRel) + dt;
        now as f64 / 1e6
    }

    pub fn set_micros(&self, micros: u64) {
        self.micros.store(micros, Ordering::Release);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Real,
    Virtual,
}

#[derive(Debug, Clone)]
pub enum ScenarioClock {
    Real(Instant),
    Virtual(VirtualClock),
}

impl ScenarioClock {
    pub fn new(mode: ClockMode) -> Self {
        match mode {
            ClockMode::Real => ScenarioClock::Real(Instant::now()),
            ClockMode::Virtual => ScenarioClock::Virtual(VirtualClock::new()),
        }
    }

    pub fn mode(&self) -> ClockMode {
        match self {
            ScenarioClock::Real(_) => ClockMode::Real,
            ScenarioClock::Virtual(_) => ClockMode::Virtual,
        }
    }

    pub fn now_s(&self) -> f64 {
        match self {
            ScenarioClock::Real(start) => start.elapsed().as_secs_f64(),
            ScenarioClock::Virtual(clock) => clock.now_s(),
        }
    }
}
