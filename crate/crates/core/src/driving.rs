//! Driving detection from GPS speed and pedometer cadence.
//!
//! ```text
//!   IDLE ──(fast ≥ sustain_on, low cadence)──▶ DRIVING
//!   DRIVING ──(slow ≥ sustain_off)──▶ STOPPED
//!   STOPPED ──(fast ≥ sustain_on, low cadence)──▶ DRIVING
//!   STOPPED ──(cadence > max_cadence)──▶ IDLE
//! ```
//!
//! Accelerometer and gyroscope samples are accepted but do not influence
//! transitions.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sensor::{SensorPayload, SensorSample, Timestamp};

/// A gap between location fixes longer than this restarts both sustain timers.
pub const MAX_FIX_GAP_MS: u64 = 3_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DrivingState {
    Idle,
    Driving,
    Stopped,
}

impl fmt::Display for DrivingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DrivingState::Idle => "IDLE",
            DrivingState::Driving => "DRIVING",
            DrivingState::Stopped => "STOPPED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// m/s
    pub speed_on: f64,
    pub sustain_on_s: f64,
    /// m/s
    pub speed_off: f64,
    pub sustain_off_s: f64,
    /// steps/min
    pub max_cadence: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            speed_on: 4.0,
            sustain_on_s: 60.0,
            speed_off: 1.0,
            sustain_off_s: 120.0,
            max_cadence: 10.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DrivingError> {
        let finite = [
            self.speed_on,
            self.sustain_on_s,
            self.speed_off,
            self.sustain_off_s,
            self.max_cadence,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(DrivingError::Config("non-finite parameter".into()));
        }
        if self.speed_off >= self.speed_on {
            return Err(DrivingError::Config(format!(
                "speed_off {} must be below speed_on {}",
                self.speed_off, self.speed_on
            )));
        }
        if self.sustain_on_s <= 0.0 || self.sustain_off_s <= 0.0 {
            return Err(DrivingError::Config(
                "sustain durations must be positive".into(),
            ));
        }
        if self.max_cadence < 0.0 {
            return Err(DrivingError::Config(
                "max_cadence must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn sustain_on_ms(&self) -> u64 {
        (self.sustain_on_s * 1000.0).round() as u64
    }

    fn sustain_off_ms(&self) -> u64 {
        (self.sustain_off_s * 1000.0).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    #[serde(rename = "t_ms")]
    pub t: Timestamp,
    pub from: DrivingState,
    pub to: DrivingState,
    pub trigger: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DrivingError {
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error("sample at {t} precedes previous sample at {previous}")]
    Order { t: Timestamp, previous: Timestamp },
}

/// Single-writer driving state machine.
#[derive(Debug, Clone)]
pub struct DrivingDetector {
    cfg: DetectorConfig,
    state: DrivingState,
    last_t: Option<Timestamp>,
    last_fix: Option<Timestamp>,
    fast_since: Option<Timestamp>,
    slow_since: Option<Timestamp>,
    last_cumulative: BTreeMap<u16, u64>,
    step_deltas: VecDeque<(Timestamp, u64)>,
}

impl DrivingDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self, DrivingError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: DrivingState::Idle,
            last_t: None,
            last_fix: None,
            fast_since: None,
            slow_since: None,
            last_cumulative: BTreeMap::new(),
            step_deltas: VecDeque::new(),
        })
    }

    pub fn state(&self) -> DrivingState {
        self.state
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Steps per minute over the trailing `sustain_on_s` window ending at `now`.
    pub fn cadence(&self, now: Timestamp) -> f64 {
        let window = self.cfg.sustain_on_ms();
        let start = now.ms().saturating_sub(window);
        let steps: u64 = self
            .step_deltas
            .iter()
            .filter(|(t, _)| t.ms() > start && *t <= now)
            .map(|(_, d)| d)
            .sum();
        steps as f64 * 60_000.0 / window as f64
    }

    pub fn update(
        &mut self,
        sample: &SensorSample,
    ) -> Result<Option<TransitionEvent>, DrivingError> {
        let t = sample.t;
        if let Some(previous) = self.last_t {
            if t < previous {
                return Err(DrivingError::Order { t, previous });
            }
        }
        self.last_t = Some(t);

        match sample.payload {
            SensorPayload::StepCount { cumulative } => {
                Ok(self.on_steps(t, sample.source_id, cumulative))
            }
            SensorPayload::Location { speed, .. } => Ok(self.on_fix(t, speed)),
            _ => Ok(None),
        }
    }

    fn on_steps(&mut self, t: Timestamp, source: u16, cumulative: u64) -> Option<TransitionEvent> {
        let delta = match self.last_cumulative.insert(source, cumulative) {
            Some(prev) => cumulative.saturating_sub(prev),
            None => 0,
        };
        if delta > 0 {
            self.step_deltas.push_back((t, delta));
        }
        let horizon = t.ms().saturating_sub(self.cfg.sustain_on_ms());
        while self
            .step_deltas
            .front()
            .is_some_and(|(ts, _)| ts.ms() <= horizon)
        {
            self.step_deltas.pop_front();
        }

        if self.state == DrivingState::Stopped {
            let cadence = self.cadence(t);
            if cadence > self.cfg.max_cadence {
                return Some(self.transition(
                    t,
                    DrivingState::Idle,
                    format!("cadence {cadence:.1} steps/min: wearer walked away"),
                ));
            }
        }
        None
    }

    fn on_fix(&mut self, t: Timestamp, speed: f64) -> Option<TransitionEvent> {
        if self
            .last_fix
            .is_some_and(|prev| t.since(prev) > MAX_FIX_GAP_MS)
        {
            self.fast_since = None;
            self.slow_since = None;
        }
        self.last_fix = Some(t);

        if speed >= self.cfg.speed_on {
            self.fast_since.get_or_insert(t);
        } else {
            self.fast_since = None;
        }
        if speed < self.cfg.speed_off {
            self.slow_since.get_or_insert(t);
        } else {
            self.slow_since = None;
        }

        match self.state {
            DrivingState::Idle | DrivingState::Stopped => {
                let sustained = self
                    .fast_since
                    .is_some_and(|since| t.since(since) >= self.cfg.sustain_on_ms());
                if sustained && self.cadence(t) <= self.cfg.max_cadence {
                    let reason = format!(
                        "speed >= {} m/s for {} s",
                        self.cfg.speed_on, self.cfg.sustain_on_s
                    );
                    return Some(self.transition(t, DrivingState::Driving, reason));
                }
            }
            DrivingState::Driving => {
                let stopped = self
                    .slow_since
                    .is_some_and(|since| t.since(since) >= self.cfg.sustain_off_ms());
                if stopped {
                    let reason = format!(
                        "speed < {} m/s for {} s",
                        self.cfg.speed_off, self.cfg.sustain_off_s
                    );
                    return Some(self.transition(t, DrivingState::Stopped, reason));
                }
            }
        }
        None
    }

    fn transition(&mut self, t: Timestamp, to: DrivingState, trigger: String) -> TransitionEvent {
        let from = self.state;
        debug_assert_ne!(from, to);
        self.state = to;
        self.fast_since = None;
        self.slow_since = None;
        TransitionEvent {
            t,
            from,
            to,
            trigger,
        }
    }
}
