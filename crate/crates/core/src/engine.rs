//! Drowsiness scoring and the monitor → detect → alert → continue loop.
//!
//! A score fuses three pieces of evidence, each normalised to `[0, 1]`:
//! heart-rate decline, RMSSD rise and systolic blood-pressure decline,
//! all relative to a reference. The weighted sum is scaled by the
//! circadian multiplier and clamped. [`AlertGate`] adds hysteresis: an alert
//! needs the score above `on_threshold` for `on_dwell_s`, and re-arming needs
//! it below `off_threshold` for `rearm_dwell_s`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::hrv::{circadian_risk, Baseline, HrvFeatures, Provenance, TimeOfDay};
use crate::num::{median, Scalar};
use crate::sensor::Timestamp;

/// Blood-pressure readings older than this no longer count as current.
pub const BP_MAX_AGE_MS: u64 = 180_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EngineMode {
    /// Reference learned from the first minutes of the drive.
    Unsupervised,
    /// Reference taken from a measured resting baseline.
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EngineState {
    Warmup,
    Monitoring,
    Alerting,
}

impl fmt::Display for EngineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineState::Warmup => "WARMUP",
            EngineState::Monitoring => "MONITORING",
            EngineState::Alerting => "ALERTING",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights<T> {
    pub hr: T,
    pub rmssd: T,
    pub bp: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig<T> {
    pub weights: ScoreWeights<T>,
    pub on_threshold: T,
    pub on_dwell_s: T,
    pub off_threshold: T,
    pub rearm_dwell_s: T,
    pub reference_window_s: T,
    pub min_reference_ibi_s: T,
    /// Fractional heart-rate decline mapped linearly onto `[0, 1]`.
    pub hr_drop_band: (T, T),
    /// Fractional systolic decline mapped linearly onto `[0, 1]`.
    pub bp_drop_band: (T, T),
}

impl<T: Scalar> Default for EngineConfig<T> {
    fn default() -> Self {
        Self {
            weights: ScoreWeights {
                hr: T::lit(0.4),
                rmssd: T::lit(0.3),
                bp: T::lit(0.3),
            },
            on_threshold: T::lit(0.7),
            on_dwell_s: T::lit(30.0),
            off_threshold: T::lit(0.5),
            rearm_dwell_s: T::lit(60.0),
            reference_window_s: T::lit(300.0),
            min_reference_ibi_s: T::lit(120.0),
            hr_drop_band: (T::lit(0.05), T::lit(0.15)),
            bp_drop_band: (T::lit(0.05), T::lit(0.16)),
        }
    }
}

fn secs_to_ms<T: Scalar>(s: T) -> u64 {
    (s.as_f64() * 1000.0).round() as u64
}

impl<T: Scalar> EngineConfig<T> {
    pub fn validate(&self) -> Result<(), EngineError> {
        let w = self.weights;
        if [w.hr, w.rmssd, w.bp].iter().any(|x| *x < T::zero()) {
            return Err(EngineError::Config("weights must be non-negative".into()));
        }
        let sum = w.hr + w.rmssd + w.bp;
        if (sum - T::one()).abs() > T::lit(1e-6) {
            return Err(EngineError::Config(format!("weights sum to {sum}, not 1")));
        }
        if self.off_threshold >= self.on_threshold {
            return Err(EngineError::Config(
                "off_threshold must be below on_threshold".into(),
            ));
        }
        for (lo, hi) in [self.hr_drop_band, self.bp_drop_band] {
            if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                return Err(EngineError::Config(format!("empty band [{lo}, {hi}]")));
            }
        }
        let durations = [
            self.on_dwell_s,
            self.rearm_dwell_s,
            self.reference_window_s,
            self.min_reference_ibi_s,
        ];
        if durations.iter().any(|d| d.is_nan() || *d < T::zero()) {
            return Err(EngineError::Config("durations must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents<T> {
    pub hr_drop: T,
    pub rmssd_rise: T,
    pub bp_drop: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrowsinessScore<T> {
    #[serde(rename = "t_ms")]
    pub t: Timestamp,
    pub value: T,
    pub components: ScoreComponents<T>,
    /// Weighted component sum before the circadian multiplier and clamp.
    pub weighted_sum: T,
    pub circadian: T,
}

/// Current readings and their references for one score evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreInputs<T> {
    pub hr_now: T,
    pub hr_ref: T,
    pub rmssd_now: T,
    pub rmssd_ref: T,
    /// Systolic, diastolic (mmHg).
    pub bp_now: Option<(T, T)>,
    pub bp_ref: Option<(T, T)>,
    pub circadian: T,
}

fn band_fraction<T: Scalar>(x: T, (lo, hi): (T, T)) -> T {
    ((x - lo) / (hi - lo)).clamp01()
}

/// Fuses the evidence into a score. When either blood-pressure reading is
/// missing, the blood-pressure weight is spread proportionally over the
/// other two components.
pub fn score_components<T: Scalar>(
    t: Timestamp,
    inputs: &ScoreInputs<T>,
    cfg: &EngineConfig<T>,
) -> DrowsinessScore<T> {
    let hr_drop = band_fraction(
        (inputs.hr_ref - inputs.hr_now) / inputs.hr_ref,
        cfg.hr_drop_band,
    );
    let rmssd_rise = ((inputs.rmssd_now - inputs.rmssd_ref) / inputs.rmssd_ref).clamp01();
    let w = cfg.weights;
    let (bp_drop, weighted_sum) = match (inputs.bp_now, inputs.bp_ref) {
        (Some((sys_now, _)), Some((sys_ref, _))) => {
            let bp_drop = band_fraction((sys_ref - sys_now) / sys_ref, cfg.bp_drop_band);
            (
                bp_drop,
                w.hr * hr_drop + w.rmssd * rmssd_rise + w.bp * bp_drop,
            )
        }
        _ => {
            let rest = w.hr + w.rmssd;
            (T::zero(), (w.hr * hr_drop + w.rmssd * rmssd_rise) / rest)
        }
    };
    DrowsinessScore {
        t,
        value: (inputs.circadian * weighted_sum).clamp01(),
        components: ScoreComponents {
            hr_drop,
            rmssd_rise,
            bp_drop,
        },
        weighted_sum,
        circadian: inputs.circadian,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlertChannel {
    Vibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent<T> {
    pub t: Timestamp,
    pub channel: AlertChannel,
    pub score: DrowsinessScore<T>,
    pub reason: String,
}

/// Flat alert-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertLogLine<T> {
    pub t_ms: u64,
    pub channel: AlertChannel,
    pub value: T,
    pub hr_drop: T,
    pub rmssd_rise: T,
    pub bp_drop: T,
    pub circadian: T,
    pub reason: String,
}

impl<T: Scalar> AlertEvent<T> {
    pub fn log_line(&self) -> AlertLogLine<T> {
        AlertLogLine {
            t_ms: self.t.ms(),
            channel: self.channel,
            value: self.score.value,
            hr_drop: self.score.components.hr_drop,
            rmssd_rise: self.score.components.rmssd_rise,
            bp_drop: self.score.components.bp_drop,
            circadian: self.score.circadian,
            reason: self.reason.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineEvent<T> {
    StateChange {
        t: Timestamp,
        from: EngineState,
        to: EngineState,
    },
    Alert(AlertEvent<T>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("mode error: {0}")]
    Mode(String),
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("input at {t} precedes previous input at {previous}")]
    Order { t: Timestamp, previous: Timestamp },
}

/// Outcome of feeding one score to an [`AlertGate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateEvent {
    /// High streak reached the on-dwell: emit an alert.
    Fire { streak_start: Timestamp },
    /// Low streak reached the re-arm dwell: ready for the next alert.
    Rearm,
}

/// Two-threshold, two-dwell hysteresis.
#[derive(Debug, Clone)]
pub struct AlertGate<T> {
    on_threshold: T,
    off_threshold: T,
    on_dwell_ms: u64,
    rearm_dwell_ms: u64,
    armed: bool,
    high_since: Option<Timestamp>,
    low_since: Option<Timestamp>,
}

impl<T: Scalar> AlertGate<T> {
    pub fn new(cfg: &EngineConfig<T>) -> Self {
        Self {
            on_threshold: cfg.on_threshold,
            off_threshold: cfg.off_threshold,
            on_dwell_ms: secs_to_ms(cfg.on_dwell_s),
            rearm_dwell_ms: secs_to_ms(cfg.rearm_dwell_s),
            armed: true,
            high_since: None,
            low_since: None,
        }
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }

    pub fn observe(&mut self, t: Timestamp, value: T) -> Option<GateEvent> {
        if self.armed {
            if value >= self.on_threshold {
                let since = *self.high_since.get_or_insert(t);
                if t.since(since) >= self.on_dwell_ms {
                    self.armed = false;
                    self.high_since = None;
                    self.low_since = None;
                    return Some(GateEvent::Fire {
                        streak_start: since,
                    });
                }
            } else {
                self.high_since = None;
            }
        } else if value < self.off_threshold {
            let since = *self.low_since.get_or_insert(t);
            if t.since(since) >= self.rearm_dwell_ms {
                self.armed = true;
                self.low_since = None;
                return Some(GateEvent::Rearm);
            }
        } else {
            self.low_since = None;
        }
        None
    }
}

/// Reference levels drowsiness evidence is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference<T> {
    pub hr_bpm: T,
    pub rmssd_ms: T,
    pub bp: Option<(T, T)>,
}

/// Collects warm-up feature windows for the unsupervised reference.
#[derive(Debug, Clone, Default)]
struct ReferenceAccumulator<T> {
    start: Option<Timestamp>,
    hr: Vec<T>,
    rmssd: Vec<T>,
    systolic: Vec<T>,
    diastolic: Vec<T>,
    /// Union of the windows' interval coverage, in ms.
    covered_ms: u64,
    covered_until: Option<Timestamp>,
}

impl<T: Scalar> ReferenceAccumulator<T> {
    fn add(&mut self, f: &HrvFeatures<T>) {
        self.hr.push(f.mean_hr_bpm);
        self.rmssd.push(f.rmssd_ms);
        // a window's intervals span from one mean interval before its first beat
        let span_start = f
            .window_start
            .ms()
            .saturating_sub(f.mean_ibi_ms().as_f64().round() as u64);
        let from = self
            .covered_until
            .map_or(span_start, |c| c.ms().max(span_start));
        self.covered_ms += f.window_end.ms().saturating_sub(from);
        if self.covered_until.is_none_or(|c| f.window_end > c) {
            self.covered_until = Some(f.window_end);
        }
    }

    fn add_bp(&mut self, (sys, dia): (T, T)) {
        self.systolic.push(sys);
        self.diastolic.push(dia);
    }

    fn reference(&self) -> Option<Reference<T>> {
        let bp = median(&self.systolic).zip(median(&self.diastolic));
        Some(Reference {
            hr_bpm: median(&self.hr)?,
            rmssd_ms: median(&self.rmssd)?,
            bp,
        })
    }
}

/// Optional vital-sign readings accompanying a feature window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Vitals<T> {
    /// Systolic, diastolic (mmHg).
    pub bp: Option<(T, T)>,
    /// Logged but excluded from the score.
    pub spo2: Option<T>,
}

/// Single-writer drowsiness engine.
#[derive(Debug, Clone)]
pub struct DrowsinessEngine<T> {
    mode: EngineMode,
    cfg: EngineConfig<T>,
    state: EngineState,
    reference: Option<Reference<T>>,
    accumulator: ReferenceAccumulator<T>,
    gate: AlertGate<T>,
    last_t: Option<Timestamp>,
    latest_bp: Option<(Timestamp, (T, T))>,
    latest_spo2: Option<T>,
    last_score: Option<DrowsinessScore<T>>,
}

impl<T: Scalar> DrowsinessEngine<T> {
    pub fn new(
        mode: EngineMode,
        cfg: EngineConfig<T>,
        baseline: Option<&Baseline<T>>,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        let reference = match mode {
            EngineMode::Calibrated => match baseline {
                Some(b) if b.provenance == Provenance::Measured => Some(Reference {
                    hr_bpm: b.resting_hr_bpm,
                    rmssd_ms: b.resting_rmssd_ms,
                    bp: b.resting_bp,
                }),
                Some(_) => {
                    return Err(EngineError::Mode(
                        "calibrated mode needs a measured baseline, got a population default"
                            .into(),
                    ))
                }
                None => return Err(EngineError::Mode("calibrated mode needs a baseline".into())),
            },
            EngineMode::Unsupervised => None,
        };
        Ok(Self {
            mode,
            gate: AlertGate::new(&cfg),
            cfg,
            state: EngineState::Warmup,
            reference,
            accumulator: ReferenceAccumulator::default(),
            last_t: None,
            latest_bp: None,
            latest_spo2: None,
            last_score: None,
        })
    }

    pub fn state(&self) -> EngineState {
        self.state
    }

    pub fn mode(&self) -> EngineMode {
        self.mode
    }

    pub fn reference(&self) -> Option<&Reference<T>> {
        self.reference.as_ref()
    }

    pub fn last_score(&self) -> Option<&DrowsinessScore<T>> {
        self.last_score.as_ref()
    }

    pub fn latest_spo2(&self) -> Option<T> {
        self.latest_spo2
    }

    fn set_state(&mut self, t: Timestamp, to: EngineState, events: &mut Vec<EngineEvent<T>>) {
        let from = self.state;
        if from != to {
            self.state = to;
            events.push(EngineEvent::StateChange { t, from, to });
        }
    }

    /// Feeds one feature window. Callers only ingest while the wearer drives.
    pub fn ingest(
        &mut self,
        t: Timestamp,
        features: &HrvFeatures<T>,
        vitals: Option<&Vitals<T>>,
        local_time: TimeOfDay,
    ) -> Result<Vec<EngineEvent<T>>, EngineError> {
        if let Some(previous) = self.last_t {
            if t < previous {
                return Err(EngineError::Order { t, previous });
            }
        }
        self.last_t = Some(t);

        if let Some(v) = vitals {
            if let Some(bp) = v.bp {
                self.latest_bp = Some((t, bp));
                if self.state == EngineState::Warmup && self.mode == EngineMode::Unsupervised {
                    self.accumulator.add_bp(bp);
                }
            }
            if v.spo2.is_some() {
                self.latest_spo2 = v.spo2;
            }
        }

        let mut events = Vec::new();
        if self.state == EngineState::Warmup {
            match self.mode {
                EngineMode::Calibrated => self.set_state(t, EngineState::Monitoring, &mut events),
                EngineMode::Unsupervised => {
                    let start = *self.accumulator.start.get_or_insert(t);
                    let window_done = t.since(start) >= secs_to_ms(self.cfg.reference_window_s);
                    let covered =
                        self.accumulator.covered_ms >= secs_to_ms(self.cfg.min_reference_ibi_s);
                    if window_done && covered {
                        self.reference = self.accumulator.reference();
                        self.set_state(t, EngineState::Monitoring, &mut events);
                    } else {
                        self.accumulator.add(features);
                        return Ok(events);
                    }
                }
            }
        }

        let reference = self
            .reference
            .expect("reference is set before leaving warm-up");
        let bp_now = self
            .latest_bp
            .filter(|(at, _)| t.since(*at) <= BP_MAX_AGE_MS)
            .map(|(_, bp)| bp);
        let score = score_components(
            t,
            &ScoreInputs {
                hr_now: features.mean_hr_bpm,
                hr_ref: reference.hr_bpm,
                rmssd_now: features.rmssd_ms,
                rmssd_ref: reference.rmssd_ms,
                bp_now,
                bp_ref: reference.bp,
                circadian: circadian_risk(local_time).multiplier(),
            },
            &self.cfg,
        );
        self.last_score = Some(score);

        match self.gate.observe(t, score.value) {
            Some(GateEvent::Fire { streak_start }) => {
                self.set_state(t, EngineState::Alerting, &mut events);
                events.push(EngineEvent::Alert(AlertEvent {
                    t,
                    channel: AlertChannel::Vibration,
                    score,
                    reason: format!(
                        "score >= {:.2} since t={} ms ({} s)",
                        self.cfg.on_threshold.as_f64(),
                        streak_start.ms(),
                        t.since(streak_start) / 1000
                    ),
                }));
            }
            Some(GateEvent::Rearm) => self.set_state(t, EngineState::Monitoring, &mut events),
            None => {}
        }
        Ok(events)
    }
}
