//! One session run: validation, driving detection, windowed HRV, scoring.
//!
//! Heart-beat intervals are buffered only while the detector says DRIVING,
//! and the engine is frozen otherwise. Cleaning runs over the continuous
//! driving stream; every `stride_s` of driving, the retained intervals of the
//! trailing `window_s` become one feature window for the engine.

use std::collections::VecDeque;

use serde::Serialize;

use crate::driving::{
    DetectorConfig, DrivingDetector, DrivingError, DrivingState, TransitionEvent,
};
use crate::engine::{
    AlertEvent, DrowsinessEngine, EngineConfig, EngineError, EngineEvent, EngineMode, Vitals,
};
use crate::hrv::{hrv_features, Baseline, HrvFeatures, IbiCleaner, IbiSeries, TimeOfDay};
use crate::num::Scalar;
use crate::sensor::{validate_sample, SensorPayload, SensorSample, SessionStream, Timestamp};

/// Cleaned intervals a window needs before it is scored.
pub const MIN_WINDOW_INTERVALS: usize = 10;

#[derive(Debug, Clone)]
pub struct PipelineConfig<T> {
    pub mode: EngineMode,
    pub engine: EngineConfig<T>,
    pub detector: DetectorConfig,
    pub baseline: Option<Baseline<T>>,
    /// Local wall-clock time at t = 0.
    pub start_time: TimeOfDay,
    pub window_s: u64,
    pub stride_s: u64,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            mode: EngineMode::Unsupervised,
            engine: EngineConfig::default(),
            detector: DetectorConfig::default(),
            baseline: None,
            start_time: TimeOfDay::new(2, 0).expect("valid time"),
            window_s: 30,
            stride_s: 5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Driving(#[from] DrivingError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("window_s and stride_s must be positive")]
    Window,
}

/// Feature window as logged, with the score it produced if any.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureRecord<T> {
    pub t_ms: u64,
    #[serde(flatten)]
    pub features: HrvFeatures<T>,
    pub score: Option<T>,
    pub engine_state: crate::engine::EngineState,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunCounts {
    pub samples: usize,
    pub rejected: usize,
    pub transitions: usize,
    pub feature_windows: usize,
    pub alerts: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput<T> {
    pub transitions: Vec<TransitionEvent>,
    pub features: Vec<FeatureRecord<T>>,
    pub alerts: Vec<AlertEvent<T>>,
    pub counts: RunCounts,
}

/// Incremental session processor.
#[derive(Debug)]
pub struct Pipeline<T> {
    cfg: PipelineConfig<T>,
    detector: DrivingDetector,
    engine: DrowsinessEngine<T>,
    cleaner: IbiCleaner<T>,
    beats: VecDeque<(Timestamp, T)>,
    pending: Vitals<T>,
    next_eval: Option<u64>,
    out: RunOutput<T>,
}

impl<T: Scalar> Pipeline<T> {
    pub fn new(cfg: PipelineConfig<T>) -> Result<Self, PipelineError> {
        if cfg.window_s == 0 || cfg.stride_s == 0 {
            return Err(PipelineError::Window);
        }
        Ok(Self {
            detector: DrivingDetector::new(cfg.detector)?,
            engine: DrowsinessEngine::new(cfg.mode, cfg.engine, cfg.baseline.as_ref())?,
            cfg,
            cleaner: IbiCleaner::new(),
            beats: VecDeque::new(),
            pending: Vitals::default(),
            next_eval: None,
            out: RunOutput::default(),
        })
    }

    pub fn engine(&self) -> &DrowsinessEngine<T> {
        &self.engine
    }

    pub fn driving_state(&self) -> DrivingState {
        self.detector.state()
    }

    /// Feeds one sample; returns the alerts it caused.
    pub fn push(&mut self, sample: &SensorSample) -> Result<Vec<AlertEvent<T>>, PipelineError> {
        self.out.counts.samples += 1;
        if validate_sample(*sample).is_err() {
            self.out.counts.rejected += 1;
            return Ok(Vec::new());
        }
        let t = sample.t;
        let mut alerts = Vec::new();

        // windows that closed before this sample see the state they closed in
        if self.detector.state() == DrivingState::Driving {
            alerts.extend(self.evaluate_until(t.ms())?);
        }

        if let Some(ev) = self.detector.update(sample)? {
            if ev.to == DrivingState::Driving {
                let first = t.ms() + self.cfg.window_s * 1000;
                let stride = self.cfg.stride_s * 1000;
                self.next_eval = Some(first.div_ceil(stride) * stride);
            } else {
                self.beats.clear();
                self.cleaner = IbiCleaner::new();
                self.pending = Vitals::default();
                self.next_eval = None;
            }
            self.out.transitions.push(ev);
        }

        if self.detector.state() == DrivingState::Driving {
            match sample.payload {
                SensorPayload::HeartBeat { ibi_ms } => {
                    if self.cleaner.accept(T::lit(ibi_ms)) {
                        self.beats.push_back((t, T::lit(ibi_ms)));
                    }
                }
                SensorPayload::BloodPressure {
                    systolic,
                    diastolic,
                } => self.pending.bp = Some((T::lit(systolic), T::lit(diastolic))),
                SensorPayload::Spo2 { pct } => self.pending.spo2 = Some(T::lit(pct)),
                _ => {}
            }
        }
        self.out.alerts.extend(alerts.iter().cloned());
        Ok(alerts)
    }

    /// Scores every window whose end lies strictly before `now_ms`.
    fn evaluate_until(&mut self, now_ms: u64) -> Result<Vec<AlertEvent<T>>, PipelineError> {
        let mut alerts = Vec::new();
        while let Some(end) = self.next_eval.filter(|e| *e < now_ms) {
            self.next_eval = Some(end + self.cfg.stride_s * 1000);
            let start = end.saturating_sub(self.cfg.window_s * 1000);
            while self.beats.front().is_some_and(|(bt, _)| bt.ms() <= start) {
                self.beats.pop_front();
            }
            let points: Vec<_> = self
                .beats
                .iter()
                .copied()
                .filter(|(bt, _)| bt.ms() <= end)
                .collect();
            if points.len() < MIN_WINDOW_INTERVALS {
                continue;
            }
            let series = IbiSeries::new(points).expect("buffered beats are validated and ordered");
            let features = hrv_features(&series).expect("window has enough intervals");
            let t = Timestamp(end);
            let vitals = std::mem::take(&mut self.pending);
            let vitals = (vitals.bp.is_some() || vitals.spo2.is_some()).then_some(vitals);
            let local = self.cfg.start_time.advanced_by(end);
            let events = self.engine.ingest(t, &features, vitals.as_ref(), local)?;
            for ev in events {
                if let EngineEvent::Alert(a) = ev {
                    alerts.push(a);
                }
            }
            self.out.features.push(FeatureRecord {
                t_ms: end,
                features,
                score: self
                    .engine
                    .last_score()
                    .filter(|s| s.t == t)
                    .map(|s| s.value),
                engine_state: self.engine.state(),
            });
        }
        Ok(alerts)
    }

    pub fn finish(mut self) -> RunOutput<T> {
        self.out.counts.transitions = self.out.transitions.len();
        self.out.counts.feature_windows = self.out.features.len();
        self.out.counts.alerts = self.out.alerts.len();
        self.out
    }
}

/// Runs a whole session through a fresh [`Pipeline`].
pub fn run_session<T: Scalar>(
    stream: &SessionStream,
    cfg: PipelineConfig<T>,
) -> Result<RunOutput<T>, PipelineError> {
    let mut p = Pipeline::new(cfg)?;
    for s in &stream.samples {
        p.push(s)?;
    }
    Ok(p.finish())
}
