//! Heart-rate variability analytics.
//!
//! Inter-beat intervals (IBIs) become time-domain HRV features, a stress
//! index, a coarse rhythm screen, a circadian risk weight and a personal
//! resting baseline. Everything here is generic over [`Scalar`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::num::Scalar;
use crate::sensor::{DriverProfile, Timestamp};

/// IBIs outside this band are treated as artifacts by [`clean_ibi`].
pub const CLEAN_MIN_IBI_MS: f64 = 300.0;
pub const CLEAN_MAX_IBI_MS: f64 = 2000.0;
/// Maximum relative jump from the previously retained IBI.
pub const CLEAN_MAX_JUMP: f64 = 0.20;

pub const MAX_IBI_MS: f64 = 5000.0;
/// Successive-difference threshold for pNN50, compared strictly.
pub const NN50_MS: f64 = 50.0;

pub const RHYTHM_MIN_INTERVALS: usize = 30;
pub const RHYTHM_CV_THRESHOLD: f64 = 0.12;
pub const RHYTHM_PNN50_THRESHOLD: f64 = 0.6;

pub const DEFAULT_RESTING_RMSSD_MS: f64 = 42.0;
pub const DEFAULT_RESTING_SDNN_MS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HrvError {
    #[error("need at least {needed} intervals, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("interval {ibi_ms} ms at {t} outside (0, 5000] ms")]
    InvalidInterval { t: Timestamp, ibi_ms: f64 },
    #[error("interval at {t} precedes the previous one")]
    OutOfOrder { t: Timestamp },
    #[error("invalid time of day: {0}")]
    InvalidTime(String),
}

/// Time-ordered inter-beat intervals; each entry is stamped at the beat that
/// ends the interval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IbiSeries<T> {
    points: Vec<(Timestamp, T)>,
}

impl<T: Scalar> IbiSeries<T> {
    pub fn new(points: Vec<(Timestamp, T)>) -> Result<Self, HrvError> {
        let max = T::lit(MAX_IBI_MS);
        for (i, &(t, ibi)) in points.iter().enumerate() {
            if !(ibi > T::zero() && ibi <= max) {
                return Err(HrvError::InvalidInterval {
                    t,
                    ibi_ms: ibi.as_f64(),
                });
            }
            if i > 0 && t < points[i - 1].0 {
                return Err(HrvError::OutOfOrder { t });
            }
        }
        Ok(Self { points })
    }

    /// Series from bare intervals, stamped cumulatively from zero.
    pub fn from_intervals(ibis: &[T]) -> Result<Self, HrvError> {
        let mut t = 0u64;
        let points = ibis
            .iter()
            .map(|&ibi| {
                t += ibi.to_u64().unwrap_or(0);
                (Timestamp(t), ibi)
            })
            .collect();
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(Timestamp, T)] {
        &self.points
    }

    pub fn intervals(&self) -> impl Iterator<Item = T> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// Sum of all intervals in milliseconds.
    pub fn coverage_ms(&self) -> T {
        self.intervals().fold(T::zero(), |a, b| a + b)
    }
}

/// Time-domain HRV over one window of intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvFeatures<T> {
    pub window_start: Timestamp,
    pub window_end: Timestamp,
    pub n_intervals: usize,
    pub mean_hr_bpm: T,
    /// Population standard deviation of the intervals.
    pub sdnn_ms: T,
    pub rmssd_ms: T,
    /// Fraction of successive differences strictly above 50 ms.
    pub pnn50: T,
}

impl<T: Scalar> HrvFeatures<T> {
    pub fn mean_ibi_ms(&self) -> T {
        T::lit(60_000.0) / self.mean_hr_bpm
    }

    /// Total interval time the window covers.
    pub fn coverage_ms(&self) -> T {
        self.mean_ibi_ms() * T::from_count(self.n_intervals)
    }
}

/// One-pass accumulator behind [`hrv_features`].
///
/// Moments are kept relative to the first interval so integer-valued input
/// reproduces exact results and long windows do not lose precision.
#[derive(Debug, Clone)]
pub struct HrvAccumulator<T> {
    n: usize,
    shift: T,
    sum: T,
    sum_sq: T,
    prev: Option<T>,
    sum_sq_diff: T,
    nn50: usize,
    first_t: Timestamp,
    last_t: Timestamp,
}

impl<T: Scalar> Default for HrvAccumulator<T> {
    fn default() -> Self {
        Self {
            n: 0,
            shift: T::zero(),
            sum: T::zero(),
            sum_sq: T::zero(),
            prev: None,
            sum_sq_diff: T::zero(),
            nn50: 0,
            first_t: Timestamp::ZERO,
            last_t: Timestamp::ZERO,
        }
    }
}

impl<T: Scalar> HrvAccumulator<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn push(&mut self, t: Timestamp, ibi: T) {
        if self.n == 0 {
            self.shift = ibi;
            self.first_t = t;
        }
        let d = ibi - self.shift;
        self.sum = self.sum + d;
        self.sum_sq = self.sum_sq + d * d;
        if let Some(prev) = self.prev {
            let diff = ibi - prev;
            self.sum_sq_diff = self.sum_sq_diff + diff * diff;
            if diff.abs() > T::lit(NN50_MS) {
                self.nn50 += 1;
            }
        }
        self.prev = Some(ibi);
        self.last_t = t;
        self.n += 1;
    }

    pub fn features(&self) -> Result<HrvFeatures<T>, HrvError> {
        if self.n < 2 {
            return Err(HrvError::InsufficientData {
                needed: 2,
                have: self.n,
            });
        }
        let n = T::from_count(self.n);
        let mean_d = self.sum / n;
        let mean = self.shift + mean_d;
        let var = (self.sum_sq / n - mean_d * mean_d).max(T::zero());
        let diffs = T::from_count(self.n - 1);
        Ok(HrvFeatures {
            window_start: self.first_t,
            window_end: self.last_t,
            n_intervals: self.n,
            mean_hr_bpm: T::lit(60_000.0) / mean,
            sdnn_ms: var.sqrt(),
            rmssd_ms: (self.sum_sq_diff / diffs).sqrt(),
            pnn50: T::from_count(self.nn50) / diffs,
        })
    }
}

/// HRV features of an (already cleaned) series.
pub fn hrv_features<T: Scalar>(series: &IbiSeries<T>) -> Result<HrvFeatures<T>, HrvError> {
    let mut acc = HrvAccumulator::new();
    for &(t, ibi) in series.points() {
        acc.push(t, ibi);
    }
    acc.features()
}

/// Streaming form of [`clean_ibi`]: feed intervals in order, keep those it accepts.
#[derive(Debug, Clone, Default)]
pub struct IbiCleaner<T> {
    last_kept: Option<T>,
}

impl<T: Scalar> IbiCleaner<T> {
    pub fn new() -> Self {
        Self { last_kept: None }
    }

    pub fn accept(&mut self, ibi: T) -> bool {
        if ibi < T::lit(CLEAN_MIN_IBI_MS) || ibi > T::lit(CLEAN_MAX_IBI_MS) {
            return false;
        }
        if let Some(prev) = self.last_kept {
            if (ibi - prev).abs() > T::lit(CLEAN_MAX_JUMP) * prev {
                return false;
            }
        }
        self.last_kept = Some(ibi);
        true
    }
}

/// Artifact rejection for PPG-derived intervals.
///
/// Drops intervals outside 300–2000 ms, then any interval differing from the
/// previously retained one by more than 20%. The first in-range interval is
/// always kept. Idempotent.
pub fn clean_ibi<T: Scalar>(series: &IbiSeries<T>) -> IbiSeries<T> {
    let mut cleaner = IbiCleaner::new();
    let points = series
        .points()
        .iter()
        .copied()
        .filter(|&(_, ibi)| cleaner.accept(ibi))
        .collect();
    IbiSeries { points }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Measured,
    PopulationDefault,
}

/// Personal resting reference used to judge deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline<T> {
    #[serde(rename = "resting_hr")]
    pub resting_hr_bpm: T,
    #[serde(rename = "resting_rmssd")]
    pub resting_rmssd_ms: T,
    #[serde(rename = "resting_sdnn")]
    pub resting_sdnn_ms: T,
    /// Systolic and diastolic, mmHg.
    pub resting_bp: Option<(T, T)>,
    pub provenance: Provenance,
}

/// Builds a baseline from resting measurements, or from population
/// defaults adjusted for gender and fitness when none are available.
pub fn personalize<T: Scalar>(
    profile: &DriverProfile,
    resting: Option<&HrvFeatures<T>>,
    resting_bp: Option<(T, T)>,
) -> Baseline<T> {
    match resting {
        Some(f) => Baseline {
            resting_hr_bpm: f.mean_hr_bpm,
            resting_rmssd_ms: f.rmssd_ms,
            resting_sdnn_ms: f.sdnn_ms,
            resting_bp,
            provenance: Provenance::Measured,
        },
        None => Baseline {
            resting_hr_bpm: T::lit(profile.population_resting_hr()),
            resting_rmssd_ms: T::lit(DEFAULT_RESTING_RMSSD_MS),
            resting_sdnn_ms: T::lit(DEFAULT_RESTING_SDNN_MS),
            resting_bp,
            provenance: Provenance::PopulationDefault,
        },
    }
}

/// Stress on a 0–100 scale: lower variability than at rest means more stress.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StressIndex<T>(T);

impl<T: Scalar> StressIndex<T> {
    pub fn value(self) -> T {
        self.0
    }
}

/// `100 · clamp((resting_rmssd − rmssd) / resting_rmssd, 0, 1)`.
pub fn stress_index<T: Scalar>(
    features: &HrvFeatures<T>,
    baseline: &Baseline<T>,
) -> StressIndex<T> {
    let rest = baseline.resting_rmssd_ms;
    let rel = ((rest - features.rmssd_ms) / rest).clamp01();
    StressIndex(T::lit(100.0) * rel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RhythmClass {
    Sinus,
    Irregular,
}

/// Heuristic regularity screen, not a diagnostic AF detector: irregular
/// when the coefficient of variation exceeds 0.12 and pNN50 exceeds 0.6.
pub fn classify_rhythm<T: Scalar>(series: &IbiSeries<T>) -> Result<RhythmClass, HrvError> {
    if series.len() < RHYTHM_MIN_INTERVALS {
        return Err(HrvError::InsufficientData {
            needed: RHYTHM_MIN_INTERVALS,
            have: series.len(),
        });
    }
    let f = hrv_features(series)?;
    let cv = f.sdnn_ms / f.mean_ibi_ms();
    Ok(
        if cv > T::lit(RHYTHM_CV_THRESHOLD) && f.pnn50 > T::lit(RHYTHM_PNN50_THRESHOLD) {
            RhythmClass::Irregular
        } else {
            RhythmClass::Sinus
        },
    )
}

/// Local wall-clock time, minute resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeOfDay {
    minutes: u16,
}

impl TimeOfDay {
    pub fn new(hour: u8, minute: u8) -> Result<Self, HrvError> {
        if hour > 23 || minute > 59 {
            return Err(HrvError::InvalidTime(format!("{hour}:{minute}")));
        }
        Ok(Self {
            minutes: u16::from(hour) * 60 + u16::from(minute),
        })
    }

    pub fn hour(self) -> u8 {
        (self.minutes / 60) as u8
    }

    pub fn minute(self) -> u8 {
        (self.minutes % 60) as u8
    }

    pub fn minutes_since_midnight(self) -> u16 {
        self.minutes
    }

    /// The wall-clock time `offset_ms` later, wrapping at midnight.
    pub fn advanced_by(self, offset_ms: u64) -> Self {
        let m = (u64::from(self.minutes) + offset_ms / 60_000) % 1440;
        Self { minutes: m as u16 }
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.hour(), self.minute())
    }
}

impl FromStr for TimeOfDay {
    type Err = HrvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HrvError::InvalidTime(s.to_string());
        let (h, m) = s.split_once(':').ok_or_else(bad)?;
        let h: u8 = h.parse().map_err(|_| bad())?;
        let m: u8 = m.parse().map_err(|_| bad())?;
        Self::new(h, m)
    }
}

/// Time-of-day multiplier on drowsiness evidence.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CircadianRisk<T>(T);

impl<T: Scalar> CircadianRisk<T> {
    pub fn multiplier(self) -> T {
        self.0
    }
}

/// 1.5 in [02:00, 06:00), 1.2 in [14:00, 16:00), 1.0 otherwise.
pub fn circadian_risk<T: Scalar>(local: TimeOfDay) -> CircadianRisk<T> {
    let m = local.minutes;
    let mult = if (120..360).contains(&m) {
        1.5
    } else if (840..960).contains(&m) {
        1.2
    } else {
        1.0
    };
    CircadianRisk(T::lit(mult))
}
