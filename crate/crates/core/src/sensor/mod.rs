//! Sensor data taxonomy, range validation, replay ingestion and synthetic
//! session generation.
//!
//! Every reading the watch produces is a [`SensorSample`]: a timestamp, the
//! id of the device that produced it and one of eight payload kinds. Replay
//! files carry one sample per line as JSON (see [`replay`]).

mod merge;
pub mod replay;
pub mod synth;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use merge::merge_streams;
pub use replay::{load_replay, parse_replay, read_labels, write_labels, write_replay};
pub use synth::{
    synthesize_activity, synthesize_session, ActivityKind, ActivityLabel, ActivityTrace,
};
pub use validate::{validate_sample, AllowedRange, ValidatedSample};

/// Milliseconds since the session epoch.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_secs(s: u64) -> Self {
        Timestamp(s * 1000)
    }

    pub fn ms(self) -> u64 {
        self.0
    }

    /// Milliseconds elapsed since `earlier`, saturating at zero.
    pub fn since(self, earlier: Timestamp) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// The eight reading kinds a watch session carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SensorKind {
    Accel,
    Gyro,
    HeartRate,
    HeartBeat,
    StepCount,
    Location,
    BloodPressure,
    Spo2,
}

impl SensorKind {
    pub const ALL: [SensorKind; 8] = [
        SensorKind::Accel,
        SensorKind::Gyro,
        SensorKind::HeartRate,
        SensorKind::HeartBeat,
        SensorKind::StepCount,
        SensorKind::Location,
        SensorKind::BloodPressure,
        SensorKind::Spo2,
    ];

    /// Kind tag used in replay files.
    pub fn tag(self) -> &'static str {
        match self {
            SensorKind::Accel => "accel",
            SensorKind::Gyro => "gyro",
            SensorKind::HeartRate => "hr",
            SensorKind::HeartBeat => "beat",
            SensorKind::StepCount => "steps",
            SensorKind::Location => "loc",
            SensorKind::BloodPressure => "bp",
            SensorKind::Spo2 => "spo2",
        }
    }

    /// One-byte code used on the link wire (1..=8).
    pub fn code(self) -> u8 {
        match self {
            SensorKind::Accel => 1,
            SensorKind::Gyro => 2,
            SensorKind::HeartRate => 3,
            SensorKind::HeartBeat => 4,
            SensorKind::StepCount => 5,
            SensorKind::Location => 6,
            SensorKind::BloodPressure => 7,
            SensorKind::Spo2 => 8,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Reading payload. Units: m/s² for acceleration, rad/s for angular
/// velocity, beats/min, milliseconds, steps, degrees and m/s, mmHg, percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SensorPayload {
    #[serde(rename = "accel")]
    Accel { x: f64, y: f64, z: f64 },
    #[serde(rename = "gyro")]
    Gyro { wx: f64, wy: f64, wz: f64 },
    #[serde(rename = "hr")]
    HeartRate { bpm: f64 },
    /// Inter-beat interval ending at the sample timestamp.
    #[serde(rename = "beat")]
    HeartBeat { ibi_ms: f64 },
    #[serde(rename = "steps")]
    StepCount { cumulative: u64 },
    #[serde(rename = "loc")]
    Location { lat: f64, lon: f64, speed: f64 },
    #[serde(rename = "bp")]
    BloodPressure { systolic: f64, diastolic: f64 },
    #[serde(rename = "spo2")]
    Spo2 { pct: f64 },
}

impl SensorPayload {
    pub fn kind(&self) -> SensorKind {
        match self {
            SensorPayload::Accel { .. } => SensorKind::Accel,
            SensorPayload::Gyro { .. } => SensorKind::Gyro,
            SensorPayload::HeartRate { .. } => SensorKind::HeartRate,
            SensorPayload::HeartBeat { .. } => SensorKind::HeartBeat,
            SensorPayload::StepCount { .. } => SensorKind::StepCount,
            SensorPayload::Location { .. } => SensorKind::Location,
            SensorPayload::BloodPressure { .. } => SensorKind::BloodPressure,
            SensorPayload::Spo2 { .. } => SensorKind::Spo2,
        }
    }
}

/// One timestamped reading. Serializes to a single replay-file line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    #[serde(rename = "t_ms")]
    pub t: Timestamp,
    #[serde(rename = "src")]
    pub source_id: u16,
    #[serde(flatten)]
    pub payload: SensorPayload,
}

impl SensorSample {
    pub fn new(t: Timestamp, source_id: u16, payload: SensorPayload) -> Self {
        Self {
            t,
            source_id,
            payload,
        }
    }

    pub fn kind(&self) -> SensorKind {
        self.payload.kind()
    }

    /// The replay-file line for this sample (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("sensor samples always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gender {
    Female,
    Male,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fitness {
    Sedentary,
    Active,
    Athlete,
}

/// Who is wearing the watch. Drives population defaults for the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DriverProfile {
    age_years: u8,
    pub gender: Gender,
    pub fitness: Fitness,
}

impl DriverProfile {
    pub const MIN_AGE: u8 = 16;
    pub const MAX_AGE: u8 = 120;

    pub fn new(age_years: u8, gender: Gender, fitness: Fitness) -> Result<Self, SensorError> {
        if !(Self::MIN_AGE..=Self::MAX_AGE).contains(&age_years) {
            return Err(SensorError::InvalidProfile(format!(
                "age {age_years} outside {}..={}",
                Self::MIN_AGE,
                Self::MAX_AGE
            )));
        }
        Ok(Self {
            age_years,
            gender,
            fitness,
        })
    }

    pub fn age_years(&self) -> u8 {
        self.age_years
    }

    /// Population resting heart rate for this profile, in beats/min.
    ///
    /// 72 (female), 68 (male), 70 (unspecified); athletes 8 bpm lower,
    /// active people 4 bpm lower.
    pub fn population_resting_hr(&self) -> f64 {
        let base = match self.gender {
            Gender::Female => 72.0,
            Gender::Male => 68.0,
            Gender::Unspecified => 70.0,
        };
        let offset = match self.fitness {
            Fitness::Sedentary => 0.0,
            Fitness::Active => 4.0,
            Fitness::Athlete => 8.0,
        };
        base - offset
    }
}

impl Default for DriverProfile {
    fn default() -> Self {
        Self {
            age_years: 40,
            gender: Gender::Unspecified,
            fitness: Fitness::Sedentary,
        }
    }
}

/// Ground-truth alertness label attached to synthetic sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Alert,
    Drowsy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPoint {
    pub t_ms: u64,
    pub label: Label,
}

/// A time-ordered sequence of samples, optionally with ground-truth labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionStream {
    pub samples: Vec<SensorSample>,
    pub labels: Option<Vec<LabelPoint>>,
}

impl SessionStream {
    pub fn new(samples: Vec<SensorSample>) -> Self {
        Self {
            samples,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_time_ordered(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].t <= w[1].t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioKind {
    AlertDrive,
    DrowsyOnset { onset_s: u32 },
    StopAndGo,
}

/// Recipe for a synthetic session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub duration_s: u32,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64, duration_s: u32) -> Result<Self, SensorError> {
        let s = Self {
            kind,
            seed,
            duration_s,
        };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), SensorError> {
        if self.duration_s == 0 {
            return Err(SensorError::InvalidScenario(
                "duration must be positive".into(),
            ));
        }
        if let ScenarioKind::DrowsyOnset { onset_s } = self.kind {
            if onset_s >= self.duration_s {
                return Err(SensorError::InvalidScenario(format!(
                    "onset {onset_s}s must precede end of session at {}s",
                    self.duration_s
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SensorError {
    #[error("{field} = {value} outside allowed range {allowed}")]
    Range {
        field: &'static str,
        value: f64,
        allowed: AllowedRange,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: timestamp regresses")]
    Order { line: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid driver profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
