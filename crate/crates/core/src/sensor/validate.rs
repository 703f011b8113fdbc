use std::fmt;

use super::{SensorError, SensorPayload, SensorSample};

pub const SYSTOLIC_RANGE: AllowedRange = AllowedRange::closed(70.0, 180.0);
pub const DIASTOLIC_RANGE: AllowedRange = AllowedRange::closed(40.0, 120.0);
pub const SPO2_RANGE: AllowedRange = AllowedRange::closed(0.0, 100.0);
/// Resting band considered healthy for oxygen saturation.
pub const SPO2_HEALTHY: AllowedRange = AllowedRange::closed(95.0, 100.0);
pub const HEART_RATE_RANGE: AllowedRange = AllowedRange::closed(25.0, 250.0);
pub const IBI_RANGE: AllowedRange = AllowedRange::left_open(0.0, 5000.0);
pub const LAT_RANGE: AllowedRange = AllowedRange::closed(-90.0, 90.0);
pub const LON_RANGE: AllowedRange = AllowedRange::closed(-180.0, 180.0);
pub const SPEED_RANGE: AllowedRange = AllowedRange::closed(0.0, f64::MAX);
const FINITE: AllowedRange = AllowedRange::closed(f64::MIN, f64::MAX);

/// A numeric interval with an optionally open lower end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllowedRange {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
}

impl AllowedRange {
    pub const fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_open: false,
        }
    }

    pub const fn left_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_open: true,
        }
    }

    /// NaN is never contained.
    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_open {
            v > self.lo
        } else {
            v >= self.lo
        };
        above && v <= self.hi
    }
}

impl fmt::Display for AllowedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_open { "(" } else { "[" };
        if self.hi == f64::MAX {
            write!(f, "{open}{}, inf)", self.lo)
        } else if self.lo == f64::MIN {
            f.write_str("finite")
        } else {
            write!(f, "{open}{}, {}]", self.lo, self.hi)
        }
    }
}

/// A sample that passed range validation, with its validity flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedSample {
    pub sample: SensorSample,
    pub in_range: bool,
    /// Only set for SpO2 readings: whether the value sits in the 95–100 band.
    pub spo2_healthy: Option<bool>,
}

fn check(field: &'static str, value: f64, allowed: AllowedRange) -> Result<(), SensorError> {
    if allowed.contains(value) {
        Ok(())
    } else {
        Err(SensorError::Range {
            field,
            value,
            allowed,
        })
    }
}

/// Checks a reading against its physiological or physical range.
///
/// Out-of-range values are rejected, never clamped; a successful result
/// carries the sample unchanged.
pub fn validate_sample(sample: SensorSample) -> Result<ValidatedSample, SensorError> {
    let mut spo2_healthy = None;
    match sample.payload {
        SensorPayload::Accel { x, y, z } => {
            check("x", x, FINITE)?;
            check("y", y, FINITE)?;
            check("z", z, FINITE)?;
        }
        SensorPayload::Gyro { wx, wy, wz } => {
            check("wx", wx, FINITE)?;
            check("wy", wy, FINITE)?;
            check("wz", wz, FINITE)?;
        }
        SensorPayload::HeartRate { bpm } => check("bpm", bpm, HEART_RATE_RANGE)?,
        SensorPayload::HeartBeat { ibi_ms } => check("ibi_ms", ibi_ms, IBI_RANGE)?,
        SensorPayload::StepCount { .. } => {}
        SensorPayload::Location { lat, lon, speed } => {
            check("lat", lat, LAT_RANGE)?;
            check("lon", lon, LON_RANGE)?;
            check("speed", speed, SPEED_RANGE)?;
        }
        SensorPayload::BloodPressure {
            systolic,
            diastolic,
        } => {
            check("systolic", systolic, SYSTOLIC_RANGE)?;
            check("diastolic", diastolic, DIASTOLIC_RANGE)?;
        }
        SensorPayload::Spo2 { pct } => {
            check("pct", pct, SPO2_RANGE)?;
            spo2_healthy = Some(SPO2_HEALTHY.contains(pct));
        }
    }
    Ok(ValidatedSample {
        sample,
        in_range: true,
        spo2_healthy,
    })
}
