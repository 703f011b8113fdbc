//! Deterministic synthetic sessions.
//!
//! Output is a pure function of `(scenario, seed, profile)`: every stream
//! draws from its own ChaCha generator seeded from the scenario seed, so the
//! streams never perturb one another.
//!
//! Cadences: accelerometer and gyroscope at 10 Hz, location, step count and
//! heart rate at 1 Hz, one heart-beat sample per simulated beat, blood
//! pressure and SpO2 every 60 s.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{
    merge_streams, DriverProfile, Fitness, Gender, Label, LabelPoint, Scenario, ScenarioKind,
    SensorError, SensorPayload, SensorSample, SessionStream, Timestamp,
};

/// Device id stamped on synthetic samples (a single watch).
pub const WATCH_SOURCE: u16 = 1;

/// Duration over which the drowsiness changes complete after onset.
pub const DROWSY_RAMP_S: f64 = 120.0;
/// Fractional heart-rate decline once drowsy.
pub const DROWSY_HR_DROP: f64 = 0.10;
/// Fractional blood-pressure decline once drowsy.
pub const DROWSY_BP_DROP: f64 = 0.10;
/// Multiplier on beat-to-beat variability (RMSSD) once drowsy.
pub const DROWSY_VARIABILITY_GAIN: f64 = 2.5;
/// Amplitude of the slow (10 min period) heart-rate wander.
const HR_DRIFT: f64 = 0.005;
/// Share of successive-difference variance that is white rather than respiratory.
const RSA_WHITE_SHARE: f64 = 0.25;
/// Time constant of the saturating onset ramp.
const RAMP_TAU_S: f64 = 20.0;

const START_LAT: f64 = 28.463_6;
const START_LON: f64 = -16.251_8;
const METERS_PER_DEG: f64 = 111_320.0;

/// Progress of the drowsy transition `since_onset_s` seconds after onset.
///
/// 0 before onset, exactly 1 from [`DROWSY_RAMP_S`] on, and a saturating
/// exponential in between (most of the change lands in the first minute).
pub fn drowsy_progress(since_onset_s: f64) -> f64 {
    if since_onset_s <= 0.0 {
        0.0
    } else if since_onset_s >= DROWSY_RAMP_S {
        1.0
    } else {
        (1.0 - (-since_onset_s / RAMP_TAU_S).exp()) / (1.0 - (-DROWSY_RAMP_S / RAMP_TAU_S).exp())
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (x * p).round() / p
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Cardiovascular state of the simulated driver over time.
struct Physiology {
    base_hr: f64,
    base_rmssd: f64,
    base_systolic: f64,
    base_diastolic: f64,
    drift_phase: f64,
    onset_s: Option<f64>,
}

impl Physiology {
    fn new(profile: &DriverProfile, kind: ScenarioKind, seed: u64) -> Self {
        let age = f64::from(profile.age_years()) - 40.0;
        let rmssd_fit = match profile.fitness {
            Fitness::Sedentary => 40.0,
            Fitness::Active => 48.0,
            Fitness::Athlete => 60.0,
        };
        let sex_offset = if profile.gender == Gender::Female {
            -4.0
        } else {
            0.0
        };
        let mut rng = rng_for(seed, 0);
        Self {
            base_hr: profile.population_resting_hr() + 6.0,
            base_rmssd: rmssd_fit * (1.0 - 0.005 * age).clamp(0.6, 1.2),
            base_systolic: 118.0 + 0.3 * age + sex_offset,
            base_diastolic: 76.0 + 0.15 * age,
            drift_phase: rng.gen_range(0.0..2.0 * PI),
            onset_s: match kind {
                ScenarioKind::DrowsyOnset { onset_s } => Some(f64::from(onset_s)),
                _ => None,
            },
        }
    }

    fn progress(&self, t_s: f64) -> f64 {
        self.onset_s.map_or(0.0, |on| drowsy_progress(t_s - on))
    }

    fn hr(&self, t_s: f64) -> f64 {
        let drift = HR_DRIFT * (2.0 * PI * t_s / 600.0 + self.drift_phase).sin();
        self.base_hr * (1.0 + drift) * (1.0 - DROWSY_HR_DROP * self.progress(t_s))
    }

    fn rmssd(&self, t_s: f64) -> f64 {
        let gain = 1.0 + (DROWSY_VARIABILITY_GAIN - 1.0) * self.progress(t_s);
        self.base_rmssd * gain
    }

    fn bp(&self, t_s: f64) -> (f64, f64) {
        let f = 1.0 - DROWSY_BP_DROP * self.progress(t_s);
        (self.base_systolic * f, self.base_diastolic * f)
    }
}

/// What the wearer is doing during a stretch of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Walk,
    Jog,
    Drive,
    StopAndGo,
    Park,
}

/// Ground truth of an activity trace, one entry per second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivityLabel {
    Idle,
    Driving,
    Stopped,
}

impl Mode {
    fn label(self) -> ActivityLabel {
        match self {
            Mode::Walk | Mode::Jog => ActivityLabel::Idle,
            Mode::Drive | Mode::StopAndGo => ActivityLabel::Driving,
            Mode::Park => ActivityLabel::Stopped,
        }
    }
}

/// Location and pedometer samples for a sequence of `(mode, seconds)`
/// segments, sampled at 1 Hz, plus one ground-truth label per second.
fn mobility(
    segments: &[(Mode, u32)],
    seed: u64,
) -> (SessionStream, SessionStream, Vec<(u64, ActivityLabel)>) {
    let mut rng = rng_for(seed, 1);
    let mut loc = Vec::new();
    let mut steps = Vec::new();
    let mut labels = Vec::new();

    let mut v = 0.0f64;
    let mut heading: f64 = rng.gen_range(0.0..2.0 * PI);
    let (mut lat, mut lon) = (START_LAT, START_LON);
    let mut step_acc = 0.0f64;
    let mut cumulative: u64 = rng.gen_range(2_000..8_000);
    let cruise_phase: f64 = rng.gen_range(0.0..2.0 * PI);

    // stop-and-go: remaining seconds in the current go/stop phase
    // toggled before the first second, so the segment opens with a go phase
    let mut sg_moving = false;
    let mut sg_left = 0u32;
    let mut sg_target = 10.0;

    let mut t_s: u64 = 0;
    for &(mode, dur) in segments {
        for _ in 0..dur {
            let t = t_s as f64;
            let (target, cadence) = match mode {
                Mode::Walk => (1.3 + 0.2 * gauss(&mut rng), 105.0 + 5.0 * gauss(&mut rng)),
                Mode::Jog => (4.6 + 0.2 * gauss(&mut rng), 165.0 + 5.0 * gauss(&mut rng)),
                Mode::Drive => (
                    25.0 + 2.5 * (2.0 * PI * t / 420.0 + cruise_phase).sin(),
                    0.0,
                ),
                Mode::StopAndGo => {
                    if sg_left == 0 {
                        sg_moving = !sg_moving;
                        sg_left = if sg_moving {
                            sg_target = rng.gen_range(7.0..14.0);
                            rng.gen_range(40..90)
                        } else {
                            rng.gen_range(10..45)
                        };
                    }
                    sg_left -= 1;
                    (if sg_moving { sg_target } else { 0.0 }, 0.0)
                }
                Mode::Park => (0.0, 0.0),
            };
            v += (target.max(0.0) - v) * 0.35;
            if target == 0.0 && v < 0.2 {
                v = 0.0;
            }
            let reported = if v > 0.0 {
                (v + 0.15 * gauss(&mut rng)).max(0.0)
            } else {
                0.0
            };

            heading += 0.02 * gauss(&mut rng);
            lat += v * heading.cos() / METERS_PER_DEG;
            lon += v * heading.sin() / (METERS_PER_DEG * lat.to_radians().cos());

            step_acc += cadence.max(0.0) / 60.0;
            // occasional arm swings register as steps while seated
            if matches!(mode, Mode::Drive | Mode::StopAndGo) && rng.gen_bool(0.02) {
                step_acc += 1.0;
            }
            let whole = step_acc.floor();
            step_acc -= whole;
            cumulative += whole as u64;

            let ts = Timestamp::from_secs(t_s);
            loc.push(SensorSample::new(
                ts,
                WATCH_SOURCE,
                SensorPayload::Location {
                    lat: round_to(lat, 6),
                    lon: round_to(lon, 6),
                    speed: round_to(reported, 2),
                },
            ));
            steps.push(SensorSample::new(
                ts,
                WATCH_SOURCE,
                SensorPayload::StepCount { cumulative },
            ));
            labels.push((ts.ms(), mode.label()));
            t_s += 1;
        }
    }
    (SessionStream::new(loc), SessionStream::new(steps), labels)
}

fn motion(duration_s: u32, seed: u64) -> SessionStream {
    let mut rng = rng_for(seed, 2);
    let vib = Normal::new(0.0, 0.15).expect("valid sigma");
    let rot = Normal::new(0.0, 0.02).expect("valid sigma");
    let n = u64::from(duration_s) * 10;
    let mut out = Vec::with_capacity(n as usize * 2);
    for k in 0..n {
        let t = Timestamp(k * 100);
        out.push(SensorSample::new(
            t,
            WATCH_SOURCE,
            SensorPayload::Accel {
                x: round_to(vib.sample(&mut rng), 3),
                y: round_to(vib.sample(&mut rng), 3),
                z: round_to(9.81 + vib.sample(&mut rng), 3),
            },
        ));
        out.push(SensorSample::new(
            t,
            WATCH_SOURCE,
            SensorPayload::Gyro {
                wx: round_to(rot.sample(&mut rng), 4),
                wy: round_to(rot.sample(&mut rng), 4),
                wz: round_to(rot.sample(&mut rng), 4),
            },
        ));
    }
    SessionStream::new(out)
}

fn beats(phys: &Physiology, duration_s: u32, seed: u64) -> SessionStream {
    let mut rng = rng_for(seed, 3);
    let end = u64::from(duration_s) * 1000;
    let mut t: u64 = rng.gen_range(0..1000);
    let breath_hz = rng.gen_range(0.2..0.3);
    let mut phase = rng.gen_range(0.0..2.0 * PI);
    let mut out = Vec::new();
    loop {
        let t_s = t as f64 / 1000.0;
        let mean = 60_000.0 / phys.hr(t_s);
        // Respiratory sinus arrhythmia carries most of the successive-difference
        // energy; white noise the rest. A sinusoid of amplitude A sampled every
        // T seconds has RMS successive difference sqrt(2)·A·sin(pi·f·T).
        let rmssd = phys.rmssd(t_s);
        let rsa_amp = (1.0 - RSA_WHITE_SHARE).sqrt() * rmssd
            / (SQRT_2 * (PI * breath_hz * mean / 1000.0).sin());
        let white_sigma = RSA_WHITE_SHARE.sqrt() * rmssd / SQRT_2;
        let ibi = (mean + rsa_amp * phase.sin() + white_sigma * gauss(&mut rng))
            .round()
            .clamp(300.0, 2000.0);
        phase += 2.0 * PI * breath_hz * ibi / 1000.0;
        t += ibi as u64;
        if t >= end {
            break;
        }
        out.push(SensorSample::new(
            Timestamp(t),
            WATCH_SOURCE,
            SensorPayload::HeartBeat { ibi_ms: ibi },
        ));
    }
    SessionStream::new(out)
}

fn heart_rate(phys: &Physiology, duration_s: u32, seed: u64) -> SessionStream {
    let mut rng = rng_for(seed, 4);
    let out = (0..u64::from(duration_s))
        .map(|s| {
            let bpm = phys.hr(s as f64) * (1.0 + 0.01 * gauss(&mut rng));
            SensorSample::new(
                Timestamp::from_secs(s),
                WATCH_SOURCE,
                SensorPayload::HeartRate {
                    bpm: round_to(bpm, 1),
                },
            )
        })
        .collect();
    SessionStream::new(out)
}

fn vitals(phys: &Physiology, duration_s: u32, seed: u64) -> SessionStream {
    let mut rng = rng_for(seed, 5);
    let mut out = Vec::new();
    for s in (0..u64::from(duration_s)).step_by(60) {
        let t = Timestamp::from_secs(s);
        let (sys, dia) = phys.bp(s as f64);
        out.push(SensorSample::new(
            t,
            WATCH_SOURCE,
            SensorPayload::BloodPressure {
                systolic: round_to(sys + 1.0 * gauss(&mut rng), 1),
                diastolic: round_to(dia + 0.7 * gauss(&mut rng), 1),
            },
        ));
        let spo2 = (97.2 + 0.5 * gauss(&mut rng)).clamp(94.0, 100.0);
        out.push(SensorSample::new(
            t,
            WATCH_SOURCE,
            SensorPayload::Spo2 {
                pct: round_to(spo2, 1),
            },
        ));
    }
    SessionStream::new(out)
}

/// Builds a complete multi-sensor driving session with alertness labels.
///
/// `DROWSY_ONSET` sessions lower heart rate and blood pressure by 10% and
/// raise beat-to-beat variability 2.5× over the 120 s after onset; labels
/// read `DROWSY` from onset on.
pub fn synthesize_session(
    scenario: &Scenario,
    profile: &DriverProfile,
) -> Result<SessionStream, SensorError> {
    scenario.check()?;
    let seed = scenario.seed;
    let dur = scenario.duration_s;
    let phys = Physiology::new(profile, scenario.kind, seed);
    let mode = match scenario.kind {
        ScenarioKind::StopAndGo => Mode::StopAndGo,
        _ => Mode::Drive,
    };
    let (loc, steps, _) = mobility(&[(mode, dur)], seed);

    let mut merged = merge_streams(vec![
        motion(dur, seed),
        loc,
        steps,
        heart_rate(&phys, dur, seed),
        beats(&phys, dur, seed),
        vitals(&phys, dur, seed),
    ]);
    let onset_ms = match scenario.kind {
        ScenarioKind::DrowsyOnset { onset_s } => u64::from(onset_s) * 1000,
        _ => u64::MAX,
    };
    merged.labels = Some(
        (0..u64::from(dur))
            .map(|s| {
                let t_ms = s * 1000;
                LabelPoint {
                    t_ms,
                    label: if t_ms >= onset_ms {
                        Label::Drowsy
                    } else {
                        Label::Alert
                    },
                }
            })
            .collect(),
    );
    Ok(merged)
}

/// Activity-detection traces: location and pedometer only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivityKind {
    /// 60 s walk to the car, 90 min drive, 5 min parked, 60 s walk away.
    Drive,
    /// 30 min of walking with three 2-minute jogs above driving speed.
    Walk,
    /// 30 s walk, 80 min of urban stop-and-go, 4 min parked, 30 s walk.
    StopAndGo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityTrace {
    pub stream: SessionStream,
    /// `(t_ms, label)` once per second.
    pub labels: Vec<(u64, ActivityLabel)>,
}

pub fn synthesize_activity(kind: ActivityKind, seed: u64) -> ActivityTrace {
    let segments: Vec<(Mode, u32)> = match kind {
        ActivityKind::Drive => vec![
            (Mode::Walk, 60),
            (Mode::Drive, 5400),
            (Mode::Park, 300),
            (Mode::Walk, 60),
        ],
        ActivityKind::Walk => {
            let mut s = Vec::new();
            for _ in 0..3 {
                s.push((Mode::Walk, 480));
                s.push((Mode::Jog, 120));
            }
            s
        }
        ActivityKind::StopAndGo => vec![
            (Mode::Walk, 30),
            (Mode::StopAndGo, 4800),
            (Mode::Park, 240),
            (Mode::Walk, 30),
        ],
    };
    let (loc, steps, labels) = mobility(&segments, seed);
    ActivityTrace {
        stream: merge_streams(vec![loc, steps]),
        labels,
    }
}
