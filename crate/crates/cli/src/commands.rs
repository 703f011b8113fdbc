use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use dds_core::engine::EngineMode;
use dds_core::hrv::{clean_ibi, hrv_features, personalize, IbiSeries};
use dds_core::num::median;
use dds_core::pipeline::run_session;
use dds_core::sensor::{
    load_replay, synthesize_session, validate_sample, write_labels, write_replay, Scenario,
    ScenarioKind, SensorPayload, SessionStream,
};
use dds_core::store::{
    create_keyset, decode_keyset_file, derive_master_key, fresh_salt, KdfParams, Store, StoreError,
};
use dds_core::{RestingBaseline, SessionConfig};
use serde_json::Value;

use crate::output::{self, RunReport};
use crate::{
    CalibrateArgs, CliError, KeygenArgs, ModeArg, ReplayArgs, ScenarioArg, SimulateArgs, StoreArgs,
    PASSPHRASE_ENV,
};

/// Minimum valid IBI time for a resting baseline.
const MIN_RESTING_MS: f64 = 300_000.0;
const BASELINE_PREF: &str = "baseline";
const PROFILE_PREF: &str = "profile";
const KNOWN_PREFS: [&str; 2] = [BASELINE_PREF, PROFILE_PREF];

fn passphrase() -> Result<String, CliError> {
    match std::env::var(PASSPHRASE_ENV) {
        Ok(p) if !p.is_empty() => Ok(p),
        _ => Err(CliError::Usage(format!("{PASSPHRASE_ENV} must be set"))),
    }
}

fn store_err(e: StoreError, dir: &Path) -> CliError {
    match e {
        StoreError::WeakParams { .. } => CliError::Usage(e.to_string()),
        other => CliError::Runtime(anyhow!(other).context(format!("store {}", dir.display()))),
    }
}

fn mode_name(mode: EngineMode) -> String {
    serde_json::to_value(mode)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let profile = a.profile.profile()?;
    let kind = match (a.scenario, a.onset) {
        (ScenarioArg::DrowsyOnset, onset) => ScenarioKind::DrowsyOnset {
            onset_s: onset.unwrap_or(a.duration / 2),
        },
        (_, Some(_)) => {
            return Err(CliError::Usage(
                "--onset only applies to drowsy-onset".into(),
            ))
        }
        (ScenarioArg::AlertDrive, None) => ScenarioKind::AlertDrive,
        (ScenarioArg::StopAndGo, None) => ScenarioKind::StopAndGo,
    };
    let scenario =
        Scenario::new(kind, a.seed, a.duration).map_err(|e| CliError::Usage(e.to_string()))?;
    let stream = synthesize_session(&scenario, &profile).context("synthesizing session")?;

    output::create_out_dir(&a.out)?;
    output::write_with(&a.out.join(output::SESSION_FILE), |w| {
        write_replay(w, &stream.samples)
    })?;
    let labels = stream.labels.as_deref().unwrap_or_default();
    output::write_with(&a.out.join(output::LABELS_FILE), |w| {
        write_labels(w, labels)
    })?;

    let cfg = SessionConfig {
        start_time: a.start,
        ..SessionConfig::default()
    };
    let mode = cfg.mode;
    let out = run_session(&stream, cfg).context("running pipeline")?;
    output::write_run(&a.out, &out)?;
    let scenario_name = match a.scenario {
        ScenarioArg::AlertDrive => "alert-drive",
        ScenarioArg::DrowsyOnset => "drowsy-onset",
        ScenarioArg::StopAndGo => "stop-and-go",
    };
    output::write_report(
        &a.out,
        &RunReport {
            session_id: format!("sim-{scenario_name}-seed{}-{}s", a.seed, a.duration),
            mode: mode_name(mode),
            start_time: a.start.to_string(),
            counts: out.counts,
            outputs: vec![
                output::SESSION_FILE,
                output::LABELS_FILE,
                output::TRANSITIONS_FILE,
                output::FEATURES_FILE,
                output::ALERTS_FILE,
            ],
        },
    )?;
    Ok(())
}

fn load_baseline(a: &ReplayArgs) -> Result<Option<RestingBaseline>, CliError> {
    if let Some(path) = &a.baseline {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let b = serde_json::from_str(&text)
            .with_context(|| format!("parsing baseline {}", path.display()))?;
        return Ok(Some(b));
    }
    if let Some(dir) = &a.store {
        let store = Store::open(dir, &passphrase()?).map_err(|e| store_err(e, dir))?;
        let bytes = store.get(BASELINE_PREF).map_err(|e| store_err(e, dir))?;
        let b = serde_json::from_slice(&bytes).context("parsing stored baseline")?;
        return Ok(Some(b));
    }
    Ok(None)
}

pub fn replay(a: &ReplayArgs) -> Result<(), CliError> {
    if a.mode == ModeArg::Calibrated && a.baseline.is_none() && a.store.is_none() {
        return Err(CliError::Usage(
            "calibrated mode needs --baseline or --store".into(),
        ));
    }
    let stream = load_replay(&a.input).with_context(|| format!("loading {}", a.input.display()))?;
    let baseline = load_baseline(a)?;
    let cfg = SessionConfig {
        mode: a.mode.into(),
        baseline,
        start_time: a.start,
        ..SessionConfig::default()
    };
    let mode = cfg.mode;
    let out = run_session(&stream, cfg).context("running pipeline")?;
    output::create_out_dir(&a.out)?;
    output::write_run(&a.out, &out)?;
    let stem = a
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    output::write_report(
        &a.out,
        &RunReport {
            session_id: format!("replay-{stem}"),
            mode: mode_name(mode),
            start_time: a.start.to_string(),
            counts: out.counts,
            outputs: vec![
                output::TRANSITIONS_FILE,
                output::FEATURES_FILE,
                output::ALERTS_FILE,
            ],
        },
    )?;
    Ok(())
}

/// Measured baseline from a resting recording: cleaned IBIs plus median BP.
fn resting_baseline(
    stream: &SessionStream,
    a: &CalibrateArgs,
) -> Result<RestingBaseline, CliError> {
    let profile = a.profile.profile()?;
    let mut beats = Vec::new();
    let (mut sys, mut dia) = (Vec::new(), Vec::new());
    for s in stream
        .samples
        .iter()
        .filter(|s| validate_sample(**s).is_ok())
    {
        match s.payload {
            SensorPayload::HeartBeat { ibi_ms } => beats.push((s.t, ibi_ms)),
            SensorPayload::BloodPressure {
                systolic,
                diastolic,
            } => {
                sys.push(systolic);
                dia.push(diastolic);
            }
            _ => {}
        }
    }
    let series = IbiSeries::new(beats).context("heart-beat stream")?;
    let cleaned = clean_ibi(&series);
    let covered: f64 = cleaned.intervals().sum();
    if covered < MIN_RESTING_MS {
        return Err(CliError::Runtime(anyhow!(
            "insufficient data: {:.0} s of valid IBI, need {:.0} s",
            covered / 1000.0,
            MIN_RESTING_MS / 1000.0
        )));
    }
    let features = hrv_features(&cleaned).context("resting features")?;
    let bp = median(&sys).zip(median(&dia));
    Ok(personalize(&profile, Some(&features), bp))
}

pub fn calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let pass = passphrase()?;
    let stream = load_replay(&a.input).with_context(|| format!("loading {}", a.input.display()))?;
    let baseline = resting_baseline(&stream, a)?;
    let profile = a.profile.profile()?;
    let mut store = Store::open_or_init(&a.store, &pass).map_err(|e| store_err(e, &a.store))?;
    let json = serde_json::to_vec(&baseline).context("serializing baseline")?;
    store
        .put(BASELINE_PREF, &json)
        .map_err(|e| store_err(e, &a.store))?;
    let json = serde_json::to_vec(&profile).context("serializing profile")?;
    store
        .put(PROFILE_PREF, &json)
        .map_err(|e| store_err(e, &a.store))?;
    println!(
        "{}",
        serde_json::to_string(&baseline).context("serializing baseline")?
    );
    Ok(())
}

fn decode_value(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|_| Value::String(hex::encode(bytes)))
}

pub fn export(a: &StoreArgs) -> Result<(), CliError> {
    let pass = passphrase()?;
    let store = Store::open(&a.store, &pass).map_err(|e| store_err(e, &a.store))?;
    let ks = store.keyset();
    let known: BTreeMap<_, _> = KNOWN_PREFS.iter().map(|n| (ks.key_tag(n), *n)).collect();
    let mut out = serde_json::Map::new();
    for tag in store.prefs().tags() {
        let value = store
            .prefs()
            .get_by_tag(ks, tag)
            .map_err(|e| store_err(e, &a.store))?;
        let key = known
            .get(tag)
            .map_or_else(|| format!("tag:{tag}"), |n| n.to_string());
        out.insert(key, decode_value(&value));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&Value::Object(out)).context("serializing export")?
    );
    Ok(())
}

pub fn keygen(a: &KeygenArgs) -> Result<(), CliError> {
    let pass = passphrase()?;
    let params = KdfParams {
        iterations: a.iterations,
    };
    let (salt, wrapped) = match &a.store {
        Some(dir) => {
            Store::init(dir, &pass, params).map_err(|e| store_err(e, dir))?;
            let bytes = fs::read(Store::keyset_path(dir)).context("reading keyset file")?;
            let (salt, _, wrapped) = decode_keyset_file(&bytes).map_err(|e| store_err(e, dir))?;
            (salt, wrapped)
        }
        None => {
            let salt = fresh_salt();
            let master = derive_master_key(&pass, &salt, params)
                .map_err(|e| store_err(e, Path::new("-")))?;
            (salt, create_keyset(&master))
        }
    };
    let report = serde_json::json!({
        "salt": hex::encode(salt),
        "iterations": params.iterations,
        "keyset_id": hex::encode(wrapped.keyset_id),
        "wrapped_keyset": hex::encode(wrapped.to_bytes()),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).context("serializing keygen output")?
    );
    Ok(())
}
