//! Complexity and resource measurements for one fit/predict run.
//!
//! Timed sections run under a process-wide lock so that no two candidates are
//! measured concurrently. Energy is a proxy: `time * power_rating_w / 3.6e6` kWh.
//! Measurements exclude dataset loading and metric computation.

use std::fs;
use std::path::Path;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::forecasters::{self, CandidateModel};

/// Joules per kilowatt-hour.
pub const JOULES_PER_KWH: f64 = 3.6e6;

/// Rate at which [`TimingMode::Work`] converts analytic operation counts into seconds.
pub const NOMINAL_OPS_PER_SECOND: f64 = 1e9;

static MEASUREMENT_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    /// Monotonic wall clock.
    Wall,
    /// Deterministic: operation counts at [`NOMINAL_OPS_PER_SECOND`].
    #[default]
    Work,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    Proxy,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilerConfig {
    pub power_rating_w: f64,
    pub repetitions: usize,
    pub timing: TimingMode,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        Self {
            power_rating_w: 65.0,
            repetitions: 5,
            timing: TimingMode::Work,
        }
    }
}

impl ProfilerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.power_rating_w > 0.0 && self.power_rating_w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power rating {} W must be positive",
                self.power_rating_w
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub train_time_s: f64,
    pub infer_time_s_per_pred: f64,
    pub train_energy_kwh: f64,
    pub infer_energy_kwh_per_pred: f64,
    pub param_count: u64,
    pub model_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_rating_w: Option<f64>,
    pub source: ProfileSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Raw timings of one profiling run.
#[derive(Debug, Clone, PartialEq)]
pub struct Timings {
    pub train: Duration,
    /// One entry per repetition of the full `predict(horizon)` call.
    pub inference: Vec<Duration>,
}

pub fn energy_kwh(seconds: f64, power_rating_w: f64) -> f64 {
    seconds * power_rating_w / JOULES_PER_KWH
}

/// Median; the mean of the two middle values for even counts.
pub fn median(durations: &[Duration]) -> Option<Duration> {
    if durations.is_empty() {
        return None;
    }
    let mut sorted = durations.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2
    })
}

impl ResourceProfile {
    pub fn from_timings(
        timings: &Timings,
        predicted_points: usize,
        power_rating_w: f64,
        param_count: u64,
        model_bytes: u64,
    ) -> Result<Self> {
        let infer = median(&timings.inference)
            .ok_or_else(|| Error::InvalidArgument("no inference timings".into()))?;
        if predicted_points == 0 {
            return Err(Error::InvalidArgument("no predicted points".into()));
        }
        let train_time_s = timings.train.as_secs_f64();
        let infer_time_s_per_pred = infer.as_secs_f64() / predicted_points as f64;
        Ok(Self {
            train_time_s,
            infer_time_s_per_pred,
            train_energy_kwh: energy_kwh(train_time_s, power_rating_w),
            infer_energy_kwh_per_pred: energy_kwh(infer_time_s_per_pred, power_rating_w),
            param_count,
            model_bytes,
            power_rating_w: Some(power_rating_w),
            source: ProfileSource::Proxy,
            warnings: Vec::new(),
        })
    }
}

/// Smallest observable step of the monotonic clock, measured once per process.
pub fn clock_resolution() -> Duration {
    static RESOLUTION: OnceLock<Duration> = OnceLock::new();
    *RESOLUTION.get_or_init(|| {
        let mut best = Duration::from_secs(1);
        for _ in 0..64 {
            let start = Instant::now();
            let mut now = Instant::now();
            while now == start {
                now = Instant::now();
            }
            best = best.min(now - start);
        }
        best
    })
}

/// Output of [`profile_fit_predict`].
#[derive(Debug, Clone)]
pub struct ProfiledRun {
    pub model: CandidateModel,
    pub forecasts: Vec<Vec<f64>>,
    pub profile: ResourceProfile,
}

/// Fits `model_key` on the training view, forecasts the holdout `repetitions` times
/// and measures the run.
pub fn profile_fit_predict(model_key: &str, split: &SplitDataset, config: &ProfilerConfig) -> Result<ProfiledRun> {
    config.validate()?;
    let horizon = split.train.horizon;
    let points = split.test.iter().map(Vec::len).sum::<usize>();

    let (model, forecasts, timings) = {
        let _guard = MEASUREMENT_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        let start = Instant::now();
        let model = forecasters::fit(model_key, &split.train)?;
        let train = start.elapsed();

        let mut inference = Vec::with_capacity(config.repetitions);
        let mut forecasts = Vec::new();
        for _ in 0..config.repetitions {
            let start = Instant::now();
            forecasts = model.predict(horizon)?;
            inference.push(start.elapsed());
        }
        (model, forecasts, Timings { train, inference })
    };

    let timings = match config.timing {
        TimingMode::Wall => timings,
        TimingMode::Work => {
            let to_duration = |ops: u64| Duration::from_secs_f64(ops as f64 / NOMINAL_OPS_PER_SECOND);
            let infer = to_duration(model.predict_ops(horizon)?);
            Timings {
                train: to_duration(model.fit_ops),
                inference: vec![infer; config.repetitions],
            }
        }
    };

    let mut profile = ResourceProfile::from_timings(
        &timings,
        points,
        config.power_rating_w,
        model.param_count()? as u64,
        model.model_bytes()? as u64,
    )?;
    profile.warnings.extend(model.warnings.iter().cloned());
    if config.timing == TimingMode::Wall && timings.train < clock_resolution() * 10 {
        profile.warnings.push(format!(
            "training time {:?} is below 10x clock resolution {:?}",
            timings.train,
            clock_resolution()
        ));
    }
    Ok(ProfiledRun {
        model,
        forecasts,
        profile,
    })
}

const EXTERNAL_REAL_FIELDS: [&str; 4] = [
    "train_time_s",
    "infer_time_s_per_pred",
    "train_energy_kwh",
    "infer_energy_kwh_per_pred",
];
const EXTERNAL_INT_FIELDS: [&str; 2] = ["param_count", "model_bytes"];

/// Reads a measurement produced by an external meter.
pub fn ingest_external_profile(record_path: impl AsRef<Path>) -> Result<ResourceProfile> {
    let path = record_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_external_profile(&text)
}

pub fn parse_external_profile(text: &str) -> Result<ResourceProfile> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value.as_object().ok_or_else(|| Error::InvalidProfile {
        field: "<root>".into(),
        reason: "must be a JSON object".into(),
    })?;
    let invalid = |field: &str, reason: &str| Error::InvalidProfile {
        field: field.to_string(),
        reason: reason.to_string(),
    };

    let mut reals = [0.0; 4];
    for (slot, field) in reals.iter_mut().zip(EXTERNAL_REAL_FIELDS) {
        let v = obj
            .get(field)
            .ok_or_else(|| invalid(field, "is missing"))?
            .as_f64()
            .ok_or_else(|| invalid(field, "is not a number"))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(field, "must be non-negative and finite"));
        }
        *slot = v;
    }
    let mut ints = [0u64; 2];
    for (slot, field) in ints.iter_mut().zip(EXTERNAL_INT_FIELDS) {
        let v = obj.get(field).ok_or_else(|| invalid(field, "is missing"))?;
        if v.as_f64().is_some_and(|x| x < 0.0) {
            return Err(invalid(field, "must be non-negative"));
        }
        *slot = v.as_u64().ok_or_else(|| invalid(field, "is not a non-negative integer"))?;
    }
    match obj.get("source").and_then(|s| s.as_str()) {
        Some("external") => {}
        Some(_) => return Err(invalid("source", "must be \"external\"")),
        None => return Err(invalid("source", "is missing")),
    }

    Ok(ResourceProfile {
        train_time_s: reals[0],
        infer_time_s_per_pred: reals[1],
        train_energy_kwh: reals[2],
        infer_energy_kwh_per_pred: reals[3],
        param_count: ints[0],
        model_bytes: ints[1],
        power_rating_w: None,
        source: ProfileSource::External,
        warnings: Vec::new(),
    })
}
