//! Candidate forecasters with structural descriptors.
//!
//! Every model is deterministic. Work counts (`fit_ops`, [`CandidateModel::predict_ops`])
//! are analytic operation estimates used by the deterministic timing mode of the profiler.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

const SES_ALPHA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Relative Tikhonov strength used when the AR design matrix is rank deficient.
pub const SINGULAR_FALLBACK_RIDGE: f64 = 1e-12;

/// Condition threshold below which the AR design is treated as singular.
const SINGULAR_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Naive,
    SeasonalNaive,
    Drift,
    ExponentialSmoothing,
    Autoregressive,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelSpec {
    pub key: &'static str,
    pub family: ModelFamily,
    pub lag_order: usize,
    pub seasonal: bool,
    /// Relative ridge strength for AR models; 0 means ordinary least squares.
    pub ridge: f64,
}

static REGISTRY: [ModelSpec; 6] = [
    ModelSpec { key: "naive", family: ModelFamily::Naive, lag_order: 0, seasonal: false, ridge: 0.0 },
    ModelSpec { key: "snaive", family: ModelFamily::SeasonalNaive, lag_order: 0, seasonal: true, ridge: 0.0 },
    ModelSpec { key: "drift", family: ModelFamily::Drift, lag_order: 0, seasonal: false, ridge: 0.0 },
    ModelSpec { key: "ses", family: ModelFamily::ExponentialSmoothing, lag_order: 0, seasonal: false, ridge: 0.0 },
    ModelSpec { key: "linear_ar", family: ModelFamily::Autoregressive, lag_order: 4, seasonal: false, ridge: 0.0 },
    ModelSpec { key: "ridge_ar_large", family: ModelFamily::Autoregressive, lag_order: 12, seasonal: false, ridge: 1e-3 },
];

pub fn registry() -> &'static [ModelSpec] {
    &REGISTRY
}

pub fn model_spec(key: &str) -> Result<&'static ModelSpec> {
    REGISTRY
        .iter()
        .find(|s| s.key == key)
        .ok_or_else(|| Error::UnknownModel(key.to_string()))
}

/// Structural feature names appended after the model one-hot block.
pub const STRUCTURAL_FEATURES: [&str; 2] = ["lag_order", "uses_seasonality"];

/// An ordered set of model keys. Order fixes the one-hot layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPool {
    keys: Vec<String>,
}

impl ModelPool {
    pub fn new<I, S>(keys: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for key in keys {
            let key = key.into();
            model_spec(&key)?;
            if out.contains(&key) {
                return Err(Error::InvalidArgument(format!("model `{key}` listed twice")));
            }
            out.push(key);
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("empty model pool".into()));
        }
        Ok(Self { keys: out })
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.keys.iter().any(|k| k == key)
    }

    /// One-hot over the pool followed by the structural features.
    pub fn model_meta_features(&self, key: &str) -> Result<Vec<f64>> {
        let spec = model_spec(key)?;
        let position = self
            .keys
            .iter()
            .position(|k| k == key)
            .ok_or_else(|| Error::UnknownModel(key.to_string()))?;
        let mut v = vec![0.0; self.keys.len()];
        v[position] = 1.0;
        v.push(spec.lag_order as f64);
        v.push(if spec.seasonal { 1.0 } else { 0.0 });
        Ok(v)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.keys
            .iter()
            .map(|k| format!("model={k}"))
            .chain(STRUCTURAL_FEATURES.iter().map(|s| s.to_string()))
            .collect()
    }
}

impl Default for ModelPool {
    fn default() -> Self {
        Self {
            keys: REGISTRY.iter().map(|s| s.key.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedState {
    LastValues {
        last: Vec<f64>,
    },
    SeasonalTails {
        tails: Vec<Vec<f64>>,
    },
    Drift {
        last: Vec<f64>,
        slopes: Vec<f64>,
    },
    Ses {
        alpha: f64,
        levels: Vec<f64>,
    },
    Autoregressive {
        intercept: f64,
        coefficients: Vec<f64>,
        /// Most recent `lag_order` values per series, oldest first.
        histories: Vec<Vec<f64>>,
    },
}

impl FittedState {
    /// Number of learned scalars. Copied observations are not counted.
    pub fn param_count(&self) -> usize {
        match self {
            FittedState::LastValues { .. } | FittedState::SeasonalTails { .. } => 0,
            FittedState::Drift { slopes, .. } => slopes.len(),
            FittedState::Ses { levels, .. } => 1 + levels.len(),
            FittedState::Autoregressive { coefficients, .. } => 1 + coefficients.len(),
        }
    }

    fn num_series(&self) -> usize {
        match self {
            FittedState::LastValues { last } => last.len(),
            FittedState::SeasonalTails { tails } => tails.len(),
            FittedState::Drift { last, .. } => last.len(),
            FittedState::Ses { levels, .. } => levels.len(),
            FittedState::Autoregressive { histories, .. } => histories.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub key: String,
    pub hyperparams: BTreeMap<String, f64>,
    pub fitted_state: Option<FittedState>,
    /// Analytic operation count of the last fit.
    pub fit_ops: u64,
    pub warnings: Vec<String>,
}

impl CandidateModel {
    pub fn unfitted(key: &str) -> Result<Self> {
        model_spec(key)?;
        Ok(Self {
            key: key.to_string(),
            hyperparams: BTreeMap::new(),
            fitted_state: None,
            fit_ops: 0,
            warnings: Vec::new(),
        })
    }

    fn state(&self) -> Result<&FittedState> {
        self.fitted_state
            .as_ref()
            .ok_or_else(|| Error::UnfittedModel(self.key.clone()))
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.state()?.param_count())
    }

    /// Byte length of the serialized fitted state.
    pub fn model_bytes(&self) -> Result<usize> {
        Ok(serde_json::to_vec(self.state()?)?.len())
    }

    pub fn predict(&self, horizon: usize) -> Result<Vec<Vec<f64>>> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let out = match self.state()? {
            FittedState::LastValues { last } => last.iter().map(|&l| vec![l; horizon]).collect(),
            FittedState::SeasonalTails { tails } => tails
                .iter()
                .map(|tail| (0..horizon).map(|h| tail[h % tail.len()]).collect())
                .collect(),
            FittedState::Drift { last, slopes } => last
                .iter()
                .zip(slopes)
                .map(|(&l, &b)| (1..=horizon).map(|h| l + b * h as f64).collect())
                .collect(),
            FittedState::Ses { levels, .. } => levels.iter().map(|&l| vec![l; horizon]).collect(),
            FittedState::Autoregressive {
                intercept,
                coefficients,
                histories,
            } => histories
                .iter()
                .map(|history| ar_forecast(*intercept, coefficients, history, horizon))
                .collect(),
        };
        Ok(out)
    }

    /// Analytic operation count of `predict(horizon)`.
    pub fn predict_ops(&self, horizon: usize) -> Result<u64> {
        let state = self.state()?;
        let points = (state.num_series() * horizon) as u64;
        Ok(match state {
            FittedState::Autoregressive { coefficients, .. } => points * (2 * coefficients.len() as u64 + 1),
            FittedState::Drift { .. } => 2 * points,
            _ => points,
        })
    }
}

/// Fits a registered model with its default hyperparameters.
pub fn fit(model_key: &str, train: &Dataset) -> Result<CandidateModel> {
    fit_with(model_key, BTreeMap::new(), train)
}

/// Fits a registered model. Recognised overrides: `alpha` (ses), `ridge` (AR models).
pub fn fit_with(model_key: &str, hyperparams: BTreeMap<String, f64>, train: &Dataset) -> Result<CandidateModel> {
    let spec = model_spec(model_key)?;
    let mut warnings = Vec::new();
    let series: Vec<&[f64]> = train.series.iter().map(|s| s.values.as_slice()).collect();
    if series.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidDataset(format!("empty training series in `{}`", train.name)));
    }
    let total_points: u64 = series.iter().map(|s| s.len() as u64).sum();
    let n = series.len() as u64;

    let (state, fit_ops) = match spec.family {
        ModelFamily::Naive => (
            FittedState::LastValues {
                last: series.iter().map(|s| s[s.len() - 1]).collect(),
            },
            n,
        ),
        ModelFamily::SeasonalNaive => {
            let season = train.season_length.max(1);
            let tails = series
                .iter()
                .map(|s| {
                    let start = s.len().saturating_sub(season);
                    s[start..].to_vec()
                })
                .collect();
            (FittedState::SeasonalTails { tails }, n * season as u64)
        }
        ModelFamily::Drift => {
            let last = series.iter().map(|s| s[s.len() - 1]).collect();
            let slopes = series
                .iter()
                .map(|s| {
                    if s.len() < 2 {
                        0.0
                    } else {
                        (s[s.len() - 1] - s[0]) / (s.len() - 1) as f64
                    }
                })
                .collect();
            (FittedState::Drift { last, slopes }, 2 * n)
        }
        ModelFamily::ExponentialSmoothing => {
            let (alpha, grid_len) = match hyperparams.get("alpha") {
                Some(&a) if a > 0.0 && a <= 1.0 => (a, 1),
                Some(&a) => {
                    return Err(Error::InvalidArgument(format!("ses alpha {a} outside (0, 1]")));
                }
                None => (select_ses_alpha(&series), SES_ALPHA_GRID.len()),
            };
            let levels = series.iter().map(|s| ses_run(s, alpha).0).collect();
            (FittedState::Ses { alpha, levels }, 3 * total_points * grid_len as u64)
        }
        ModelFamily::Autoregressive => {
            let lags = spec.lag_order;
            let ridge = hyperparams.get("ridge").copied().unwrap_or(spec.ridge);
            if !(ridge >= 0.0 && ridge.is_finite()) {
                return Err(Error::InvalidArgument(format!("ridge strength {ridge} must be non-negative")));
            }
            let fit = fit_shared_ar(&series, lags, ridge)?;
            if fit.singular {
                let msg = format!(
                    "singular AR normal equations; fell back to ridge with relative lambda {SINGULAR_FALLBACK_RIDGE:e}"
                );
                log::warn!("{model_key} on `{}`: {msg}", train.name);
                warnings.push(msg);
            }
            let d = (lags + 1) as u64;
            let histories = series.iter().map(|s| padded_history(s, lags)).collect();
            (
                FittedState::Autoregressive {
                    intercept: fit.intercept,
                    coefficients: fit.coefficients,
                    histories,
                },
                fit.rows as u64 * d * d + d * d * d,
            )
        }
    };

    Ok(CandidateModel {
        key: model_key.to_string(),
        hyperparams,
        fitted_state: Some(state),
        fit_ops,
        warnings,
    })
}

/// Final level and one-step-ahead in-sample SSE. The level starts at the first observation.
fn ses_run(series: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = series[0];
    let mut sse = 0.0;
    for &y in &series[1..] {
        let e = y - level;
        sse += e * e;
        level = alpha * y + (1.0 - alpha) * level;
    }
    (level, sse)
}

/// Grid alpha with the smallest SSE summed over all series; ties keep the smaller alpha.
fn select_ses_alpha(series: &[&[f64]]) -> f64 {
    let mut best = (SES_ALPHA_GRID[0], f64::INFINITY);
    for &alpha in &SES_ALPHA_GRID {
        let sse: f64 = series.iter().map(|s| ses_run(s, alpha).1).sum();
        if sse < best.1 {
            best = (alpha, sse);
        }
    }
    best.0
}

/// Last `lags` values, left-padded with the first observation when the series is shorter.
fn padded_history(series: &[f64], lags: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(lags);
    for k in (1..=lags).rev() {
        let idx = series.len() as isize - k as isize;
        out.push(if idx < 0 { series[0] } else { series[idx as usize] });
    }
    out
}

fn ar_forecast(intercept: f64, coefficients: &[f64], history: &[f64], horizon: usize) -> Vec<f64> {
    let mut window = history.to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        // coefficients[k] multiplies lag k + 1
        let next = intercept
            + coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| c * window[window.len() - 1 - k])
                .sum::<f64>();
        out.push(next);
        if !window.is_empty() {
            window.remove(0);
            window.push(next);
        }
    }
    out
}

struct ArFit {
    intercept: f64,
    coefficients: Vec<f64>,
    rows: usize,
    singular: bool,
}

/// One AR(lags) model with intercept, fitted jointly on all series.
///
/// Series longer than `lags` contribute rows `t >= lags`; shorter series contribute
/// rows `t >= 1` with lags left-padded by their first value. Columns are centered so
/// the intercept is never penalized; the centered system is solved through an SVD with
/// Tikhonov damping `ridge * mean(diag(XᵀX))`.
fn fit_shared_ar(series: &[&[f64]], lags: usize, ridge: f64) -> Result<ArFit> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets = Vec::new();
    for s in series {
        let start = if s.len() > lags { lags } else { 1 };
        for t in start..s.len() {
            let lagged: Vec<f64> = (1..=lags)
                .map(|k| if t >= k { s[t - k] } else { s[0] })
                .collect();
            rows.push(lagged);
            targets.push(s[t]);
        }
    }
    if targets.is_empty() {
        return Err(Error::InsufficientData("no AR training rows".into()));
    }
    let n = targets.len();
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    if lags == 0 {
        return Ok(ArFit {
            intercept: y_mean,
            coefficients: Vec::new(),
            rows: n,
            singular: false,
        });
    }
    let mut x_mean = vec![0.0; lags];
    for r in &rows {
        for (m, v) in x_mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let x = DMatrix::from_fn(n, lags, |i, j| rows[i][j] - x_mean[j]);
    let y = DVector::from_fn(n, |i, _| targets[i] - y_mean);

    let svd = x.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    let singular = ridge == 0.0 && (sigma_max == 0.0 || sigma_min / sigma_max < SINGULAR_RATIO);
    let relative = if singular { SINGULAR_FALLBACK_RIDGE } else { ridge };
    let mean_diag = (0..lags).map(|j| x.column(j).norm_squared()).sum::<f64>() / lags as f64;
    let lambda = relative * mean_diag;

    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let uty = u.transpose() * &y;
    let mut beta = DVector::zeros(lags);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let denom = s * s + lambda;
        if denom == 0.0 {
            continue;
        }
        let w = s * uty[i] / denom;
        beta += v_t.row(i).transpose() * w;
    }
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::InsufficientData("AR fit produced non-finite coefficients".into()));
    }
    Ok(ArFit {
        intercept,
        coefficients,
        rows: n,
        singular,
    })
}
