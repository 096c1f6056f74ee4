//! Dataset meta-features and meta-learning rows.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forecasters::ModelPool;

pub const DATASET_FEATURES: [&str; 10] = [
    "num_series",
    "avg_length",
    "horizon",
    "season_length",
    "avg_mean",
    "avg_std",
    "avg_min",
    "avg_max",
    "avg_lag1_autocorr",
    "avg_trend_slope",
];

/// Column layout of meta-learning rows: dataset features, then model features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    pub pool: ModelPool,
}

impl FeatureSchema {
    pub fn new(pool: &ModelPool) -> Self {
        let names = DATASET_FEATURES
            .iter()
            .map(|s| s.to_string())
            .chain(pool.feature_names())
            .collect();
        Self {
            names,
            pool: pool.clone(),
        }
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    /// SHA-256 over the ordered feature names.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }

    pub fn build_row(&self, dataset_features: &[f64], model_key: &str) -> Result<MetaFeatureVector> {
        if dataset_features.len() != DATASET_FEATURES.len() {
            return Err(Error::LengthMismatch(format!(
                "{} dataset features, expected {}",
                dataset_features.len(),
                DATASET_FEATURES.len()
            )));
        }
        let mut values = dataset_features.to_vec();
        values.extend(self.pool.model_meta_features(model_key)?);
        debug_assert_eq!(values.len(), self.width());
        Ok(MetaFeatureVector { values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub values: Vec<f64>,
}

/// Population statistics of one series.
struct SeriesStats {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
    lag1_autocorr: f64,
    trend_slope: f64,
}

fn series_stats(values: &[f64]) -> SeriesStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let std = (ss / n).sqrt();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // constant series: autocorrelation is defined as 0
    let lag1_autocorr = if ss == 0.0 {
        0.0
    } else {
        values.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / ss
    };
    let t_mean = (n - 1.0) / 2.0;
    let stt: f64 = (0..values.len()).map(|t| (t as f64 - t_mean).powi(2)).sum();
    let trend_slope = if stt == 0.0 {
        0.0
    } else {
        values
            .iter()
            .enumerate()
            .map(|(t, v)| (t as f64 - t_mean) * (v - mean))
            .sum::<f64>()
            / stt
    };
    SeriesStats {
        mean,
        std,
        min,
        max,
        lag1_autocorr,
        trend_slope,
    }
}

/// The ten dataset features in [`DATASET_FEATURES`] order; statistics are per series, then averaged.
pub fn dataset_features(d: &Dataset) -> Vec<f64> {
    let n = d.series.len() as f64;
    let stats: Vec<SeriesStats> = d.series.iter().map(|s| series_stats(&s.values)).collect();
    let avg = |f: fn(&SeriesStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
    vec![
        n,
        d.series.iter().map(|s| s.len() as f64).sum::<f64>() / n,
        d.horizon as f64,
        d.season_length as f64,
        avg(|s| s.mean),
        avg(|s| s.std),
        avg(|s| s.min),
        avg(|s| s.max),
        avg(|s| s.lag1_autocorr),
        avg(|s| s.trend_slope),
    ]
}

pub fn build_row(d: &Dataset, model_key: &str, schema: &FeatureSchema) -> Result<MetaFeatureVector> {
    schema.build_row(&dataset_features(d), model_key)
}
