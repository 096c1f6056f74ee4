//! Forecast error measures. Dataset-level values are macro averages over series.

use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mase: f64,
    pub rmse: f64,
    /// Fraction, not percent.
    pub mape: f64,
}

fn check_lengths(actual: &[f64], forecast: &[f64]) -> Result<()> {
    if actual.len() != forecast.len() {
        return Err(Error::LengthMismatch(format!(
            "{} actual values vs {} forecasts",
            actual.len(),
            forecast.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::LengthMismatch("empty forecast".into()));
    }
    Ok(())
}

fn mae(actual: &[f64], forecast: &[f64]) -> f64 {
    actual.iter().zip(forecast).map(|(a, f)| (a - f).abs()).sum::<f64>() / actual.len() as f64
}

/// Mean absolute scaled error of one series, scaled by the in-sample seasonal-naive MAE.
pub fn mase(actual: &[f64], forecast: &[f64], insample: &[f64], season: usize) -> Result<f64> {
    check_lengths(actual, forecast)?;
    if season == 0 || insample.len() <= season {
        return Err(Error::UndefinedMetric {
            metric: "MASE",
            reason: format!("in-sample length {} must exceed season {season}", insample.len()),
        });
    }
    let scale = insample
        .windows(season + 1)
        .map(|w| (w[season] - w[0]).abs())
        .sum::<f64>()
        / (insample.len() - season) as f64;
    if scale == 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "MASE",
            reason: format!("in-sample series is constant at lag {season}"),
        });
    }
    Ok(mae(actual, forecast) / scale)
}

pub fn rmse(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_lengths(actual, forecast)?;
    let mse = actual.iter().zip(forecast).map(|(a, f)| (a - f).powi(2)).sum::<f64>() / actual.len() as f64;
    Ok(mse.sqrt())
}

pub fn mape(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_lengths(actual, forecast)?;
    if actual.contains(&0.0) {
        return Err(Error::UndefinedMetric {
            metric: "MAPE",
            reason: "actual value equal to zero".into(),
        });
    }
    Ok(actual.iter().zip(forecast).map(|(a, f)| ((a - f) / a).abs()).sum::<f64>() / actual.len() as f64)
}

fn macro_average<F>(split: &SplitDataset, forecasts: &[Vec<f64>], per_series: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64>,
{
    if forecasts.len() != split.test.len() {
        return Err(Error::LengthMismatch(format!(
            "{} forecast vectors for {} series",
            forecasts.len(),
            split.test.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..split.test.len() {
        total += per_series(i)?;
    }
    Ok(total / split.test.len() as f64)
}

pub fn dataset_mase(split: &SplitDataset, forecasts: &[Vec<f64>]) -> Result<f64> {
    macro_average(split, forecasts, |i| {
        mase(
            &split.test[i],
            &forecasts[i],
            &split.train.series[i].values,
            split.train.season_length,
        )
    })
}

pub fn dataset_rmse(split: &SplitDataset, forecasts: &[Vec<f64>]) -> Result<f64> {
    macro_average(split, forecasts, |i| rmse(&split.test[i], &forecasts[i]))
}

pub fn dataset_mape(split: &SplitDataset, forecasts: &[Vec<f64>]) -> Result<f64> {
    macro_average(split, forecasts, |i| mape(&split.test[i], &forecasts[i]))
}

/// All three measures; each entry fails independently so one undefined metric
/// does not hide the others.
pub fn evaluate(split: &SplitDataset, forecasts: &[Vec<f64>]) -> [Result<f64>; 3] {
    [
        dataset_mase(split, forecasts),
        dataset_rmse(split, forecasts),
        dataset_mape(split, forecasts),
    ]
}

impl ErrorReport {
    pub fn compute(split: &SplitDataset, forecasts: &[Vec<f64>]) -> Result<Self> {
        let [mase, rmse, mape] = evaluate(split, forecasts);
        Ok(Self {
            mase: mase?,
            rmse: rmse?,
            mape: mape?,
        })
    }
}
