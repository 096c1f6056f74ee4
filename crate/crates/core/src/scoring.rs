//! Property weights, the weighted compound score, and discrete rating labels.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propertydb::{property_spec, PcrGroup, INDEX_EPSILON, PROPERTIES};

/// Default weights as exact fractions `(property, numerator, denominator)`.
/// Each PCR group sums to 1/3.
pub const DEFAULT_WEIGHT_FRACTIONS: [(&str, u64, u64); 9] = [
    ("mase", 1, 9),
    ("rmse", 1, 9),
    ("mape", 1, 9),
    ("param_count", 1, 6),
    ("model_size", 1, 6),
    ("train_power", 1, 12),
    ("train_time", 1, 12),
    ("infer_power", 1, 12),
    ("infer_time", 1, 12),
];

/// Non-negative property weights normalized to sum 1, kept in property display order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(IndexMap<String, f64>);

impl WeightVector {
    /// Validates and normalizes; properties not mentioned get weight 0.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let mut given: BTreeMap<&'static str, f64> = BTreeMap::new();
        for (name, w) in pairs {
            let name = name.as_ref();
            let spec = property_spec(name).map_err(|_| Error::InvalidWeights {
                field: name.to_string(),
                reason: "is not a known property".into(),
            })?;
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeights {
                    field: name.to_string(),
                    reason: format!("must be a finite non-negative number, got {w}"),
                });
            }
            if given.insert(spec.name, w).is_some() {
                return Err(Error::InvalidWeights {
                    field: name.to_string(),
                    reason: "given twice".into(),
                });
            }
        }
        let total: f64 = given.values().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidWeights {
                field: "weights".into(),
                reason: "need at least one positive weight".into(),
            });
        }
        Ok(Self(
            PROPERTIES
                .iter()
                .map(|p| (p.name.to_string(), given.get(p.name).copied().unwrap_or(0.0) / total))
                .collect(),
        ))
    }

    /// Parses `name=value` pairs separated by commas (`:` also accepted).
    pub fn parse_inline(spec: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, value) = item.split_once(['=', ':']).ok_or_else(|| Error::InvalidWeights {
                field: item.to_string(),
                reason: "expected name=value".into(),
            })?;
            let value: f64 = value.trim().parse().map_err(|_| Error::InvalidWeights {
                field: name.trim().to_string(),
                reason: format!("`{}` is not a number", value.trim()),
            })?;
            pairs.push((name.trim().to_string(), value));
        }
        Self::from_pairs(pairs)
    }

    /// A single property at weight 1.
    pub fn only(property: &str) -> Result<Self> {
        Self::from_pairs([(property, 1.0)])
    }

    pub fn get(&self, property: &str) -> f64 {
        self.0.get(property).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn positive(&self) -> impl Iterator<Item = (&str, f64)> {
        self.iter().filter(|(_, w)| *w > 0.0)
    }

    pub fn group_sum(&self, group: PcrGroup) -> f64 {
        PROPERTIES
            .iter()
            .filter(|p| p.group == group)
            .map(|p| self.get(p.name))
            .sum()
    }

    pub fn as_map(&self) -> &IndexMap<String, f64> {
        &self.0
    }
}

impl Default for WeightVector {
    fn default() -> Self {
        default_weights()
    }
}

pub fn default_weights() -> WeightVector {
    WeightVector(
        DEFAULT_WEIGHT_FRACTIONS
            .iter()
            .map(|&(name, num, den)| (name.to_string(), num as f64 / den as f64))
            .collect(),
    )
}

/// Compound score with bookkeeping about clamping and missing properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundScore {
    pub value: f64,
    /// Effective (renormalized) weight per available property.
    pub effective_weights: IndexMap<String, f64>,
    /// Estimates after clamping into (0, 1].
    pub estimates: IndexMap<String, f64>,
    pub missing: Vec<String>,
    pub clamped: bool,
}

impl CompoundScore {
    /// `w_i f_i / sum_j w_j f_j` over the available properties.
    pub fn contributions(&self) -> IndexMap<String, f64> {
        let parts: Vec<(String, f64)> = self
            .effective_weights
            .iter()
            .map(|(p, w)| (p.clone(), w * self.estimates[p]))
            .collect();
        let total: f64 = parts.iter().map(|(_, v)| v).sum();
        parts.into_iter().map(|(p, v)| (p, v / total)).collect()
    }
}

pub fn clamp_index(value: f64) -> (f64, bool) {
    if value.is_nan() {
        return (INDEX_EPSILON, true);
    }
    let clamped = value.clamp(INDEX_EPSILON, 1.0);
    (clamped, clamped != value)
}

/// Weighted sum of index estimates over positively weighted properties that have
/// an estimate; weights are renormalized over those.
pub fn compound(estimates: &BTreeMap<String, f64>, weights: &WeightVector) -> Result<CompoundScore> {
    let mut available = Vec::new();
    let mut missing = Vec::new();
    for (p, w) in weights.positive() {
        match estimates.get(p) {
            Some(v) if !v.is_nan() => available.push((p.to_string(), w, *v)),
            _ => missing.push(p.to_string()),
        }
    }
    if available.is_empty() {
        return Err(Error::InsufficientData(
            "no estimate available for any positively weighted property".into(),
        ));
    }
    let total_w: f64 = available.iter().map(|(_, w, _)| w).sum();
    let mut clamped_any = false;
    let mut effective_weights = IndexMap::new();
    let mut clamped_estimates = IndexMap::new();
    let mut value = 0.0;
    for (p, w, v) in available {
        let (v, clamped) = clamp_index(v);
        clamped_any |= clamped;
        let w = w / total_w;
        value += w * v;
        effective_weights.insert(p.clone(), w);
        clamped_estimates.insert(p, v);
    }
    Ok(CompoundScore {
        value: value.min(1.0),
        effective_weights,
        estimates: clamped_estimates,
        missing,
        clamped: clamped_any,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rating {
    A,
    B,
    C,
    D,
    E,
}

/// Lower bounds of the A to D bands, highest first; anything below the last is E.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub boundaries: [f64; 4],
}

impl Default for RatingScale {
    fn default() -> Self {
        Self {
            boundaries: [0.8, 0.65, 0.5, 0.35],
        }
    }
}

impl RatingScale {
    pub fn label(&self, value: f64) -> Result<Rating> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::InvalidArgument(format!("rating value {value} outside (0, 1]")));
        }
        let bands = [Rating::A, Rating::B, Rating::C, Rating::D];
        Ok(bands
            .into_iter()
            .zip(self.boundaries)
            .find(|(_, b)| value >= *b)
            .map(|(r, _)| r)
            .unwrap_or(Rating::E))
    }
}

pub fn rating_label(value: f64) -> Result<Rating> {
    RatingScale::default().label(value)
}
