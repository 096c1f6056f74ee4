//! Ranking candidate models by estimated compound score, with explanations.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metafeatures::{dataset_features, FeatureSchema};
use crate::metalearn::{LearnerBundle, COMPOUND};
use crate::propertydb::{property_names, PropertyDatabase};
use crate::scoring::{clamp_index, compound, Rating, RatingScale, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Estimate every property, then combine with the weights.
    Compositional,
    /// One learner estimates the compound score directly.
    Direct,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Compositional => "compositional",
            Mode::Direct => "direct",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compositional" => Ok(Mode::Compositional),
            "direct" => Ok(Mode::Direct),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub model: String,
    pub compound: f64,
    /// Clamped per-property estimates; empty in direct mode.
    pub estimates: IndexMap<String, f64>,
    /// Share of the compound score per property; empty in direct mode.
    pub contributions: IndexMap<String, f64>,
    /// Rating per property plus `compound` for the overall score.
    pub labels: IndexMap<String, Rating>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub dataset: String,
    pub mode: Mode,
    pub weights: WeightVector,
    pub ranking: Vec<RankedModel>,
}

impl Recommendation {
    pub fn top(&self) -> Option<&str> {
        self.ranking.first().map(|r| r.model.as_str())
    }

    pub fn top_k(&self, k: usize) -> Vec<&str> {
        self.ranking.iter().take(k).map(|r| r.model.as_str()).collect()
    }

    pub fn get(&self, model: &str) -> Option<&RankedModel> {
        self.ranking.iter().find(|r| r.model == model)
    }

    /// Keeps only the first `k` entries.
    pub fn truncate(mut self, k: usize) -> Self {
        self.ranking.truncate(k);
        self
    }
}

/// Descending by score, ties by model key.
pub fn rank_order(scores: &BTreeMap<String, f64>) -> Vec<String> {
    let mut v: Vec<(&String, f64)> = scores.iter().map(|(m, s)| (m, *s)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().map(|(m, _)| m.clone()).collect()
}

fn sort_ranking(ranking: &mut [RankedModel]) {
    ranking.sort_by(|a, b| b.compound.total_cmp(&a.compound).then_with(|| a.model.cmp(&b.model)));
}

/// Compositional ranking from per-model property estimates.
pub fn rank_estimates(
    dataset: &str,
    estimates: &BTreeMap<String, BTreeMap<String, f64>>,
    weights: &WeightVector,
    scale: &RatingScale,
) -> Result<Recommendation> {
    let mut ranking = Vec::with_capacity(estimates.len());
    for (model, est) in estimates {
        let score = compound(est, weights).map_err(|e| e.context(format!("model `{model}`")))?;
        let mut labels = IndexMap::new();
        // labels cover every estimated property, weighted or not
        let ordered: IndexMap<String, f64> = property_names()
            .filter_map(|p| est.get(p).map(|v| (p.to_string(), clamp_index(*v).0)))
            .collect();
        for (p, v) in &ordered {
            labels.insert(p.clone(), scale.label(*v)?);
        }
        labels.insert(COMPOUND.to_string(), scale.label(score.value)?);
        ranking.push(RankedModel {
            model: model.clone(),
            compound: score.value,
            contributions: score.contributions(),
            estimates: ordered,
            labels,
            missing: score.missing.clone(),
            clamped: score.clamped,
        });
    }
    sort_ranking(&mut ranking);
    Ok(Recommendation {
        dataset: dataset.to_string(),
        mode: Mode::Compositional,
        weights: weights.clone(),
        ranking,
    })
}

/// Direct ranking from compound estimates per model.
pub fn rank_direct(
    dataset: &str,
    scores: &BTreeMap<String, f64>,
    weights: &WeightVector,
    scale: &RatingScale,
) -> Result<Recommendation> {
    let mut ranking = Vec::with_capacity(scores.len());
    for (model, raw) in scores {
        let (value, clamped) = clamp_index(*raw);
        let mut labels = IndexMap::new();
        labels.insert(COMPOUND.to_string(), scale.label(value)?);
        ranking.push(RankedModel {
            model: model.clone(),
            compound: value,
            estimates: IndexMap::new(),
            contributions: IndexMap::new(),
            labels,
            missing: Vec::new(),
            clamped,
        });
    }
    sort_ranking(&mut ranking);
    Ok(Recommendation {
        dataset: dataset.to_string(),
        mode: Mode::Direct,
        weights: weights.clone(),
        ranking,
    })
}

/// Per-model, per-property estimates from the bundle's property learners.
pub fn estimate_properties(
    bundle: &LearnerBundle,
    features: &[f64],
) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let mut out = BTreeMap::new();
    for model in bundle.schema.pool.keys() {
        let row = bundle.schema.build_row(features, model)?;
        let mut est = BTreeMap::new();
        for (p, learner) in &bundle.learners {
            est.insert(p.clone(), learner.predict(&row.values)?);
        }
        out.insert(model.to_string(), est);
    }
    Ok(out)
}

/// Per-model compound estimates from the bundle's direct learner.
pub fn estimate_direct(bundle: &LearnerBundle, features: &[f64]) -> Result<BTreeMap<String, f64>> {
    let learner = bundle
        .compound
        .as_ref()
        .ok_or_else(|| Error::InsufficientData("bundle has no direct compound learner".into()))?;
    let mut out = BTreeMap::new();
    for model in bundle.schema.pool.keys() {
        let row = bundle.schema.build_row(features, model)?;
        out.insert(model.to_string(), learner.predict(&row.values)?);
    }
    Ok(out)
}

/// Recommendation for a dataset described by its meta-features.
pub fn recommend_features(
    bundle: &LearnerBundle,
    dataset: &str,
    features: &[f64],
    weights: &WeightVector,
    mode: Mode,
) -> Result<Recommendation> {
    let scale = RatingScale::default();
    match mode {
        Mode::Compositional => rank_estimates(dataset, &estimate_properties(bundle, features)?, weights, &scale),
        Mode::Direct => {
            if bundle.compound_weights != *weights {
                log::warn!("direct learner was trained on other weights; its scores ignore the requested ones");
            }
            rank_direct(dataset, &estimate_direct(bundle, features)?, weights, &scale)
        }
    }
}

/// Recommendation for an unseen dataset. `schema` is the caller's expected layout;
/// it must match the one the bundle was trained on.
pub fn recommend(
    d: &Dataset,
    bundle: &LearnerBundle,
    schema: &FeatureSchema,
    weights: &WeightVector,
    mode: Mode,
) -> Result<Recommendation> {
    bundle.check_schema(schema)?;
    recommend_features(bundle, &d.name, &dataset_features(d), weights, mode)
}

/// Exhaustive ranking of the measured models on a DB dataset, using true index scores.
pub fn oracle_recommendation(db: &PropertyDatabase, dataset: &str, weights: &WeightVector) -> Result<Recommendation> {
    let table = crate::metalearn::true_index_table(db, dataset)?;
    let mut per_model: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (p, models) in table {
        for (m, v) in models {
            per_model.entry(m).or_default().insert(p.clone(), v);
        }
    }
    if per_model.is_empty() {
        return Err(Error::UnknownDataset(dataset.to_string()));
    }
    rank_estimates(dataset, &per_model, weights, &RatingScale::default())
}

/// Why a model scored as it did: estimates, contributions, ratings and the
/// learners' feature importances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub dataset: String,
    pub model: String,
    pub rank: usize,
    pub compound: f64,
    pub estimates: IndexMap<String, f64>,
    pub contributions: IndexMap<String, f64>,
    pub labels: IndexMap<String, Rating>,
    /// Per property: feature importances of its learner, largest first.
    pub importances: IndexMap<String, Vec<(String, f64)>>,
    pub learner_methods: IndexMap<String, String>,
}

pub fn explain(
    bundle: &LearnerBundle,
    dataset: &str,
    features: &[f64],
    model: &str,
    weights: &WeightVector,
) -> Result<Explanation> {
    if !bundle.schema.pool.contains(model) {
        return Err(Error::UnknownModel(model.to_string()));
    }
    let rec = recommend_features(bundle, dataset, features, weights, Mode::Compositional)?;
    let rank = rec.ranking.iter().position(|r| r.model == model).expect("pool model is ranked");
    let entry = &rec.ranking[rank];
    let mut importances = IndexMap::new();
    let mut learner_methods = IndexMap::new();
    for (p, learner) in &bundle.learners {
        let mut imp: Vec<(String, f64)> = learner.importances().into_iter().collect();
        imp.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        importances.insert(p.clone(), imp);
        learner_methods.insert(p.clone(), learner.method.to_string());
    }
    Ok(Explanation {
        dataset: dataset.to_string(),
        model: model.to_string(),
        rank: rank + 1,
        compound: entry.compound,
        estimates: entry.estimates.clone(),
        contributions: entry.contributions.clone(),
        labels: entry.labels.clone(),
        importances,
        learner_methods,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarSource {
    True,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarSeries {
    pub model: String,
    /// Aligned with the profile's axes; `None` where neither a record nor an estimate exists.
    pub values: Vec<Option<f64>>,
    pub sources: Vec<StarSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarProfile {
    pub dataset: String,
    pub axes: Vec<String>,
    pub series: Vec<StarSeries>,
}

/// Index vectors for plotting, one per requested model, in property display order.
///
/// Each axis takes the true index score when `db` has an ok record for it and
/// otherwise the clamped estimate from `estimator` (bundle plus dataset features).
pub fn star_profile(
    dataset: &str,
    models: &[&str],
    db: Option<&PropertyDatabase>,
    estimator: Option<(&LearnerBundle, &[f64])>,
) -> Result<StarProfile> {
    let truth = match db {
        Some(db) => crate::metalearn::true_index_table(db, dataset)?,
        None => BTreeMap::new(),
    };
    let estimates = match estimator {
        Some((bundle, features)) => estimate_properties(bundle, features)?,
        None => BTreeMap::new(),
    };
    if truth.is_empty() && estimates.is_empty() {
        return Err(Error::UnknownDataset(dataset.to_string()));
    }
    let mut series = Vec::new();
    for &m in models {
        let known = truth.values().any(|t| t.contains_key(m)) || estimates.contains_key(m);
        if !known {
            return Err(Error::UnknownModel(m.to_string()));
        }
        let (values, sources) = property_names()
            .map(|p| match truth.get(p).and_then(|t| t.get(m)) {
                Some(v) => (Some(*v), StarSource::True),
                None => (
                    estimates.get(m).and_then(|e| e.get(p)).map(|v| clamp_index(*v).0),
                    StarSource::Estimated,
                ),
            })
            .unzip();
        series.push(StarSeries {
            model: m.to_string(),
            values,
            sources,
        });
    }
    Ok(StarProfile {
        dataset: dataset.to_string(),
        axes: property_names().map(str::to_string).collect(),
        series,
    })
}
