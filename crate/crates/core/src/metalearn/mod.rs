//! Interpretable meta-learners that estimate property index scores from
//! meta-features, grouped cross-validated method selection, and importances.

mod bundle;
mod cv;
mod knn;
mod ridge;
mod tree;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propertydb::{property_names, PropertyDatabase};
use crate::scoring::{compound, WeightVector};

pub use bundle::{LearnerBundle, TrainOutcome};
pub use cv::{grouped_folds, select_best, CvReport, FoldAssignment, MethodScore, Selection};
pub use tree::TreeNode;

/// Target name used for the directly learned compound score.
pub const COMPOUND: &str = "compound";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LinearRidge,
    DecisionTree,
    Knn,
}

impl Method {
    /// Every method, in tie-break order.
    pub const ALL: [Method; 3] = [Method::LinearRidge, Method::DecisionTree, Method::Knn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LinearRidge => "linear_ridge",
            Method::DecisionTree => "decision_tree",
            Method::Knn => "knn",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown meta-learner method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub ridge_lambda: f64,
    /// `None` grows the tree until leaves are pure.
    pub tree_max_depth: Option<usize>,
    pub knn_k: usize,
    pub permutation_shuffles: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            ridge_lambda: 1e-3,
            tree_max_depth: Some(6),
            knn_k: 5,
            permutation_shuffles: 10,
            seed: 42,
        }
    }
}

/// Meta-learning rows for one target, with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaTable {
    pub target: String,
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub groups: Vec<String>,
    pub datasets: Vec<String>,
    pub models: Vec<String>,
}

impl MetaTable {
    pub fn new(target: impl Into<String>, feature_names: Vec<String>) -> Self {
        Self {
            target: target.into(),
            feature_names,
            rows: Vec::new(),
            targets: Vec::new(),
            groups: Vec::new(),
            datasets: Vec::new(),
            models: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>, target: f64, group: &str, dataset: &str, model: &str) -> Result<()> {
        if row.len() != self.feature_names.len() {
            return Err(Error::LengthMismatch(format!(
                "row of width {} for {} features",
                row.len(),
                self.feature_names.len()
            )));
        }
        self.rows.push(row);
        self.targets.push(target);
        self.groups.push(group.to_string());
        self.datasets.push(dataset.to_string());
        self.models.push(model.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        let mut g: Vec<&String> = self.groups.iter().collect();
        g.sort();
        g.dedup();
        g.len()
    }

    pub fn subset(&self, indices: &[usize]) -> MetaTable {
        MetaTable {
            target: self.target.clone(),
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i].clone()).collect(),
            datasets: indices.iter().map(|&i| self.datasets[i].clone()).collect(),
            models: indices.iter().map(|&i| self.models[i].clone()).collect(),
        }
    }

    /// Rows for every (dataset, model) pair with an index score for `property`.
    pub fn from_db(db: &PropertyDatabase, property: &str) -> Result<Self> {
        crate::propertydb::property_spec(property)?;
        Self::build(db, property, |dataset| match db.index_scores(dataset, property) {
            Ok(map) => Ok(map),
            Err(Error::PropertyUnavailable { .. }) => Ok(BTreeMap::new()),
            Err(e) => Err(e),
        })
    }

    /// Rows whose target is the true compound score under `weights`.
    pub fn compound_from_db(db: &PropertyDatabase, weights: &WeightVector) -> Result<Self> {
        Self::build(db, COMPOUND, |dataset| true_compound_scores(db, dataset, weights))
    }

    fn build<F>(db: &PropertyDatabase, target: &str, mut scores: F) -> Result<Self>
    where
        F: FnMut(&str) -> Result<BTreeMap<String, f64>>,
    {
        let schema = db
            .schema()
            .ok_or_else(|| Error::InsufficientData("property database has no feature schema".into()))?;
        let mut table = MetaTable::new(target, schema.names.clone());
        for (dataset, meta) in db.dataset_metas() {
            let per_model = scores(dataset)?;
            for model in schema.pool.keys() {
                if let Some(&y) = per_model.get(model) {
                    let row = schema.build_row(&meta.features, model)?;
                    table.push(row.values, y, &meta.group, dataset, model)?;
                }
            }
        }
        Ok(table)
    }
}

/// True index scores of every property for one dataset, keyed by property then model.
pub fn true_index_table(db: &PropertyDatabase, dataset: &str) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let mut out = BTreeMap::new();
    for p in property_names() {
        match db.index_scores(dataset, p) {
            Ok(map) => {
                out.insert(p.to_string(), map);
            }
            Err(Error::PropertyUnavailable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// True compound score per model on one dataset (models with no ok record are absent).
pub fn true_compound_scores(
    db: &PropertyDatabase,
    dataset: &str,
    weights: &WeightVector,
) -> Result<BTreeMap<String, f64>> {
    let table = true_index_table(db, dataset)?;
    let mut models: Vec<&String> = table.values().flat_map(|m| m.keys()).collect();
    models.sort();
    models.dedup();
    let mut out = BTreeMap::new();
    for model in models {
        let estimates: BTreeMap<String, f64> = table
            .iter()
            .filter_map(|(p, m)| m.get(model).map(|v| (p.clone(), *v)))
            .collect();
        if let Ok(score) = compound(&estimates, weights) {
            out.insert(model.clone(), score.value);
        }
    }
    Ok(out)
}

/// Per-feature z-scoring fitted on training rows; zero-variance features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>], width: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Constant { value: f64 },
    Ridge { intercept: f64, coefficients: Vec<f64> },
    Tree { nodes: Vec<TreeNode> },
    Knn { k: usize, rows: Vec<Vec<f64>>, targets: Vec<f64> },
}

impl Regressor {
    fn predict_standardized(&self, z: &[f64]) -> f64 {
        match self {
            Regressor::Constant { value } => *value,
            Regressor::Ridge { intercept, coefficients } => {
                intercept + coefficients.iter().zip(z).map(|(c, x)| c * x).sum::<f64>()
            }
            Regressor::Tree { nodes } => tree::predict(nodes, z),
            Regressor::Knn { k, rows, targets } => knn::predict(*k, rows, targets, z),
        }
    }
}

/// A fitted estimator for one property (or the compound score).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLearner {
    pub property: String,
    pub method: Method,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub regressor: Regressor,
    /// Aligned with `feature_names`; non-negative and summing to 1.
    pub importances: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn uniform(width: usize) -> Vec<f64> {
    vec![1.0 / width as f64; width]
}

/// Normalizes non-negative scores to sum 1; all-zero input becomes uniform.
fn normalize_importances(raw: Vec<f64>) -> Vec<f64> {
    let raw: Vec<f64> = raw.into_iter().map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 }).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.into_iter().map(|v| v / total).collect()
    } else {
        uniform(raw.len())
    }
}

impl MetaLearner {
    /// Fits `method` on the table. Importances are computed as well.
    pub fn fit(table: &MetaTable, method: Method, config: &LearnerConfig) -> Result<Self> {
        Self::fit_inner(table, method, config, true)
    }

    pub(crate) fn fit_inner(
        table: &MetaTable,
        method: Method,
        config: &LearnerConfig,
        with_importances: bool,
    ) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::InsufficientData(format!("no training rows for `{}`", table.target)));
        }
        if table.targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite target for `{}`", table.target)));
        }
        let width = table.feature_names.len();
        let standardizer = Standardizer::fit(&table.rows, width);
        let z: Vec<Vec<f64>> = table.rows.iter().map(|r| standardizer.transform(r)).collect();

        let first = table.targets[0];
        if table.targets.iter().all(|&t| t == first) {
            // fold refits would repeat the same warning once per fold
            if with_importances {
                log::warn!("all targets for `{}` equal {first}; using a constant predictor", table.target);
            }
            return Ok(Self {
                property: table.target.clone(),
                method,
                feature_names: table.feature_names.clone(),
                standardizer,
                regressor: Regressor::Constant { value: first },
                importances: uniform(width),
                warnings: vec![format!("degenerate targets: constant predictor {first}")],
            });
        }

        let (regressor, importances) = match method {
            Method::LinearRidge => {
                let (intercept, coefficients) = ridge::fit(&z, &table.targets, config.ridge_lambda)?;
                let imp = normalize_importances(coefficients.iter().map(|c| c.abs()).collect());
                (Regressor::Ridge { intercept, coefficients }, imp)
            }
            Method::DecisionTree => {
                let (nodes, gains) = tree::fit(&z, &table.targets, config.tree_max_depth);
                (Regressor::Tree { nodes }, normalize_importances(gains))
            }
            Method::Knn => {
                let k = config.knn_k.max(1).min(z.len());
                let regressor = Regressor::Knn {
                    k,
                    rows: z.clone(),
                    targets: table.targets.clone(),
                };
                let imp = if with_importances {
                    normalize_importances(knn::permutation_importance(
                        k,
                        &z,
                        &table.targets,
                        config.permutation_shuffles,
                        config.seed,
                    ))
                } else {
                    uniform(width)
                };
                (regressor, imp)
            }
        };
        Ok(Self {
            property: table.target.clone(),
            method,
            feature_names: table.feature_names.clone(),
            standardizer,
            regressor,
            importances,
            warnings: Vec::new(),
        })
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.feature_names.len() {
            return Err(Error::LengthMismatch(format!(
                "row of width {} for learner with {} features",
                row.len(),
                self.feature_names.len()
            )));
        }
        Ok(self.regressor.predict_standardized(&self.standardizer.transform(row)))
    }

    pub fn importances(&self) -> IndexMap<String, f64> {
        self.feature_names
            .iter()
            .cloned()
            .zip(self.importances.iter().copied())
            .collect()
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.regressor, Regressor::Constant { .. })
    }
}

fn require_groups(table: &MetaTable) -> Result<()> {
    let groups = table.num_groups();
    if groups < 2 {
        return Err(Error::InsufficientData(format!(
            "`{}` has ok targets in {groups} group(s); need at least 2",
            table.target
        )));
    }
    Ok(())
}

pub fn train_metalearner(
    db: &PropertyDatabase,
    property: &str,
    method: Method,
    config: &LearnerConfig,
) -> Result<MetaLearner> {
    let table = MetaTable::from_db(db, property)?;
    require_groups(&table)?;
    MetaLearner::fit(&table, method, config)
}

/// A single regressor on true compound scores, the alternative to aggregating
/// per-property estimates.
pub fn train_direct_compound(
    db: &PropertyDatabase,
    weights: &WeightVector,
    method: Method,
    config: &LearnerConfig,
) -> Result<MetaLearner> {
    let table = MetaTable::compound_from_db(db, weights)?;
    require_groups(&table)?;
    MetaLearner::fit(&table, method, config)
}
