//! The property database: raw measurements per (dataset, model, property) and
//! their relative index scores.
//!
//! An index score divides the best (smallest) measurement on a dataset by the
//! candidate's measurement, so the best candidate scores exactly 1 and worse
//! ones fall towards 0.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metafeatures::{dataset_features, FeatureSchema};
use crate::profiler::ResourceProfile;

/// Measurements below this are clamped before division.
pub const INDEX_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PcrGroup {
    #[serde(rename = "P")]
    Prediction,
    #[serde(rename = "C")]
    Complexity,
    #[serde(rename = "R")]
    Resources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropertySpec {
    pub name: &'static str,
    pub label: &'static str,
    pub group: PcrGroup,
    pub direction: Direction,
    pub unit: &'static str,
}

const fn lower(name: &'static str, label: &'static str, group: PcrGroup, unit: &'static str) -> PropertySpec {
    PropertySpec {
        name,
        label,
        group,
        direction: Direction::LowerIsBetter,
        unit,
    }
}

/// The nine default properties, in display order.
pub const PROPERTIES: [PropertySpec; 9] = [
    lower("mase", "Test MASE", PcrGroup::Prediction, "ratio"),
    lower("rmse", "Test RMSE", PcrGroup::Prediction, "series units"),
    lower("mape", "Test MAPE", PcrGroup::Prediction, "fraction"),
    lower("param_count", "Number of Parameters", PcrGroup::Complexity, "count"),
    lower("model_size", "Model Size on Disc", PcrGroup::Complexity, "bytes"),
    lower("train_power", "Training Power Draw", PcrGroup::Resources, "kWh"),
    lower("train_time", "Training Time", PcrGroup::Resources, "s"),
    lower("infer_power", "Power Draw per Inference", PcrGroup::Resources, "kWh/prediction"),
    lower("infer_time", "Running Time per Inference", PcrGroup::Resources, "s/prediction"),
];

pub fn property_spec(name: &str) -> Result<&'static PropertySpec> {
    PROPERTIES
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownProperty(name.to_string()))
}

pub fn property_names() -> impl Iterator<Item = &'static str> {
    PROPERTIES.iter().map(|p| p.name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Undefined,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub dataset: String,
    pub group: String,
    pub model: String,
    pub property: String,
    /// `null` unless `status` is `ok`.
    pub raw_value: Option<f64>,
    pub unit: String,
    pub status: RecordStatus,
}

impl PropertyRecord {
    pub fn ok(dataset: &str, group: &str, model: &str, property: &str, raw_value: f64) -> Result<Self> {
        let spec = property_spec(property)?;
        Ok(Self {
            dataset: dataset.to_string(),
            group: group.to_string(),
            model: model.to_string(),
            property: property.to_string(),
            raw_value: Some(raw_value),
            unit: spec.unit.to_string(),
            status: RecordStatus::Ok,
        })
    }

    pub fn missing(dataset: &str, group: &str, model: &str, property: &str, status: RecordStatus) -> Result<Self> {
        let spec = property_spec(property)?;
        Ok(Self {
            dataset: dataset.to_string(),
            group: group.to_string(),
            model: model.to_string(),
            property: property.to_string(),
            raw_value: None,
            unit: spec.unit.to_string(),
            status,
        })
    }

    /// The raw value of an `ok` record.
    pub fn value(&self) -> Option<f64> {
        match self.status {
            RecordStatus::Ok => self.raw_value,
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        property_spec(&self.property)?;
        if self.dataset.is_empty() || self.model.is_empty() {
            return Err(Error::InvalidArgument("record needs dataset and model".into()));
        }
        if self.status == RecordStatus::Ok && !self.raw_value.is_some_and(f64::is_finite) {
            return Err(Error::InvalidArgument(format!(
                "ok record ({}, {}, {}) without a finite raw value",
                self.dataset, self.model, self.property
            )));
        }
        Ok(())
    }
}

/// Per-dataset context kept next to the measurements, needed to build meta-learning rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub group: String,
    pub horizon: usize,
    pub season_length: usize,
    pub num_series: usize,
    /// Dataset meta-features in `DATASET_FEATURES` order.
    pub features: Vec<f64>,
}

impl DatasetMeta {
    pub fn from_dataset(d: &Dataset) -> Self {
        Self {
            group: d.group.clone(),
            horizon: d.horizon,
            season_length: d.season_length,
            num_series: d.num_series(),
            features: dataset_features(d),
        }
    }

    pub fn num_predictions(&self) -> usize {
        self.num_series * self.horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Replaced,
}

type RecordKey = (String, String, String);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropertyDatabase {
    records: IndexMap<RecordKey, PropertyRecord>,
    schema: Option<FeatureSchema>,
    datasets: BTreeMap<String, DatasetMeta>,
}

/// Sidecar written next to the JSON-lines file.
#[derive(Debug, Serialize, Deserialize)]
struct FeatureFile {
    names: Vec<String>,
    schema_hash: String,
    schema: FeatureSchema,
    datasets: BTreeMap<String, DatasetMeta>,
}

pub fn features_path(db_path: &Path) -> PathBuf {
    db_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("features.json")
}

impl PropertyDatabase {
    pub fn new(schema: FeatureSchema) -> Self {
        Self {
            schema: Some(schema),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn schema(&self) -> Option<&FeatureSchema> {
        self.schema.as_ref()
    }

    pub fn set_schema(&mut self, schema: FeatureSchema) {
        self.schema = Some(schema);
    }

    pub fn register_dataset(&mut self, name: &str, meta: DatasetMeta) {
        self.datasets.insert(name.to_string(), meta);
    }

    pub fn dataset_meta(&self, name: &str) -> Option<&DatasetMeta> {
        self.datasets.get(name)
    }

    pub fn dataset_metas(&self) -> &BTreeMap<String, DatasetMeta> {
        &self.datasets
    }

    pub fn insert(&mut self, record: PropertyRecord) -> Result<InsertOutcome> {
        record.validate()?;
        let key = (record.dataset.clone(), record.model.clone(), record.property.clone());
        match self.records.insert(key, record) {
            None => Ok(InsertOutcome::Inserted),
            Some(old) => {
                log::warn!(
                    "replaced record ({}, {}, {})",
                    old.dataset,
                    old.model,
                    old.property
                );
                Ok(InsertOutcome::Replaced)
            }
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &PropertyRecord> {
        self.records.values()
    }

    pub fn get(&self, dataset: &str, model: &str, property: &str) -> Option<&PropertyRecord> {
        self.records
            .get(&(dataset.to_string(), model.to_string(), property.to_string()))
    }

    /// Distinct dataset names among the records, sorted.
    pub fn datasets(&self) -> Vec<String> {
        let mut v: Vec<String> = self.records.values().map(|r| r.dataset.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Distinct model keys among the records, sorted.
    pub fn models(&self) -> Vec<String> {
        let mut v: Vec<String> = self.records.values().map(|r| r.model.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Raw values of `ok` records for (dataset, property), keyed by model.
    pub fn raw_values(&self, dataset: &str, property: &str) -> BTreeMap<String, f64> {
        self.records
            .values()
            .filter(|r| r.dataset == dataset && r.property == property)
            .filter_map(|r| r.value().map(|v| (r.model.clone(), v)))
            .collect()
    }

    pub fn index_scores(&self, dataset: &str, property: &str) -> Result<BTreeMap<String, f64>> {
        let spec = property_spec(property)?;
        let raw = self.raw_values(dataset, property);
        if raw.is_empty() {
            return Err(Error::PropertyUnavailable {
                dataset: dataset.to_string(),
                property: property.to_string(),
            });
        }
        Ok(index_scale(&raw, spec.direction))
    }

    /// Model with the minimum raw value; ties go to the lexicographically first key.
    pub fn best_model(&self, dataset: &str, property: &str) -> Result<String> {
        let spec = property_spec(property)?;
        let raw = self.raw_values(dataset, property);
        let better = |a: f64, b: f64| match spec.direction {
            Direction::LowerIsBetter => a < b,
            Direction::HigherIsBetter => a > b,
        };
        let mut best: Option<(&String, f64)> = None;
        // BTreeMap iterates in key order, so strict comparison keeps the first tie.
        for (model, &v) in &raw {
            if best.is_none_or(|(_, b)| better(v, b)) {
                best = Some((model, v));
            }
        }
        best.map(|(m, _)| m.clone()).ok_or_else(|| Error::PropertyUnavailable {
            dataset: dataset.to_string(),
            property: property.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for record in self.records.values() {
            serde_json::to_writer(&mut out, record)?;
            out.push(b'\n');
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))?;

        if let Some(schema) = &self.schema {
            let sidecar = FeatureFile {
                names: schema.names.clone(),
                schema_hash: schema.hash(),
                schema: schema.clone(),
                datasets: self.datasets.clone(),
            };
            let fpath = features_path(path);
            let body = serde_json::to_string_pretty(&sidecar)? + "\n";
            fs::write(&fpath, body).map_err(|e| Error::io(&fpath, e))?;
        }
        Ok(())
    }

    /// Loads the JSON-lines file and, when present, the `features.json` sidecar.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut db = PropertyDatabase::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let record: PropertyRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            db.insert(record).map_err(|e| parse_err(e.to_string()))?;
        }

        let fpath = features_path(path);
        if fpath.exists() {
            let text = fs::read_to_string(&fpath).map_err(|e| Error::io(&fpath, e))?;
            let sidecar: FeatureFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: fpath.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            if sidecar.schema.hash() != sidecar.schema_hash || sidecar.names != sidecar.schema.names {
                return Err(Error::SchemaMismatch {
                    expected: sidecar.schema_hash,
                    found: sidecar.schema.hash(),
                });
            }
            db.schema = Some(sidecar.schema);
            db.datasets = sidecar.datasets;
        }
        Ok(db)
    }
}

/// Relative index scale over one (dataset, property) measurement map.
pub fn index_scale(raw: &BTreeMap<String, f64>, direction: Direction) -> BTreeMap<String, f64> {
    let clamped: Vec<(&String, f64)> = raw.iter().map(|(m, &v)| (m, v.max(INDEX_EPSILON))).collect();
    match direction {
        Direction::LowerIsBetter => {
            let best = clamped.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
            clamped.into_iter().map(|(m, v)| (m.clone(), best / v)).collect()
        }
        Direction::HigherIsBetter => {
            let best = clamped.iter().map(|(_, v)| *v).fold(0.0, f64::max);
            clamped.into_iter().map(|(m, v)| (m.clone(), v / best)).collect()
        }
    }
}

/// The nine records for one profiled (dataset, model) run.
///
/// `errors` holds MASE, RMSE and MAPE in that order; an undefined metric becomes
/// a record with status `undefined`.
pub fn run_records(
    dataset: &str,
    group: &str,
    model: &str,
    errors: &[Result<f64>; 3],
    profile: &ResourceProfile,
) -> Result<Vec<PropertyRecord>> {
    let mut out = Vec::with_capacity(PROPERTIES.len());
    for (name, err) in ["mase", "rmse", "mape"].iter().zip(errors) {
        out.push(match err {
            Ok(v) if v.is_finite() => PropertyRecord::ok(dataset, group, model, name, *v)?,
            _ => PropertyRecord::missing(dataset, group, model, name, RecordStatus::Undefined)?,
        });
    }
    let resources = [
        ("param_count", profile.param_count as f64),
        ("model_size", profile.model_bytes as f64),
        ("train_power", profile.train_energy_kwh),
        ("train_time", profile.train_time_s),
        ("infer_power", profile.infer_energy_kwh_per_pred),
        ("infer_time", profile.infer_time_s_per_pred),
    ];
    for (name, v) in resources {
        out.push(PropertyRecord::ok(dataset, group, model, name, v)?);
    }
    Ok(out)
}

/// Nine `failed` records for a run that did not complete.
pub fn failed_records(dataset: &str, group: &str, model: &str) -> Result<Vec<PropertyRecord>> {
    PROPERTIES
        .iter()
        .map(|p| PropertyRecord::missing(dataset, group, model, p.name, RecordStatus::Failed))
        .collect()
}
