use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{select_best, CvReport, LearnerConfig, MetaLearner, MetaTable, Method, Selection};
use crate::error::{Error, Result};
use crate::metafeatures::FeatureSchema;
use crate::propertydb::{property_names, PropertyDatabase};
use crate::scoring::WeightVector;

/// Every fitted learner plus the schema they were trained on, stored as one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerBundle {
    pub schema_hash: String,
    pub schema: FeatureSchema,
    pub config: LearnerConfig,
    /// One learner per property, in property display order.
    pub learners: IndexMap<String, MetaLearner>,
    /// Direct compound learner, trained on `compound_weights`.
    pub compound: Option<MetaLearner>,
    pub compound_weights: WeightVector,
    pub cv_reports: IndexMap<String, CvReport>,
}

/// Results of training, including out-of-fold predictions for reporting.
pub struct TrainOutcome {
    pub bundle: LearnerBundle,
    pub tables: IndexMap<String, MetaTable>,
    pub selections: IndexMap<String, Selection>,
}

impl LearnerBundle {
    /// Selects and fits a learner per property and one direct compound learner.
    /// Properties without any ok record are skipped.
    pub fn train(
        db: &PropertyDatabase,
        weights: &WeightVector,
        n_folds: usize,
        config: &LearnerConfig,
    ) -> Result<TrainOutcome> {
        let schema = db
            .schema()
            .cloned()
            .ok_or_else(|| Error::InsufficientData("property database has no feature schema".into()))?;
        let mut tables = IndexMap::new();
        for p in property_names() {
            let table = MetaTable::from_db(db, p)?;
            if table.is_empty() {
                log::warn!("no ok records for `{p}`; skipping its learner");
                continue;
            }
            tables.insert(p.to_string(), table);
        }
        let compound_table = MetaTable::compound_from_db(db, weights)?;
        tables.insert(super::COMPOUND.to_string(), compound_table);

        let mut selections = IndexMap::new();
        for (target, table) in &tables {
            let sel = select_best(table, &Method::ALL, n_folds, config).map_err(|e| e.context(format!("training `{target}`")))?;
            selections.insert(target.clone(), sel);
        }
        let mut learners = IndexMap::new();
        let mut cv_reports = IndexMap::new();
        let mut compound = None;
        for (target, sel) in &selections {
            cv_reports.insert(target.clone(), sel.report.clone());
            if target == super::COMPOUND {
                compound = Some(sel.learner.clone());
            } else {
                learners.insert(target.clone(), sel.learner.clone());
            }
        }
        Ok(TrainOutcome {
            bundle: LearnerBundle {
                schema_hash: schema.hash(),
                schema,
                config: *config,
                learners,
                compound,
                compound_weights: weights.clone(),
                cv_reports,
            },
            tables,
            selections,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// SHA-256 of the serialized bundle, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: LearnerBundle = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        bundle.verify()?;
        Ok(bundle)
    }

    /// Checks the stored hash and that each learner uses the bundle's feature names.
    pub fn verify(&self) -> Result<()> {
        let found = self.schema.hash();
        if found != self.schema_hash {
            return Err(Error::SchemaMismatch {
                expected: self.schema_hash.clone(),
                found,
            });
        }
        for l in self.learners.values().chain(self.compound.as_ref()) {
            if l.feature_names != self.schema.names {
                return Err(Error::SchemaMismatch {
                    expected: self.schema_hash.clone(),
                    found: format!("learner `{}` with {} features", l.property, l.feature_names.len()),
                });
            }
        }
        Ok(())
    }

    /// Errors unless `schema` is the one the learners were trained on.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let found = schema.hash();
        if found != self.schema_hash {
            return Err(Error::SchemaMismatch {
                expected: self.schema_hash.clone(),
                found,
            });
        }
        Ok(())
    }
}
