//! Meta-learner quality measures, top-k convergence curves and the end-to-end study.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{train_test_split, Dataset};
use crate::error::{Error, Result};
use crate::forecasters::ModelPool;
use crate::metafeatures::FeatureSchema;
use crate::metalearn::{true_compound_scores, CvReport, LearnerBundle, LearnerConfig, COMPOUND};
use crate::metrics;
use crate::profiler::{profile_fit_predict, ProfilerConfig};
use crate::propertydb::{failed_records, property_names, run_records, DatasetMeta, PropertyDatabase};
use crate::recommender::{oracle_recommendation, rank_direct, rank_estimates, rank_order, Mode};
use crate::scoring::{RatingScale, WeightVector};

/// Threshold on `|f - f̂|` for measure (b).
pub const DEFAULT_THRESHOLD: f64 = 0.1;
/// Cut-off for the top-k measures (d) and (e).
pub const TOP_K: usize = 5;

/// Measures (a) to (e) on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    /// (a) mean absolute estimation error.
    pub abs_error: f64,
    /// (b) fraction of models estimated within the threshold.
    pub within_threshold: f64,
    /// (c) 1 when the estimated best model is the true best.
    pub top1: f64,
    /// (d) 1 when the true best is among the five best estimates.
    pub top5_hit: f64,
    /// (e) size of the overlap of the true and estimated top five.
    pub top5_overlap: f64,
}

/// Measures for one dataset. With fewer than five models the top-k cut-off is the model count.
pub fn quality_measures(
    truth: &BTreeMap<String, f64>,
    estimates: &BTreeMap<String, f64>,
    threshold: f64,
) -> Result<Measures> {
    if truth.is_empty() || !truth.keys().eq(estimates.keys()) {
        return Err(Error::LengthMismatch(format!(
            "true scores for {:?} but estimates for {:?}",
            truth.keys().collect::<Vec<_>>(),
            estimates.keys().collect::<Vec<_>>()
        )));
    }
    let n = truth.len() as f64;
    let errors: Vec<f64> = truth.iter().map(|(m, f)| (f - estimates[m]).abs()).collect();
    let true_order = rank_order(truth);
    let est_order = rank_order(estimates);
    let k = TOP_K.min(truth.len());
    let est_top = &est_order[..k];
    let overlap = true_order[..k].iter().filter(|m| est_top.contains(m)).count();
    Ok(Measures {
        abs_error: errors.iter().sum::<f64>() / n,
        within_threshold: errors.iter().filter(|e| **e < threshold).count() as f64 / n,
        top1: f64::from(u8::from(true_order[0] == est_order[0])),
        top5_hit: f64::from(u8::from(est_top.contains(&true_order[0]))),
        top5_overlap: overlap as f64,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub datasets: usize,
    pub abs_error: Summary,
    pub within_threshold: Summary,
    pub top1: Summary,
    pub top5_hit: Summary,
    pub top5_overlap: Summary,
}

impl MeasureSummary {
    pub fn of(per_dataset: &[Measures]) -> Self {
        let col = |f: fn(&Measures) -> f64| Summary::of(&per_dataset.iter().map(f).collect::<Vec<_>>());
        Self {
            datasets: per_dataset.len(),
            abs_error: col(|m| m.abs_error),
            within_threshold: col(|m| m.within_threshold),
            top1: col(|m| m.top1),
            top5_hit: col(|m| m.top5_hit),
            top5_overlap: col(|m| m.top5_overlap),
        }
    }
}

/// Per-target measures across validation datasets; rows are properties then `compound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub threshold: f64,
    pub rows: IndexMap<String, MeasureSummary>,
    /// Per target, per dataset.
    pub per_dataset: IndexMap<String, BTreeMap<String, Measures>>,
}

impl QualityReport {
    pub fn from_per_dataset(threshold: f64, per_dataset: IndexMap<String, BTreeMap<String, Measures>>) -> Self {
        let rows = per_dataset
            .iter()
            .map(|(t, m)| (t.clone(), MeasureSummary::of(&m.values().copied().collect::<Vec<_>>())))
            .collect();
        Self {
            threshold,
            rows,
            per_dataset,
        }
    }

    /// Summary table as CSV, one line per target.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "target,datasets,abs_error_mean,abs_error_std,within_threshold_mean,within_threshold_std,\
             top1_mean,top1_std,top5_hit_mean,top5_hit_std,top5_overlap_mean,top5_overlap_std\n",
        );
        for (t, s) in &self.rows {
            let cells: Vec<String> = [s.abs_error, s.within_threshold, s.top1, s.top5_hit, s.top5_overlap]
                .iter()
                .flat_map(|x| [x.mean.to_string(), x.std.to_string()])
                .collect();
            out.push_str(&format!("{t},{},{}\n", s.datasets, cells.join(",")));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub k: usize,
    /// Best true MASE overall divided by the best true MASE among the top k; 1 is optimal.
    pub quality_ratio: f64,
    /// Energy of evaluating the top k divided by the energy of evaluating every model.
    pub cost_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub dataset: String,
    pub points: Vec<ConvergencePoint>,
}

/// Total evaluation energy of one model on a dataset: training plus all predictions.
fn evaluation_energy(db: &PropertyDatabase, dataset: &str, model: &str) -> Result<f64> {
    let predictions = db
        .dataset_meta(dataset)
        .map(DatasetMeta::num_predictions)
        .ok_or_else(|| Error::UnknownDataset(dataset.to_string()))?;
    let value = |p: &str| {
        db.get(dataset, model, p).and_then(|r| r.value()).ok_or_else(|| Error::PropertyUnavailable {
            dataset: dataset.to_string(),
            property: format!("{p} of `{model}`"),
        })
    };
    Ok(value("train_power")? + value("infer_power")? * predictions as f64)
}

/// Curve for one dataset, testing models in `ranking` order.
pub fn convergence(db: &PropertyDatabase, dataset: &str, ranking: &[String]) -> Result<ConvergenceCurve> {
    // the MASE index is best/value, so its running maximum is exactly the quality ratio
    let mase = db.index_scores(dataset, "mase")?;
    let energy: Vec<f64> = ranking
        .iter()
        .map(|m| evaluation_energy(db, dataset, m))
        .collect::<Result<_>>()?;
    let total: f64 = energy.iter().sum();
    let mut best = 0.0f64;
    let mut spent = 0.0;
    let mut points = Vec::with_capacity(ranking.len());
    for (i, m) in ranking.iter().enumerate() {
        best = best.max(mase.get(m).copied().unwrap_or(0.0));
        spent += energy[i];
        let k = i + 1;
        let cost_ratio = if k == ranking.len() {
            1.0
        } else if total > 0.0 {
            spent / total
        } else {
            k as f64 / ranking.len() as f64
        };
        points.push(ConvergencePoint {
            k,
            quality_ratio: best,
            cost_ratio,
        });
    }
    Ok(ConvergenceCurve {
        dataset: dataset.to_string(),
        points,
    })
}

/// Pointwise mean over curves of equal length.
pub fn average_curve(curves: &[ConvergenceCurve]) -> Vec<ConvergencePoint> {
    let len = curves.iter().map(|c| c.points.len()).min().unwrap_or(0);
    let n = curves.len() as f64;
    (0..len)
        .map(|i| ConvergencePoint {
            k: i + 1,
            quality_ratio: curves.iter().map(|c| c.points[i].quality_ratio).sum::<f64>() / n,
            cost_ratio: curves.iter().map(|c| c.points[i].cost_ratio).sum::<f64>() / n,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub per_dataset: Vec<ConvergenceCurve>,
    pub average: Vec<ConvergencePoint>,
}

impl ConvergenceReport {
    pub fn new(per_dataset: Vec<ConvergenceCurve>) -> Self {
        let average = average_curve(&per_dataset);
        Self { per_dataset, average }
    }
}

/// Convergence curves as CSV with `average` rows last.
pub fn convergence_csv(curves: &IndexMap<Mode, ConvergenceReport>) -> String {
    let mut out = String::from("mode,dataset,k,quality_ratio,cost_ratio\n");
    for (mode, report) in curves {
        for c in &report.per_dataset {
            for p in &c.points {
                out.push_str(&format!("{},{},{},{},{}\n", mode.as_str(), c.dataset, p.k, p.quality_ratio, p.cost_ratio));
            }
        }
        for p in &report.average {
            out.push_str(&format!("{},average,{},{},{}\n", mode.as_str(), p.k, p.quality_ratio, p.cost_ratio));
        }
    }
    out
}

/// Profiles every (dataset, model) pair into a new database. Failed pairs become
/// `failed` records and a warning instead of aborting.
pub fn build_database(
    datasets: &[Dataset],
    pool: &ModelPool,
    config: &ProfilerConfig,
) -> Result<(PropertyDatabase, Vec<String>)> {
    config.validate()?;
    let mut db = PropertyDatabase::new(FeatureSchema::new(pool));
    let mut warnings = Vec::new();
    for d in datasets {
        if db.dataset_meta(&d.name).is_some() {
            return Err(Error::InvalidDataset(format!("dataset name `{}` given twice", d.name)));
        }
        db.register_dataset(&d.name, DatasetMeta::from_dataset(d));
        let split = train_test_split(d);
        for model in pool.keys() {
            let records = match profile_fit_predict(model, &split, config) {
                Ok(run) => {
                    let errors = metrics::evaluate(&split, &run.forecasts);
                    for e in errors.iter().filter_map(|e| e.as_ref().err()) {
                        warnings.push(format!("{}/{model}: {e}", d.name));
                    }
                    warnings.extend(run.profile.warnings.iter().map(|w| format!("{}/{model}: {w}", d.name)));
                    run_records(&d.name, &d.group, model, &errors, &run.profile)?
                }
                Err(e) => {
                    log::warn!("{}/{model} failed: {e}", d.name);
                    warnings.push(format!("{}/{model}: failed: {e}", d.name));
                    failed_records(&d.name, &d.group, model)?
                }
            };
            for r in records {
                db.insert(r)?;
            }
        }
    }
    Ok((db, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub seed: u64,
    pub n_folds: usize,
    pub weights: WeightVector,
    pub threshold: f64,
    pub profiler: ProfilerConfig,
    pub learner: LearnerConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_folds: 5,
            weights: WeightVector::default(),
            threshold: DEFAULT_THRESHOLD,
            profiler: ProfilerConfig::default(),
            learner: LearnerConfig::default(),
        }
    }
}

/// Everything the study reports, all computed on out-of-fold estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub seed: u64,
    pub n_folds: usize,
    pub num_datasets: usize,
    pub num_groups: usize,
    pub num_models: usize,
    pub db_rows: usize,
    pub weights: WeightVector,
    /// Per-property rows and the compositional compound row.
    pub quality: QualityReport,
    /// Compound-score measures, compositional next to direct.
    pub modes: IndexMap<Mode, MeasureSummary>,
    pub convergence: IndexMap<Mode, ConvergenceReport>,
    /// Top-1 accuracy of ranking with true index scores against exhaustive search.
    pub oracle_top1: f64,
    pub cv_reports: IndexMap<String, CvReport>,
    /// Out-of-fold rows whose group was also in training; 0 by construction.
    pub in_fold_evaluations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub struct StudyOutcome {
    pub db: PropertyDatabase,
    pub bundle: LearnerBundle,
    pub report: StudyReport,
}

/// Argmax with lexicographic ties.
fn argmax(scores: &BTreeMap<String, f64>) -> Option<String> {
    rank_order(scores).into_iter().next()
}

/// Profiles, trains with grouped cross-validation and reports on out-of-fold estimates.
pub fn run_study(datasets: &[Dataset], pool: &ModelPool, config: &StudyConfig) -> Result<StudyOutcome> {
    let (db, warnings) = build_database(datasets, pool, &config.profiler)?;
    let learner = LearnerConfig {
        seed: config.seed,
        ..config.learner
    };
    evaluate_database(db, pool, &learner, config, warnings)
}

/// The study after profiling, on an existing database.
pub fn evaluate_database(
    db: PropertyDatabase,
    pool: &ModelPool,
    learner: &LearnerConfig,
    config: &StudyConfig,
    warnings: Vec<String>,
) -> Result<StudyOutcome> {
    let outcome = LearnerBundle::train(&db, &config.weights, config.n_folds, learner)?;

    // out-of-fold estimate per (target, dataset, model) from each target's chosen method
    let mut oof: IndexMap<String, BTreeMap<String, BTreeMap<String, f64>>> = IndexMap::new();
    for (target, sel) in &outcome.selections {
        let table = &outcome.tables[target];
        let per = oof.entry(target.clone()).or_default();
        for (i, v) in sel.chosen_oof().iter().enumerate() {
            per.entry(table.datasets[i].clone()).or_default().insert(table.models[i].clone(), *v);
        }
    }

    let datasets: Vec<String> = db.dataset_metas().keys().cloned().collect();
    let scale = RatingScale::default();
    let mut per_target: IndexMap<String, BTreeMap<String, Measures>> = IndexMap::new();
    for p in property_names() {
        let Some(est) = oof.get(p) else { continue };
        let mut rows = BTreeMap::new();
        for d in &datasets {
            let (Ok(truth), Some(e)) = (db.index_scores(d, p), est.get(d)) else { continue };
            rows.insert(d.clone(), quality_measures(&truth, e, config.threshold)?);
        }
        per_target.insert(p.to_string(), rows);
    }

    let mut mode_rows: IndexMap<Mode, BTreeMap<String, Measures>> = IndexMap::new();
    let mut curves: IndexMap<Mode, Vec<ConvergenceCurve>> = IndexMap::new();
    let mut oracle_hits = 0usize;
    for d in &datasets {
        let truth = true_compound_scores(&db, d, &config.weights)?;
        if truth.is_empty() {
            continue;
        }
        let oracle = oracle_recommendation(&db, d, &config.weights)?;
        if oracle.top().map(str::to_string) == argmax(&truth) {
            oracle_hits += 1;
        }

        // per-model property estimates for this dataset
        let mut estimates: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for p in property_names() {
            if let Some(per_model) = oof.get(p).and_then(|t| t.get(d)) {
                for (m, v) in per_model {
                    estimates.entry(m.clone()).or_default().insert(p.to_string(), *v);
                }
            }
        }
        estimates.retain(|m, _| truth.contains_key(m));
        let compositional = rank_estimates(d, &estimates, &config.weights, &scale)?;
        let direct_scores: BTreeMap<String, f64> = oof
            .get(COMPOUND)
            .and_then(|t| t.get(d))
            .map(|m| m.iter().filter(|(k, _)| truth.contains_key(*k)).map(|(k, v)| (k.clone(), *v)).collect())
            .unwrap_or_default();
        let direct = rank_direct(d, &direct_scores, &config.weights, &scale)?;

        for rec in [compositional, direct] {
            let est: BTreeMap<String, f64> = rec.ranking.iter().map(|r| (r.model.clone(), r.compound)).collect();
            mode_rows
                .entry(rec.mode)
                .or_default()
                .insert(d.clone(), quality_measures(&truth, &est, config.threshold)?);
            let order: Vec<String> = rec.ranking.iter().map(|r| r.model.clone()).collect();
            curves.entry(rec.mode).or_default().push(convergence(&db, d, &order)?);
        }
    }
    if let Some(rows) = mode_rows.get(&Mode::Compositional) {
        per_target.insert(COMPOUND.to_string(), rows.clone());
    }
    let evaluated = mode_rows.get(&Mode::Compositional).map_or(0, BTreeMap::len);

    let bundle = outcome.bundle;
    let report = StudyReport {
        seed: config.seed,
        n_folds: config.n_folds,
        num_datasets: datasets.len(),
        num_groups: db.dataset_metas().values().map(|m| &m.group).collect::<std::collections::BTreeSet<_>>().len(),
        num_models: pool.len(),
        db_rows: db.dataset_metas().len() * pool.len(),
        weights: config.weights.clone(),
        quality: QualityReport::from_per_dataset(config.threshold, per_target),
        modes: mode_rows
            .iter()
            .map(|(m, rows)| (*m, MeasureSummary::of(&rows.values().copied().collect::<Vec<_>>())))
            .collect(),
        convergence: curves.into_iter().map(|(m, c)| (m, ConvergenceReport::new(c))).collect(),
        oracle_top1: if evaluated == 0 { 0.0 } else { oracle_hits as f64 / evaluated as f64 },
        in_fold_evaluations: bundle.cv_reports.values().map(|r| r.in_fold_evaluations).sum(),
        cv_reports: bundle.cv_reports.clone(),
        warnings,
    };
    Ok(StudyOutcome { db, bundle, report })
}
