use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require_groups, LearnerConfig, MetaLearner, MetaTable, Method};
use crate::error::{Error, Result};

/// Which fold validates each group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n_folds: usize,
    pub fold_of_group: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, group: &str) -> Option<usize> {
        self.fold_of_group.get(group).copied()
    }

    /// Groups per fold.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.fold_of_group.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(train, validation)` row indices for `fold`.
    pub fn split(&self, groups: &[String], fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..groups.len()).partition(|&i| self.fold_of_group[&groups[i]] != fold)
    }
}

/// Shuffles the distinct groups with `seed` and deals them round-robin into folds.
pub fn grouped_folds<S: AsRef<str>>(groups: &[S], n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    let distinct: BTreeSet<&str> = groups.iter().map(AsRef::as_ref).collect();
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {n_folds}")));
    }
    if distinct.len() < n_folds {
        return Err(Error::InsufficientGroups {
            groups: distinct.len(),
            folds: n_folds,
        });
    }
    let mut order: Vec<&str> = distinct.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of_group = order
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g.to_string(), i % n_folds))
        .collect();
    Ok(FoldAssignment { n_folds, fold_of_group })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    /// Mean over folds of the per-fold mean absolute validation error.
    pub mean_abs_error: f64,
    pub fold_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub target: String,
    pub n_folds: usize,
    pub seed: u64,
    pub scores: Vec<MethodScore>,
    pub chosen: Method,
    pub folds: FoldAssignment,
    /// Validation rows whose group also appeared in the training part; always 0.
    pub in_fold_evaluations: usize,
}

impl CvReport {
    pub fn error_of(&self, method: Method) -> Option<f64> {
        self.scores.iter().find(|s| s.method == method).map(|s| s.mean_abs_error)
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    /// Winner refitted on every row.
    pub learner: MetaLearner,
    pub report: CvReport,
    /// Out-of-fold predictions per method, aligned with the table rows.
    pub oof: BTreeMap<Method, Vec<f64>>,
}

impl Selection {
    pub fn chosen_oof(&self) -> &[f64] {
        &self.oof[&self.report.chosen]
    }
}

/// Grouped cross-validation of every method, then the lowest mean error wins.
pub fn select_best(
    table: &MetaTable,
    methods: &[Method],
    n_folds: usize,
    config: &LearnerConfig,
) -> Result<Selection> {
    require_groups(table)?;
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no meta-learner methods to select from".into()));
    }
    let folds = grouped_folds(&table.groups, n_folds, config.seed)?;
    let mut in_fold = 0;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..n_folds)
        .map(|f| {
            let (train, valid) = folds.split(&table.groups, f);
            let train_groups: BTreeSet<&str> = train.iter().map(|&i| table.groups[i].as_str()).collect();
            in_fold += valid.iter().filter(|&&i| train_groups.contains(table.groups[i].as_str())).count();
            (train, valid)
        })
        .collect();

    // fixed tie order regardless of the order the caller listed methods in
    let mut ordered: Vec<Method> = Method::ALL.into_iter().filter(|m| methods.contains(m)).collect();
    ordered.dedup();

    let mut scores = Vec::new();
    let mut oof = BTreeMap::new();
    for &method in &ordered {
        let mut predictions = vec![f64::NAN; table.len()];
        let mut fold_errors = Vec::with_capacity(n_folds);
        for (train, valid) in &splits {
            let learner = MetaLearner::fit_inner(&table.subset(train), method, config, false)?;
            let mut abs = 0.0;
            for &i in valid {
                let p = learner.predict(&table.rows[i])?;
                predictions[i] = p;
                abs += (p - table.targets[i]).abs();
            }
            fold_errors.push(abs / valid.len() as f64);
        }
        let mean_abs_error = fold_errors.iter().sum::<f64>() / fold_errors.len() as f64;
        scores.push(MethodScore {
            method,
            mean_abs_error,
            fold_errors,
        });
        oof.insert(method, predictions);
    }

    let chosen = scores
        .iter()
        .fold(None::<&MethodScore>, |best, s| match best {
            Some(b) if b.mean_abs_error <= s.mean_abs_error => Some(b),
            _ => Some(s),
        })
        .map(|s| s.method)
        .expect("at least one method");
    let learner = MetaLearner::fit(table, chosen, config)?;
    Ok(Selection {
        learner,
        report: CvReport {
            target: table.target.clone(),
            n_folds,
            seed: config.seed,
            scores,
            chosen,
            folds,
            in_fold_evaluations: in_fold,
        },
        oof,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::synthetic_table;
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{i:02}")).collect()
    }

    #[test]
    fn fold_sizes_by_group_count() {
        let mut sizes = grouped_folds(&names(19), 5, 42).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 4, 4, 4, 4]);
        assert_eq!(grouped_folds(&names(10), 5, 1).unwrap().fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn too_few_groups() {
        assert!(matches!(
            grouped_folds(&names(3), 5, 0),
            Err(Error::InsufficientGroups { groups: 3, folds: 5 })
        ));
    }

    #[test]
    fn repeated_group_labels_stay_together() {
        let rows: Vec<String> = names(7).into_iter().flat_map(|g| vec![g; 6]).collect();
        let f = grouped_folds(&rows, 3, 9).unwrap();
        for fold in 0..3 {
            let (train, valid) = f.split(&rows, fold);
            let t: BTreeSet<&String> = train.iter().map(|&i| &rows[i]).collect();
            assert!(valid.iter().all(|&i| !t.contains(&rows[i])));
        }
    }

    #[test]
    fn linear_target_selects_ridge() {
        let t = synthetic_table(20, 100, 11, |x| 0.3 + 0.4 * x[1] - 0.2 * x[3]);
        let s = select_best(&t, &Method::ALL, 5, &LearnerConfig::default()).unwrap();
        assert_eq!(s.report.chosen, Method::LinearRidge);
        assert!(s.report.error_of(Method::LinearRidge).unwrap() < 1e-6);
        assert_eq!(s.report.in_fold_evaluations, 0);
    }

    #[test]
    fn step_target_selects_tree() {
        let t = synthetic_table(10, 20, 12, |x| if x[2] > 0.0 { 1.0 } else { 0.2 });
        let s = select_best(&t, &Method::ALL, 5, &LearnerConfig::default()).unwrap();
        assert_eq!(s.report.chosen, Method::DecisionTree);
    }

    #[test]
    fn ties_go_to_ridge() {
        // constant targets: every method predicts the same constant
        let t = synthetic_table(6, 5, 13, |_| 0.5);
        let s = select_best(&t, &[Method::Knn, Method::DecisionTree, Method::LinearRidge], 3, &LearnerConfig::default())
            .unwrap();
        assert_eq!(s.report.chosen, Method::LinearRidge);
    }

    #[test]
    fn chosen_attains_minimum() {
        let t = synthetic_table(8, 15, 14, |x| (3.0 * x[0]).sin() * x[4]);
        let s = select_best(&t, &Method::ALL, 4, &LearnerConfig::default()).unwrap();
        let chosen = s.report.error_of(s.report.chosen).unwrap();
        assert!(s.report.scores.iter().all(|m| chosen <= m.mean_abs_error));
        assert!(s.oof.values().all(|p| p.iter().all(|v| v.is_finite())));
    }
}
