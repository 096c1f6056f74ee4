#![allow(dead_code)]

use xpcr_core::data::Dataset;
use xpcr_core::evaluation::build_database;
use xpcr_core::forecasters::ModelPool;
use xpcr_core::metalearn::{LearnerBundle, LearnerConfig};
use xpcr_core::profiler::ProfilerConfig;
use xpcr_core::propertydb::PropertyDatabase;
use xpcr_core::scoring::WeightVector;
use xpcr_core::synthetic::demo_corpus;

/// The first `families` families of the demo corpus, all six variants each.
pub fn small_corpus(families: usize) -> Vec<Dataset> {
    demo_corpus(42).unwrap().into_iter().take(families * 6).collect()
}

pub fn small_db(families: usize) -> PropertyDatabase {
    build_database(&small_corpus(families), &ModelPool::default(), &ProfilerConfig::default())
        .unwrap()
        .0
}

pub fn small_bundle(db: &PropertyDatabase, folds: usize) -> LearnerBundle {
    LearnerBundle::train(db, &WeightVector::default(), folds, &LearnerConfig::default())
        .unwrap()
        .bundle
}
