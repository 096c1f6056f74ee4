//! Multi-objective, explainable model selection for time-series forecasting.
//!
//! Candidate forecasters are measured on prediction error, complexity and
//! resource use; measurements become relative index scores; interpretable
//! meta-learners estimate those scores for unseen datasets; and a weighted
//! compound score ranks the candidates.

pub mod data;
pub mod evaluation;
pub mod error;
pub mod forecasters;
pub mod metafeatures;
pub mod metalearn;
pub mod metrics;
pub mod profiler;
pub mod propertydb;
pub mod recommender;
pub mod scoring;
pub mod synthetic;

pub use error::{Error, Result};
