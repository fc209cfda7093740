//! Learn a cheap premodel that picks, per input, which candidate inference
//! model to run.
//!
//! The pipeline: load a profiled trace ([`trace_store`]), label each input
//! with its optimum model ([`labeling`]), choose a small set of models
//! ([`model_selection`]) and features ([`features`]), train a premodel
//! ([`premodel`]) from the [`classifiers`], and compare dispatch policies
//! under cross-validation ([`evaluation`]). [`soundness`] adds confidence
//! checks on premodel decisions.

pub mod classifiers;
pub mod cli;
pub mod evaluation;
pub mod features;
pub mod labeling;
pub mod model_selection;
pub mod premodel;
pub mod soundness;
pub mod synthetic;
pub mod trace_store;
