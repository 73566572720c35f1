//! Concept-based attribution for tabular classifiers.
//!
//! This crate trains small feedforward classifiers over tabular data,
//! defines *concepts* as boolean predicates over columns (e.g.
//! `age < 25 AND gender == 'Female'`), learns Concept Activation Vectors
//! (CAVs) at each hidden layer, and reports how strongly each concept pulls
//! each class decision — as signed TCAV scores and as angles between class
//! gradients and the concept direction. Comparing scores across protected
//! groups turns the same machinery into a fairness diagnostic, with
//! demographic parity as the reference measure.
//!
//! Modules follow the pipeline: [`data`] (schemas, CSV, synthetic tables,
//! encoding), [`predicate`] (the concept DSL), [`model`] (classifier with
//! activation and gradient access), [`generator`] (copula-based synthesis of
//! concept examples), [`cav`] (concept classifiers), and [`tcav`] (scores,
//! angles, statistical testing, fairness audits).

pub mod cav;
pub mod data;
pub mod generator;
pub mod model;
pub mod predicate;
pub mod tcav;
