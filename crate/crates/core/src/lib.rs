//! Ensemble web-accessibility auditing: a job language, a native HTML rule
//! engine, adapters for external checkers, issue classification across
//! tools, scoring and reports.

pub mod adapters;
pub mod dom;
pub mod ensemble;
pub mod jobgen;
pub mod model;
pub mod reporting;
pub mod rules;
pub mod runner;
pub mod scoring;
