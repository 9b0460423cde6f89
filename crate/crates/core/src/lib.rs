//! Missed-pneumothorax triage for chest radiographs.
//!
//! Images go through a view gate, lung-field extraction and three
//! pneumothorax scorers whose ensemble is combined with a chest-tube
//! classifier and a rule-based reading of the radiology report. Studies whose
//! images look positive while the report is silent and no tube is present are
//! queued for human review.

pub mod backends;
pub mod eval;
pub mod imaging;
pub mod nlp;
pub mod patches;
pub mod pipeline;
pub mod segpost;
pub mod store;
pub mod study;
pub mod synthetic;
pub mod triage;
