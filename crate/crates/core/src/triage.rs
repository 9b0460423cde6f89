//! Missed-finding decision and adjudication records.
//!
//! A study is flagged when it is frontal, its report does not mention
//! pneumothorax positively, the chest-tube classifier is negative and the
//! pneumothorax ensemble is positive. A tube signals that clinicians already
//! know about a pleural abnormality, so tube-positive studies are never flagged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlp::ReportClassification;
use crate::pipeline::{PipelineConfig, ResultStatus, StudyResult};

#[derive(Debug, Error, PartialEq)]
pub enum TriageError {
    #[error("study {0} has an errored pipeline result")]
    IncompleteResult(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicates {
    pub frontal: bool,
    pub nlp_negative: bool,
    /// `None` when the study was not scored (non-frontal).
    pub tube_negative: Option<bool>,
    pub ptx_positive: Option<bool>,
}

impl Predicates {
    pub fn all_hold(&self) -> bool {
        self.frontal && self.nlp_negative && self.tube_negative == Some(true) && self.ptx_positive == Some(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub ptx_threshold: f64,
    pub tube_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageDecision {
    pub study_id: String,
    pub flagged: bool,
    pub reasons: Predicates,
    pub thresholds_used: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
}

impl TriageDecision {
    /// Recompute the conjunction from stored scores; used to audit persisted decisions.
    pub fn consistent_with(&self, result: &StudyResult, nlp: &ReportClassification) -> bool {
        let cfg = PipelineConfig {
            ptx_threshold: self.thresholds_used.ptx_threshold,
            tube_threshold: self.thresholds_used.tube_threshold,
            ..PipelineConfig::default()
        };
        decide(result, nlp, &cfg).map(|d| d == *self).unwrap_or(false)
    }
}

pub fn decide(
    result: &StudyResult,
    nlp: &ReportClassification,
    cfg: &PipelineConfig,
) -> Result<TriageDecision, TriageError> {
    if result.status == ResultStatus::Errored {
        return Err(TriageError::IncompleteResult(result.study_id.clone()));
    }
    let reasons = Predicates {
        frontal: result.frontal,
        nlp_negative: !nlp.positive,
        tube_negative: result.tube.map(|t| t.any < cfg.tube_threshold),
        ptx_positive: result.scores.as_ref().map(|s| s.ensemble >= cfg.ptx_threshold),
    };
    Ok(TriageDecision {
        study_id: result.study_id.clone(),
        flagged: reasons.all_hold(),
        reasons,
        thresholds_used: Thresholds { ptx_threshold: cfg.ptx_threshold, tube_threshold: cfg.tube_threshold },
        skip_reason: (!result.frontal).then(|| result.skip_reason.clone().unwrap_or_else(|| "non-frontal".into())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjudicationDecision {
    ConfirmedMissed,
    NotMissed,
    /// Parking state: the study stays in the flagged queue.
    Indeterminate,
}

impl AdjudicationDecision {
    pub fn is_final(&self) -> bool {
        !matches!(self, AdjudicationDecision::Indeterminate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationRecord {
    pub study_id: String,
    pub decision: AdjudicationDecision,
    pub reviewer_id: String,
    #[serde(default)]
    pub note: String,
    /// UTC seconds.
    pub timestamp: i64,
}
