//! Study records as they appear in ingestion manifests.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum View {
    Ap,
    Pa,
    Lateral,
    Other,
}

impl View {
    pub fn is_frontal(&self) -> bool {
        matches!(self, View::Ap | View::Pa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TubeType {
    Standard,
    Pigtail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PtxLocation {
    RightApex,
    LeftApex,
    RightBase,
    LeftBase,
}

/// Ground-truth labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    pub pneumothorax: bool,
    pub chest_tube: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tube_type: Option<TubeType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<View>,
}

/// What the oracle backend pretends the models would see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleRecord {
    pub pneumothorax: bool,
    pub chest_tube: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tube_type: Option<TubeType>,
    pub view: View,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<PtxLocation>,
}

/// One chest x-ray study. `report` always holds the report text once a
/// manifest line has been ingested (a `report_path` is read at ingest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    pub image_path: PathBuf,
    pub report: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleRecord>,
}
