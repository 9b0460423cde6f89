//! Generated test data: a small end-to-end study set with planted missed
//! findings, and label sets with prescribed stratum sizes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::stub_lung_rect;
use crate::imaging::{save_pgm, ImageGray};
use crate::store::write_manifest;
use crate::study::{Labels, OracleRecord, PtxLocation, StudyRecord, TubeType, View};

/// Role a generated study plays in the funnel set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Pneumothorax on the image, clean report, no tube: must be flagged.
    PlantedMiss,
    /// Pneumothorax already treated with a tube.
    TubeTreated,
    /// Pneumothorax the report already mentions.
    ReportedPositive,
    /// Pneumothorax on a lateral film.
    Lateral,
    /// Tube in place, no pneumothorax.
    TubeOnly,
    Normal,
}

impl Role {
    pub fn expect_flagged(&self) -> bool {
        matches!(self, Role::PlantedMiss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelSpec {
    pub planted: usize,
    pub tube_treated: usize,
    pub reported_positive: usize,
    pub lateral: usize,
    pub tube_only: usize,
    pub normal: usize,
    pub image_size: usize,
}

impl Default for FunnelSpec {
    fn default() -> Self {
        Self {
            planted: 10,
            tube_treated: 20,
            reported_positive: 20,
            lateral: 10,
            tube_only: 10,
            normal: 130,
            image_size: 96,
        }
    }
}

impl FunnelSpec {
    pub fn total(&self) -> usize {
        self.planted + self.tube_treated + self.reported_positive + self.lateral + self.tube_only + self.normal
    }

    fn roles(&self) -> Vec<Role> {
        let mut roles = Vec::with_capacity(self.total());
        for (role, n) in [
            (Role::PlantedMiss, self.planted),
            (Role::TubeTreated, self.tube_treated),
            (Role::ReportedPositive, self.reported_positive),
            (Role::Lateral, self.lateral),
            (Role::TubeOnly, self.tube_only),
            (Role::Normal, self.normal),
        ] {
            roles.extend(std::iter::repeat_n(role, n));
        }
        // interleave roles so ids carry no ordering hint
        let n = roles.len();
        let stride = coprime_stride(n);
        (0..n).map(|i| roles[(i * stride) % n]).collect()
    }
}

fn coprime_stride(n: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (7..).step_by(2).find(|&s| n <= 1 || gcd(s, n) == 1).unwrap_or(1)
}

const NEGATIVE_REPORTS: [&str; 6] = [
    "No pneumothorax.",
    "Lungs are clear. No pleural effusion or pneumothorax.",
    "Heart size is normal. No acute cardiopulmonary process.",
    "No evidence of pneumothorax. Mild bibasilar atelectasis.",
    "Stable cardiomediastinal silhouette. No focal consolidation.",
    "Pneumothorax is not seen. Degenerative changes of the spine.",
];

const POSITIVE_REPORTS: [&str; 4] = [
    "Small right apical pneumothorax.",
    "Moderate left pneumothorax with slight mediastinal shift.",
    "There is a small pneumothorax at the right apex.",
    "Left basilar pneumothorax, new since prior.",
];

const LOCATIONS: [PtxLocation; 4] =
    [PtxLocation::RightApex, PtxLocation::LeftApex, PtxLocation::RightBase, PtxLocation::LeftBase];

#[derive(Debug, Clone)]
pub struct GeneratedStudy {
    pub record: StudyRecord,
    pub role: Role,
}

#[derive(Debug, Clone)]
pub struct FunnelSet {
    pub studies: Vec<GeneratedStudy>,
    pub manifest_path: PathBuf,
}

impl FunnelSet {
    pub fn planted_ids(&self) -> Vec<String> {
        self.studies.iter().filter(|s| s.role.expect_flagged()).map(|s| s.record.study_id.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Labels> {
        self.studies.iter().map(|s| s.record.labels.clone().expect("generated studies are labelled")).collect()
    }
}

/// A plain synthetic radiograph: bright body, two darker lung fields at the
/// positions the stub segmenter reports, with a little texture.
pub fn synthetic_image(size: usize, variant: usize) -> ImageGray {
    let right = stub_lung_rect(0, size, size);
    let left = stub_lung_rect(1, size, size);
    let shade = 0.2 + 0.05 * (variant % 5) as f32;
    ImageGray::from_fn(size, size, |x, y| {
        let in_lung = [right, left].iter().any(|r| x >= r.x0 && x < r.x1() && y >= r.y0 && y < r.y1());
        let texture = (((x * 31 + y * 17 + variant * 7) % 13) as f32) / 130.0;
        if in_lung {
            shade + texture
        } else {
            0.75 - texture
        }
    })
    .expect("generated image dimensions are valid")
}

fn build_record(i: usize, role: Role, image_path: PathBuf) -> StudyRecord {
    let ptx = matches!(role, Role::PlantedMiss | Role::TubeTreated | Role::ReportedPositive | Role::Lateral);
    let tube = matches!(role, Role::TubeTreated | Role::TubeOnly);
    let tube_type = tube.then_some(if i.is_multiple_of(3) { TubeType::Pigtail } else { TubeType::Standard });
    let view = match role {
        Role::Lateral => View::Lateral,
        _ if i.is_multiple_of(2) => View::Pa,
        _ => View::Ap,
    };
    let report = match role {
        Role::ReportedPositive => POSITIVE_REPORTS[i % POSITIVE_REPORTS.len()],
        // tube studies get either kind of report: the tube alone prevents a flag
        Role::TubeTreated if i % 2 == 1 => POSITIVE_REPORTS[i % POSITIVE_REPORTS.len()],
        _ => NEGATIVE_REPORTS[i % NEGATIVE_REPORTS.len()],
    };
    StudyRecord {
        study_id: format!("syn{i:04}"),
        image_path,
        report: report.to_string(),
        labels: Some(Labels { pneumothorax: ptx, chest_tube: tube, tube_type, view: Some(view) }),
        oracle: Some(OracleRecord {
            pneumothorax: ptx,
            chest_tube: tube,
            tube_type,
            view,
            location: ptx.then_some(LOCATIONS[i % LOCATIONS.len()]),
        }),
    }
}

/// Write images and `manifest.jsonl` under `dir`.
pub fn write_funnel_set(dir: &Path, spec: &FunnelSpec) -> std::io::Result<FunnelSet> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images)?;
    let mut studies = Vec::with_capacity(spec.total());
    for (i, role) in spec.roles().into_iter().enumerate() {
        let rel = PathBuf::from("images").join(format!("syn{i:04}.pgm"));
        std::fs::write(dir.join(&rel), save_pgm(&synthetic_image(spec.image_size, i)))?;
        studies.push(GeneratedStudy { record: build_record(i, role, rel), role });
    }
    let manifest_path = dir.join("manifest.jsonl");
    let records: Vec<StudyRecord> = studies.iter().map(|s| s.record.clone()).collect();
    std::fs::write(&manifest_path, write_manifest(&records))?;
    // callers see absolute paths, as after ingest
    for s in &mut studies {
        s.record.image_path = dir.join(&s.record.image_path);
    }
    Ok(FunnelSet { studies, manifest_path })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrataShape {
    pub total: usize,
    pub pos_with_tube: usize,
    pub pos_without_tube: usize,
    /// Label negatives that nonetheless have a tube in place.
    pub neg_with_tube: usize,
}

impl StrataShape {
    /// 1,962 studies with 195 positives (156 with a tube, 39 without).
    /// Negatives with a tube are not given for that set; this picks zero.
    pub const REFERENCE_TEST_SET: StrataShape =
        StrataShape { total: 1962, pos_with_tube: 156, pos_without_tube: 39, neg_with_tube: 0 };
}

/// Label list with exactly the requested stratum sizes, interleaved.
pub fn shaped_labels(shape: &StrataShape) -> Vec<Labels> {
    let label = |ptx: bool, tube: bool, k: usize| Labels {
        pneumothorax: ptx,
        chest_tube: tube,
        tube_type: tube.then_some(if k.is_multiple_of(2) { TubeType::Standard } else { TubeType::Pigtail }),
        view: Some(View::Pa),
    };
    let mut out = Vec::with_capacity(shape.total);
    out.extend((0..shape.pos_with_tube).map(|k| label(true, true, k)));
    out.extend((0..shape.pos_without_tube).map(|k| label(true, false, k)));
    out.extend((0..shape.neg_with_tube).map(|k| label(false, true, k)));
    let rest = shape.total.saturating_sub(out.len());
    out.extend((0..rest).map(|k| label(false, false, k)));
    let n = out.len();
    let stride = coprime_stride(n);
    (0..n).map(|i| out[(i * stride) % n].clone()).collect()
}

/// Write a labels-only manifest (inline empty reports, placeholder images).
pub fn write_labels_manifest(path: &Path, labels: &[Labels]) -> std::io::Result<()> {
    let records: Vec<StudyRecord> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| StudyRecord {
            study_id: format!("lab{i:05}"),
            image_path: PathBuf::from(format!("lab{i:05}.pgm")),
            report: String::new(),
            labels: Some(l.clone()),
            oracle: None,
        })
        .collect();
    std::fs::write(path, write_manifest(&records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn roles_are_a_permutation() {
        let spec = FunnelSpec::default();
        let roles = spec.roles();
        assert_eq!(roles.len(), 200);
        let mut counts: HashMap<Role, usize> = HashMap::new();
        for r in roles {
            *counts.entry(r).or_default() += 1;
        }
        assert_eq!(counts[&Role::PlantedMiss], 10);
        assert_eq!(counts[&Role::Normal], 130);
    }

    #[test]
    fn shaped_labels_counts() {
        let l = shaped_labels(&StrataShape::REFERENCE_TEST_SET);
        assert_eq!(l.len(), 1962);
        assert_eq!(l.iter().filter(|l| l.pneumothorax).count(), 195);
        assert_eq!(l.iter().filter(|l| l.pneumothorax && l.chest_tube).count(), 156);
    }

    #[test]
    fn planted_records_meet_flag_preconditions() {
        let dir = tempfile::tempdir().unwrap();
        let set = write_funnel_set(dir.path(), &FunnelSpec { normal: 5, ..Default::default() }).unwrap();
        for s in set.studies.iter().filter(|s| s.role == Role::PlantedMiss) {
            let o = s.record.oracle.as_ref().unwrap();
            assert!(o.pneumothorax && !o.chest_tube && o.view.is_frontal());
            assert!(!crate::nlp::classify_report(&s.record.report).positive);
        }
        for s in set.studies.iter().filter(|s| s.role == Role::ReportedPositive) {
            assert!(crate::nlp::classify_report(&s.record.report).positive, "{}", s.record.report);
        }
        assert!(s_exists(&set.studies[0].record.image_path));
    }

    fn s_exists(p: &Path) -> bool {
        p.is_file()
    }
}
