//! Manifest parsing: one JSON study per line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::study::{Labels, OracleRecord, StudyRecord};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    study_id: String,
    image_path: PathBuf,
    #[serde(default)]
    report: Option<String>,
    #[serde(default)]
    report_path: Option<PathBuf>,
    #[serde(default)]
    labels: Option<Labels>,
    #[serde(default)]
    oracle: Option<OracleRecord>,
    /// Accepted for round-tripping exported manifests; ingest always resets it.
    #[serde(default)]
    #[allow(dead_code)]
    status: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedManifest {
    /// Valid records in first-seen order; a repeated id keeps its first
    /// position but takes the later record.
    pub records: Vec<StudyRecord>,
    pub rejected: Vec<Rejected>,
    pub warnings: Vec<String>,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn parse_line(line: &str, base: &Path) -> Result<StudyRecord, String> {
    let m: ManifestLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if m.study_id.trim().is_empty() {
        return Err("empty study_id".into());
    }
    if m.image_path.as_os_str().is_empty() {
        return Err("empty image_path".into());
    }
    let report = match (m.report, m.report_path) {
        (Some(_), Some(_)) => return Err("both report and report_path given".into()),
        (None, None) => return Err("missing field `report` (or `report_path`)".into()),
        (Some(text), None) => text,
        (None, Some(p)) => {
            let p = resolve(base, p);
            std::fs::read_to_string(&p).map_err(|e| format!("cannot read report {}: {e}", p.display()))?
        }
    };
    Ok(StudyRecord {
        study_id: m.study_id,
        image_path: resolve(base, m.image_path),
        report,
        labels: m.labels,
        oracle: m.oracle,
    })
}

/// Parse manifest text. Relative paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> ParsedManifest {
    let mut out = ParsedManifest::default();
    let mut index = std::collections::HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, base) {
            Ok(rec) => match index.get(&rec.study_id) {
                Some(&pos) => {
                    out.warnings.push(format!(
                        "line {}: duplicate study_id {} supersedes earlier line",
                        i + 1,
                        rec.study_id
                    ));
                    out.records[pos] = rec;
                }
                None => {
                    index.insert(rec.study_id.clone(), out.records.len());
                    out.records.push(rec);
                }
            },
            Err(reason) => out.rejected.push(Rejected { line: i + 1, reason }),
        }
    }
    out
}

/// Serialize records back to manifest lines (inline reports).
pub fn write_manifest(records: &[StudyRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("study records serialize"));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_lines() {
        let text = r#"{"study_id":"a","image_path":"a.pgm","report":"No pneumothorax."}
{"study_id":"b","image_path":"/abs/b.pgm","report":"Clear."}

{"study_id":"c","image_path":"c.pgm","report":"x","labels":{"pneumothorax":true,"chest_tube":false}}
"#;
        let m = parse_manifest(text, Path::new("/data"));
        assert_eq!(m.records.len(), 3);
        assert!(m.rejected.is_empty());
        assert_eq!(m.records[0].image_path, PathBuf::from("/data/a.pgm"));
        assert_eq!(m.records[1].image_path, PathBuf::from("/abs/b.pgm"));
        assert!(m.records[2].labels.as_ref().unwrap().pneumothorax);
    }

    #[test]
    fn duplicates_supersede() {
        let text = r#"{"study_id":"a","image_path":"1.pgm","report":"first"}
{"study_id":"b","image_path":"2.pgm","report":"b"}
{"study_id":"a","image_path":"3.pgm","report":"second"}"#;
        let m = parse_manifest(text, Path::new("/"));
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.records[0].report, "second");
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn rejections_carry_reasons() {
        let text = r#"{"study_id":"a","report":"x"}
not json
{"study_id":"b","image_path":"b.pgm"}
{"study_id":" ","image_path":"b.pgm","report":"x"}
{"study_id":"c","image_path":"c.pgm","report":"x","extra":1}
{"study_id":"d","image_path":"d.pgm","report_path":"missing.txt"}"#;
        let m = parse_manifest(text, Path::new("/nonexistent"));
        assert!(m.records.is_empty());
        let lines: Vec<usize> = m.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![1, 2, 3, 4, 5, 6]);
        assert!(m.rejected[0].reason.contains("image_path"), "{}", m.rejected[0].reason);
        assert!(m.rejected[5].reason.contains("cannot read report"));
    }

    #[test]
    fn report_path_is_read() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("r.txt"), "Large left pneumothorax.").unwrap();
        let m = parse_manifest(r#"{"study_id":"a","image_path":"a.pgm","report_path":"r.txt"}"#, dir.path());
        assert_eq!(m.records[0].report, "Large left pneumothorax.");
    }

    #[test]
    fn write_then_parse_round_trips() {
        let text = r#"{"study_id":"a","image_path":"/x/a.pgm","report":"r","oracle":{"pneumothorax":true,"chest_tube":false,"view":"PA","location":"left_base"}}"#;
        let m = parse_manifest(text, Path::new("/"));
        let again = parse_manifest(&write_manifest(&m.records), Path::new("/other"));
        assert_eq!(again.records, m.records);
    }
}
