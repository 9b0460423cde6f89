//! Durable study store: an append-only event log plus an in-memory index
//! rebuilt by replay on open.

mod log;
mod manifest;

pub use self::log::{parse_entries, Event, EventLog, EventLogEntry, TriagePayload};
pub use self::manifest::{parse_manifest, write_manifest, ParsedManifest, Rejected};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::Backend;
use crate::eval::{stratified_eval, EvalTable, Method};
use crate::nlp::{Mention, ReportClassification, ReportClassifier};
use crate::pipeline::{run_study, PipelineConfig, PtxScores, ResultStatus, StudyResult, TubeScores};
use crate::study::StudyRecord;
use crate::triage::{decide, AdjudicationDecision, AdjudicationRecord, Thresholds, TriageDecision};

pub const LOG_FILE: &str = "events.jsonl";
const BATCH_CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot read {path}: {source}")]
    FileUnreadable { path: PathBuf, source: std::io::Error },
    #[error("event log line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("study {study_id} is not flagged (status {status})")]
    NotFlagged { study_id: String, status: StudyStatus },
    #[error("{0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyStatus {
    Ingested,
    Processed,
    Flagged,
    Adjudicated,
    Errored,
    SkippedNonFrontal,
}

impl StudyStatus {
    pub const ALL: [StudyStatus; 6] = [
        StudyStatus::Ingested,
        StudyStatus::Processed,
        StudyStatus::Flagged,
        StudyStatus::Adjudicated,
        StudyStatus::Errored,
        StudyStatus::SkippedNonFrontal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StudyStatus::Ingested => "ingested",
            StudyStatus::Processed => "processed",
            StudyStatus::Flagged => "flagged",
            StudyStatus::Adjudicated => "adjudicated",
            StudyStatus::Errored => "errored",
            StudyStatus::SkippedNonFrontal => "skipped_non_frontal",
        }
    }
}

impl std::fmt::Display for StudyStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StudyStatus {
    type Err = StoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StudyStatus::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| StoreError::Validation(format!("unknown status {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEntry {
    pub record: StudyRecord,
    pub status: StudyStatus,
    pub result: Option<StudyResult>,
    pub nlp: Option<ReportClassification>,
    pub triage: Option<TriageDecision>,
    /// Full history, oldest first; the last entry is the current decision.
    pub adjudications: Vec<AdjudicationRecord>,
}

impl StudyEntry {
    fn new(record: StudyRecord) -> Self {
        Self { record, status: StudyStatus::Ingested, result: None, nlp: None, triage: None, adjudications: Vec::new() }
    }

    pub fn current_decision(&self) -> Option<&AdjudicationRecord> {
        self.adjudications.last()
    }

    pub fn ensemble_score(&self) -> Option<f64> {
        self.result.as_ref()?.scores.as_ref().map(|s| s.ensemble)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StoreState {
    pub last_seq: u64,
    pub studies: BTreeMap<String, StudyEntry>,
}

impl StoreState {
    pub fn replay(entries: &[EventLogEntry]) -> Result<Self, StoreError> {
        let mut state = StoreState::default();
        for (i, e) in entries.iter().enumerate() {
            state.apply(e).map_err(|message| StoreError::CorruptLog { line: i + 1, message })?;
        }
        Ok(state)
    }

    pub fn apply(&mut self, entry: &EventLogEntry) -> Result<(), String> {
        if entry.seq <= self.last_seq {
            return Err(format!("seq {} does not follow {}", entry.seq, self.last_seq));
        }
        if let Event::Ingest(rec) = &entry.event {
            // a changed record restarts processing; review history is kept
            let history = self.studies.remove(&rec.study_id).map(|e| e.adjudications).unwrap_or_default();
            let mut fresh = StudyEntry::new(rec.clone());
            fresh.adjudications = history;
            self.studies.insert(rec.study_id.clone(), fresh);
        } else {
            let id = entry.event.study_id();
            let study = self.studies.get_mut(id).ok_or_else(|| format!("event for unknown study {id}"))?;
            match &entry.event {
                Event::Ingest(_) => unreachable!(),
                Event::Result(r) => {
                    study.status = match r.status {
                        ResultStatus::Completed => StudyStatus::Processed,
                        ResultStatus::NonFrontal => StudyStatus::SkippedNonFrontal,
                        ResultStatus::Errored => StudyStatus::Errored,
                    };
                    study.result = Some(r.clone());
                    study.nlp = None;
                    study.triage = None;
                }
                Event::Triage(t) => {
                    if t.decision.flagged {
                        study.status = StudyStatus::Flagged;
                    }
                    study.triage = Some(t.decision.clone());
                    study.nlp = Some(t.nlp.clone());
                }
                Event::Adjudication(a) => {
                    if a.decision.is_final() {
                        study.status = StudyStatus::Adjudicated;
                    }
                    study.adjudications.push(a.clone());
                }
            }
        }
        self.last_seq = entry.seq;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Distinct valid studies in the manifest.
    pub ingested: usize,
    /// Of those, how many were already stored with an identical record.
    pub unchanged: usize,
    pub rejected: Vec<Rejected>,
    pub warnings: Vec<String>,
}

/// Which studies a batch run touches. The default is every study that has
/// not been adjudicated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchFilter {
    pub statuses: Option<BTreeSet<StudyStatus>>,
    pub study_ids: Option<BTreeSet<String>>,
}

impl BatchFilter {
    pub fn matches(&self, e: &StudyEntry) -> bool {
        let status_ok = match &self.statuses {
            Some(s) => s.contains(&e.status),
            None => e.status != StudyStatus::Adjudicated,
        };
        status_ok && self.study_ids.as_ref().is_none_or(|ids| ids.contains(&e.record.study_id))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    /// Every study the batch ran; the other counts are subsets.
    pub processed: usize,
    pub flagged: usize,
    pub errored: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study_id: String,
    pub status: StudyStatus,
    pub ensemble: Option<f64>,
    pub scores: Option<PtxScores>,
    pub tube: Option<TubeScores>,
    pub mentions: Vec<Mention>,
    pub thresholds: Option<Thresholds>,
    pub decision: Option<AdjudicationDecision>,
}

impl From<&StudyEntry> for StudySummary {
    fn from(e: &StudyEntry) -> Self {
        let result = e.result.as_ref();
        Self {
            study_id: e.record.study_id.clone(),
            status: e.status,
            ensemble: e.ensemble_score(),
            scores: result.and_then(|r| r.scores.clone()),
            tube: result.and_then(|r| r.tube),
            mentions: e.nlp.as_ref().map(|n| n.mentions.clone()).unwrap_or_default(),
            thresholds: e.triage.as_ref().map(|t| t.thresholds_used),
            decision: e.current_decision().map(|a| a.decision),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct AdjudicationRequest {
    pub decision: AdjudicationDecision,
    pub reviewer_id: String,
    #[serde(default)]
    pub note: String,
    /// Defaults to the current time.
    #[serde(default)]
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub total: usize,
    pub frontal: usize,
    pub flagged: usize,
    pub confirmed: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationCounts {
    pub confirmed_missed: usize,
    pub not_missed: usize,
    pub indeterminate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub funnel: Funnel,
    pub adjudication: AdjudicationCounts,
    pub by_status: BTreeMap<StudyStatus, usize>,
    /// Present when labelled studies have results and the labels have both classes.
    pub eval: Option<EvalTable>,
}

struct Inner {
    state: StoreState,
    log: Option<EventLog>,
}

impl Inner {
    fn commit(&mut self, events: Vec<Event>) -> Result<(), StoreError> {
        let now = chrono::Utc::now().timestamp();
        let mut seq = self.state.last_seq;
        let entries: Vec<EventLogEntry> = events
            .into_iter()
            .map(|event| {
                seq += 1;
                EventLogEntry { seq, timestamp: now, event }
            })
            .collect();
        if let Some(log) = self.log.as_mut() {
            log.append(&entries)?;
        }
        for e in &entries {
            self.state.apply(e).map_err(StoreError::Validation)?;
        }
        Ok(())
    }
}

pub struct Store {
    inner: Mutex<Inner>,
    classifier: ReportClassifier,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("log", &self.log_path()).finish_non_exhaustive()
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Self::from_parts(StoreState::default(), None)
    }

    /// Open the store in `dir`, replaying its event log.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let (log, entries) = EventLog::open(&dir.join(LOG_FILE))?;
        let state = StoreState::replay(&entries)?;
        ::log::info!("replayed {} events for {} studies", entries.len(), state.studies.len());
        Ok(Self::from_parts(state, Some(log)))
    }

    fn from_parts(state: StoreState, log: Option<EventLog>) -> Self {
        Self { inner: Mutex::new(Inner { state, log }), classifier: ReportClassifier::default() }
    }

    pub fn with_classifier(mut self, classifier: ReportClassifier) -> Self {
        self.classifier = classifier;
        self
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn log_path(&self) -> Option<PathBuf> {
        self.lock().log.as_ref().map(|l| l.path().to_path_buf())
    }

    pub fn snapshot(&self) -> StoreState {
        self.lock().state.clone()
    }

    pub fn study(&self, id: &str) -> Option<StudyEntry> {
        self.lock().state.studies.get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.lock().state.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flush(&self) -> Result<(), StoreError> {
        match self.lock().log.as_mut() {
            Some(log) => log.sync(),
            None => Ok(()),
        }
    }

    pub fn ingest_manifest(&self, path: &Path) -> Result<IngestReport, StoreError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| StoreError::FileUnreadable { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(self.ingest_text(&text, base))
    }

    /// Upsert every valid line; identical records produce no events.
    pub fn ingest_text(&self, text: &str, base: &Path) -> IngestReport {
        let parsed = parse_manifest(text, base);
        for w in &parsed.warnings {
            ::log::warn!("{w}");
        }
        let mut inner = self.lock();
        let mut report = IngestReport {
            ingested: parsed.records.len(),
            rejected: parsed.rejected,
            warnings: parsed.warnings,
            ..Default::default()
        };
        let mut events = Vec::new();
        for rec in parsed.records {
            if inner.state.studies.get(&rec.study_id).is_some_and(|e| e.record == rec) {
                report.unchanged += 1;
            } else {
                events.push(Event::Ingest(rec));
            }
        }
        if let Err(e) = inner.commit(events) {
            // nothing was applied; report every line as rejected rather than abort
            ::log::error!("ingest commit failed: {e}");
            report.rejected.push(Rejected { line: 0, reason: format!("store write failed: {e}") });
            report.ingested = 0;
        }
        report
    }

    /// Run the pipeline, report classifier and triage over matching studies.
    /// `workers == 0` uses one thread per core. Results are committed in
    /// study_id order, one chunk at a time.
    pub fn run_batch(
        &self,
        filter: &BatchFilter,
        backend: &dyn Backend,
        cfg: &PipelineConfig,
        workers: usize,
    ) -> Result<BatchSummary, StoreError> {
        cfg.validate().map_err(|e| StoreError::Validation(e.to_string()))?;
        let todo: Vec<StudyRecord> = {
            let inner = self.lock();
            inner.state.studies.values().filter(|e| filter.matches(e)).map(|e| e.record.clone()).collect()
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| StoreError::Validation(format!("worker pool: {e}")))?;
        let mut summary = BatchSummary::default();
        let mut done = 0usize;
        for chunk in todo.chunks(BATCH_CHUNK) {
            let outputs: Vec<(StudyResult, Option<TriagePayload>)> = pool.install(|| {
                chunk
                    .par_iter()
                    .map(|rec| {
                        let result = run_study(rec, backend, cfg);
                        let nlp = self.classifier.classify_report(&rec.report);
                        let triage = decide(&result, &nlp, cfg).ok().map(|decision| TriagePayload { decision, nlp });
                        (result, triage)
                    })
                    .collect()
            });
            let mut inner = self.lock();
            let mut events = Vec::new();
            for (rec, (result, triage)) in chunk.iter().zip(outputs) {
                // skip studies superseded or adjudicated while this chunk ran
                match inner.state.studies.get(&rec.study_id) {
                    Some(e) if e.record == *rec && filter.matches(e) => {}
                    _ => continue,
                }
                summary.processed += 1;
                match result.status {
                    ResultStatus::Errored => summary.errored += 1,
                    ResultStatus::NonFrontal => summary.skipped += 1,
                    ResultStatus::Completed => {}
                }
                if triage.as_ref().is_some_and(|t| t.decision.flagged) {
                    summary.flagged += 1;
                }
                events.push(Event::Result(result));
                events.extend(triage.map(Event::Triage));
            }
            inner.commit(events)?;
            drop(inner);
            let before = done;
            done += chunk.len();
            if done / 1000 > before / 1000 {
                ::log::info!("processed {done}/{} studies", todo.len());
            }
        }
        Ok(summary)
    }

    /// Summaries sorted by descending ensemble score, then study_id.
    /// Unscored studies sort last.
    pub fn worklist(&self, status: Option<StudyStatus>) -> Vec<StudySummary> {
        let inner = self.lock();
        let mut rows: Vec<StudySummary> = inner
            .state
            .studies
            .values()
            .filter(|e| status.is_none_or(|s| e.status == s))
            .map(StudySummary::from)
            .collect();
        rows.sort_by(|a, b| {
            let key = |s: &StudySummary| s.ensemble.unwrap_or(f64::NEG_INFINITY);
            key(b).total_cmp(&key(a)).then_with(|| a.study_id.cmp(&b.study_id))
        });
        rows
    }

    pub fn adjudicate(&self, study_id: &str, req: AdjudicationRequest) -> Result<StudyEntry, StoreError> {
        if req.reviewer_id.trim().is_empty() {
            return Err(StoreError::Validation("reviewer_id must not be empty".into()));
        }
        let mut inner = self.lock();
        let entry = inner.state.studies.get(study_id).ok_or_else(|| StoreError::UnknownStudy(study_id.into()))?;
        if entry.status != StudyStatus::Flagged {
            return Err(StoreError::NotFlagged { study_id: study_id.into(), status: entry.status });
        }
        let record = AdjudicationRecord {
            study_id: study_id.to_string(),
            decision: req.decision,
            reviewer_id: req.reviewer_id,
            note: req.note,
            timestamp: req.timestamp.unwrap_or_else(|| chrono::Utc::now().timestamp()),
        };
        inner.commit(vec![Event::Adjudication(record)])?;
        Ok(inner.state.studies[study_id].clone())
    }

    pub fn metrics(&self) -> Metrics {
        let inner = self.lock();
        let studies = &inner.state.studies;
        let mut by_status: BTreeMap<StudyStatus, usize> = StudyStatus::ALL.iter().map(|&s| (s, 0)).collect();
        let mut funnel = Funnel { total: studies.len(), ..Default::default() };
        let mut adjudication = AdjudicationCounts::default();
        for e in studies.values() {
            *by_status.entry(e.status).or_default() += 1;
            if e.result.as_ref().is_some_and(|r| r.frontal) {
                funnel.frontal += 1;
            }
            if e.triage.as_ref().is_some_and(|t| t.flagged) {
                funnel.flagged += 1;
            }
            match e.current_decision().map(|a| a.decision) {
                Some(AdjudicationDecision::ConfirmedMissed) => adjudication.confirmed_missed += 1,
                Some(AdjudicationDecision::NotMissed) => adjudication.not_missed += 1,
                Some(AdjudicationDecision::Indeterminate) => adjudication.indeterminate += 1,
                None => {}
            }
        }
        funnel.confirmed = adjudication.confirmed_missed;
        let (results, labels): (Vec<StudyResult>, Vec<_>) = studies
            .values()
            .filter_map(|e| Some((e.result.clone()?, e.record.labels.clone()?)))
            .unzip();
        let eval = if results.is_empty() { None } else { stratified_eval(&results, &labels, &Method::TABLE).ok() };
        Metrics { funnel, adjudication, by_status, eval }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::OracleBackend;
    use crate::imaging::{save_pgm, ImageGray};

    fn write_study_images(dir: &Path, n: usize) {
        let img = ImageGray::from_fn(64, 64, |x, y| ((x + y) % 7) as f32 / 7.0).unwrap();
        for i in 0..n {
            std::fs::write(dir.join(format!("s{i}.pgm")), save_pgm(&img)).unwrap();
        }
    }

    fn manifest(n: usize, flagged: &[usize]) -> String {
        (0..n)
            .map(|i| {
                let ptx = flagged.contains(&i);
                format!(
                    r#"{{"study_id":"s{i}","image_path":"s{i}.pgm","report":"No acute findings.","labels":{{"pneumothorax":{ptx},"chest_tube":false}},"oracle":{{"pneumothorax":{ptx},"chest_tube":false,"view":"PA"}}}}"#
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn setup(n: usize, flagged: &[usize]) -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        write_study_images(dir.path(), n);
        let store = Store::open(&dir.path().join("store")).unwrap();
        let rep = store.ingest_text(&manifest(n, flagged), dir.path());
        assert_eq!(rep.ingested, n);
        (dir, store)
    }

    fn req(decision: AdjudicationDecision) -> AdjudicationRequest {
        AdjudicationRequest { decision, reviewer_id: "rad1".into(), note: String::new(), timestamp: Some(1) }
    }

    #[test]
    fn ingest_is_idempotent() {
        let (dir, store) = setup(3, &[]);
        let before = store.snapshot();
        let rep = store.ingest_text(&manifest(3, &[]), dir.path());
        assert_eq!(rep.unchanged, 3);
        assert_eq!(store.snapshot(), before);
    }

    #[test]
    fn batch_flags_and_worklist_orders() {
        let (_dir, store) = setup(6, &[1, 4]);
        let backend = OracleBackend::new(0.05, 7);
        let s = store.run_batch(&BatchFilter::default(), &backend, &PipelineConfig::default(), 2).unwrap();
        assert_eq!(s, BatchSummary { processed: 6, flagged: 2, errored: 0, skipped: 0 });
        let wl = store.worklist(Some(StudyStatus::Flagged));
        assert_eq!(wl.len(), 2);
        assert!(wl[0].ensemble >= wl[1].ensemble);
        for row in &wl {
            let e = store.study(&row.study_id).unwrap();
            let t = e.triage.as_ref().unwrap();
            assert!(t.flagged && t.consistent_with(e.result.as_ref().unwrap(), e.nlp.as_ref().unwrap()));
        }
        // rerun gives the same summary
        let again = store.run_batch(&BatchFilter::default(), &backend, &PipelineConfig::default(), 1).unwrap();
        assert_eq!(again, s);
        assert!(store.worklist(Some(StudyStatus::Adjudicated)).is_empty());
    }

    #[test]
    fn worklist_ties_break_by_id() {
        let (_dir, store) = setup(4, &[0, 1, 2, 3]);
        store.run_batch(&BatchFilter::default(), &OracleBackend::new(0.0, 0), &PipelineConfig::default(), 1).unwrap();
        let ids: Vec<String> = store.worklist(Some(StudyStatus::Flagged)).into_iter().map(|r| r.study_id).collect();
        assert_eq!(ids, vec!["s0", "s1", "s2", "s3"]);
    }

    #[test]
    fn adjudication_rules() {
        let (_dir, store) = setup(3, &[1]);
        store.run_batch(&BatchFilter::default(), &OracleBackend::new(0.0, 0), &PipelineConfig::default(), 1).unwrap();
        assert!(matches!(store.adjudicate("nope", req(AdjudicationDecision::NotMissed)), Err(StoreError::UnknownStudy(_))));
        assert!(matches!(store.adjudicate("s0", req(AdjudicationDecision::NotMissed)), Err(StoreError::NotFlagged { .. })));
        let mut bad = req(AdjudicationDecision::NotMissed);
        bad.reviewer_id = " ".into();
        assert!(matches!(store.adjudicate("s1", bad), Err(StoreError::Validation(_))));

        let e = store.adjudicate("s1", req(AdjudicationDecision::Indeterminate)).unwrap();
        assert_eq!(e.status, StudyStatus::Flagged);
        let e = store.adjudicate("s1", req(AdjudicationDecision::ConfirmedMissed)).unwrap();
        assert_eq!(e.status, StudyStatus::Adjudicated);
        assert_eq!(e.adjudications.len(), 2);
        assert_eq!(e.current_decision().unwrap().decision, AdjudicationDecision::ConfirmedMissed);
        assert!(matches!(store.adjudicate("s1", req(AdjudicationDecision::NotMissed)), Err(StoreError::NotFlagged { .. })));

        let m = store.metrics();
        assert_eq!(m.funnel, Funnel { total: 3, frontal: 3, flagged: 1, confirmed: 1 });
        assert_eq!(m.by_status[&StudyStatus::Adjudicated], 1);

        // the default batch filter leaves adjudicated studies alone
        let s = store.run_batch(&BatchFilter::default(), &OracleBackend::new(0.0, 0), &PipelineConfig::default(), 1).unwrap();
        assert_eq!(s.processed, 2);
        assert_eq!(store.study("s1").unwrap().status, StudyStatus::Adjudicated);
    }

    #[test]
    fn reopen_replays_to_identical_state() {
        let (dir, store) = setup(5, &[2]);
        store.run_batch(&BatchFilter::default(), &OracleBackend::new(0.05, 3), &PipelineConfig::default(), 2).unwrap();
        store.adjudicate("s2", req(AdjudicationDecision::NotMissed)).unwrap();
        let live = store.snapshot();
        drop(store);
        let reopened = Store::open(&dir.path().join("store")).unwrap();
        assert_eq!(reopened.snapshot(), live);
    }

    #[test]
    fn missing_images_are_errors_not_failures() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::in_memory();
        store.ingest_text(&manifest(2, &[]), dir.path());
        let s = store.run_batch(&BatchFilter::default(), &OracleBackend::new(0.0, 0), &PipelineConfig::default(), 1).unwrap();
        assert_eq!(s, BatchSummary { processed: 2, flagged: 0, errored: 2, skipped: 0 });
        assert_eq!(store.study("s0").unwrap().status, StudyStatus::Errored);
        assert!(store.study("s0").unwrap().triage.is_none());
    }

    #[test]
    fn filter_by_ids_and_status() {
        let (_dir, store) = setup(4, &[]);
        let f = BatchFilter { study_ids: Some(["s1".to_string()].into()), ..Default::default() };
        let s = store.run_batch(&f, &OracleBackend::new(0.0, 0), &PipelineConfig::default(), 1).unwrap();
        assert_eq!(s.processed, 1);
        let f = BatchFilter { statuses: Some([StudyStatus::Ingested].into()), ..Default::default() };
        let s = store.run_batch(&f, &OracleBackend::new(0.0, 0), &PipelineConfig::default(), 1).unwrap();
        assert_eq!(s.processed, 3);
    }

    #[test]
    fn changed_record_restarts_processing() {
        let (dir, store) = setup(2, &[0]);
        store.run_batch(&BatchFilter::default(), &OracleBackend::new(0.0, 0), &PipelineConfig::default(), 1).unwrap();
        let text = manifest(2, &[0]).replace("No acute findings.", "Small right pneumothorax.");
        let rep = store.ingest_text(&text, dir.path());
        assert_eq!(rep.unchanged, 0);
        let e = store.study("s0").unwrap();
        assert_eq!(e.status, StudyStatus::Ingested);
        assert!(e.result.is_none());
    }

    #[test]
    fn status_parse() {
        for s in StudyStatus::ALL {
            assert_eq!(s.as_str().parse::<StudyStatus>().unwrap(), s);
            assert_eq!(serde_json::to_value(s).unwrap(), s.as_str());
        }
        assert!("bogus".parse::<StudyStatus>().is_err());
    }
}
