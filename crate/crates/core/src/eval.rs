//! ROC AUC and tube-stratified evaluation.
//!
//! AUC is the Mann-Whitney statistic computed from average ranks, so ties
//! contribute one half. Strata come from the ground-truth tube label:
//! all studies, studies without a chest tube, studies with one.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::StudyResult;
use crate::study::{Labels, TubeType};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least one positive and one negative label (got {positives} positive, {negatives} negative)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("unknown method '{0}'")]
    UnknownMethod(String),
}

/// Area under the ROC curve via the rank-sum form of the Mann-Whitney U
/// statistic with average ranks for ties. `O(n log n)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(bad));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::DegenerateLabels { positives, negatives });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share their mean
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += avg_rank * tied_pos as f64;
        i = j;
    }
    let (np, nn) = (positives as f64, negatives as f64);
    let u = pos_rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Relative AUC change in percent.
pub fn pct_change(auc_all: f64, auc_stratum: f64) -> f64 {
    100.0 * (auc_stratum - auc_all) / auc_all
}

/// Half-away-from-zero rounding to one decimal, without a negative zero.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0 + 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    A,
    B,
    C,
    EnsAc,
    EnsAbc,
    /// Whatever ensemble the pipeline config selected.
    Ensemble,
}

impl Method {
    pub const TABLE: [Method; 5] = [Method::A, Method::B, Method::C, Method::EnsAc, Method::EnsAbc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::A => "a",
            Method::B => "b",
            Method::C => "c",
            Method::EnsAc => "ens_ac",
            Method::EnsAbc => "ens_abc",
            Method::Ensemble => "ensemble",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            Method::A => "A - full image",
            Method::B => "B - apical/basilar",
            Method::C => "C - segmentation",
            Method::EnsAc => "Ensemble A + C",
            Method::EnsAbc => "Ensemble A + B + C",
            Method::Ensemble => "Configured ensemble",
        }
    }

    /// Parse a comma-separated list such as `a,b,c,ens_ac,ens_abc`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>, EvalError> {
        s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(Method::from_str).collect()
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Method::A, Method::B, Method::C, Method::EnsAc, Method::EnsAbc, Method::Ensemble]
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    pub method_name: String,
    pub auc_all: Option<f64>,
    pub auc_no_tubes: Option<f64>,
    pub auc_only_tubes: Option<f64>,
    pub pct_change_no_tubes: Option<f64>,
    /// Studies that had a score for this method (errored and non-frontal
    /// studies carry none and are left out of every stratum's AUC).
    pub n_scored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StrataSizes {
    pub n_all: usize,
    pub n_pos_all: usize,
    pub n_no_tubes: usize,
    pub n_pos_no_tubes: usize,
    pub n_only_tubes: usize,
    pub n_pos_only_tubes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeAuc {
    pub standard: Option<f64>,
    pub pigtail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    pub strata: StrataSizes,
    pub tube_auc: TubeAuc,
}

fn stratum_auc(
    results: &[StudyResult],
    labels: &[Labels],
    method: Method,
    keep: impl Fn(&Labels) -> bool,
) -> Option<f64> {
    let (scores, ys): (Vec<f64>, Vec<bool>) = results
        .iter()
        .zip(labels)
        .filter(|(_, l)| keep(l))
        .filter_map(|(r, l)| r.method_score(method).map(|s| (s, l.pneumothorax)))
        .unzip();
    auc(&scores, &ys).ok()
}

fn tube_type_auc(results: &[StudyResult], labels: &[Labels], kind: TubeType) -> Option<f64> {
    let (scores, ys): (Vec<f64>, Vec<bool>) = results
        .iter()
        .zip(labels)
        .filter_map(|(r, l)| {
            let t = r.tube?;
            let score = match kind {
                TubeType::Standard => t.standard,
                TubeType::Pigtail => t.pigtail,
            };
            Some((score, l.chest_tube && l.tube_type.unwrap_or(TubeType::Standard) == kind))
        })
        .unzip();
    auc(&scores, &ys).ok()
}

/// Per-method AUC on all studies, the no-tube stratum and the tube stratum.
/// A stratum lacking positives or negatives reports `None`.
pub fn stratified_eval(
    results: &[StudyResult],
    labels: &[Labels],
    methods: &[Method],
) -> Result<EvalTable, EvalError> {
    if results.len() != labels.len() {
        return Err(EvalError::Misaligned(format!("{} results vs {} labels", results.len(), labels.len())));
    }
    let count = |f: &dyn Fn(&Labels) -> bool| labels.iter().filter(|l| f(l)).count();
    let strata = StrataSizes {
        n_all: labels.len(),
        n_pos_all: count(&|l| l.pneumothorax),
        n_no_tubes: count(&|l| !l.chest_tube),
        n_pos_no_tubes: count(&|l| !l.chest_tube && l.pneumothorax),
        n_only_tubes: count(&|l| l.chest_tube),
        n_pos_only_tubes: count(&|l| l.chest_tube && l.pneumothorax),
    };
    let rows = methods
        .iter()
        .map(|&m| {
            let auc_all = stratum_auc(results, labels, m, |_| true);
            let auc_no_tubes = stratum_auc(results, labels, m, |l| !l.chest_tube);
            let auc_only_tubes = stratum_auc(results, labels, m, |l| l.chest_tube);
            let pct_change_no_tubes = match (auc_all, auc_no_tubes) {
                (Some(all), Some(no)) if all > 0.0 => Some(pct_change(all, no)),
                _ => None,
            };
            EvalRow {
                method: m,
                method_name: m.display_name().to_string(),
                auc_all,
                auc_no_tubes,
                auc_only_tubes,
                pct_change_no_tubes,
                n_scored: results.iter().filter(|r| r.method_score(m).is_some()).count(),
            }
        })
        .collect();
    let tube_auc = TubeAuc {
        standard: tube_type_auc(results, labels, TubeType::Standard),
        pigtail: tube_type_auc(results, labels, TubeType::Pigtail),
    };
    Ok(EvalTable { rows, strata, tube_auc })
}

fn fmt_auc(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

pub fn format_pct(v: f64) -> String {
    format!("{:.1}%", round1(v))
}

/// Plain-text rendering in the column order
/// method | AUC all | AUC no tubes | AUC only tubes | % change with no tubes.
pub fn format_table(t: &EvalTable) -> String {
    let header = ["Method", "AUC (all data)", "AUC (no tubes)", "AUC (only tubes)", "AUC % change with no tubes"];
    let mut rows: Vec<[String; 5]> = vec![header.map(String::from)];
    for r in &t.rows {
        rows.push([
            r.method_name.clone(),
            fmt_auc(r.auc_all),
            fmt_auc(r.auc_no_tubes),
            fmt_auc(r.auc_only_tubes),
            r.pct_change_no_tubes.map_or_else(|| "-".to_string(), format_pct),
        ]);
    }
    let widths: Vec<usize> = (0..5).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| if c == 0 { format!("{cell:<w$}", w = widths[c]) } else { format!("{cell:>w$}", w = widths[c]) })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    let s = &t.strata;
    let _ = writeln!(
        out,
        "\nstudies: {} ({} positive) | no tubes: {} ({} positive) | only tubes: {} ({} positive)",
        s.n_all, s.n_pos_all, s.n_no_tubes, s.n_pos_no_tubes, s.n_only_tubes, s.n_pos_only_tubes
    );
    let _ = writeln!(
        out,
        "tube AUC: standard {} | pigtail {}",
        fmt_auc(t.tube_auc.standard),
        fmt_auc(t.tube_auc.pigtail)
    );
    out
}
