//! Rule-based pneumothorax report classifier.
//!
//! Reports are split into sentences; within each sentence every target term
//! is checked for a governing negation cue (before it within 6 tokens or
//! after it within 4 tokens, not crossing a scope terminator). A report is
//! positive iff at least one mention is not negated. Hedged mentions
//! ("possible", "cannot exclude") stay positive and are marked `uncertain`.
//!
//! All offsets are in characters (Unicode scalar values) of the original text.

mod lexicon;

use serde::{Deserialize, Serialize};

pub use lexicon::{Cue, Lexicon, LexiconError};

pub const PRE_NEGATION_WINDOW: usize = 6;
pub const POST_NEGATION_WINDOW: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negated,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub sentence_index: usize,
    /// `[start, end)` character offsets into the report text.
    pub span: (usize, usize),
    pub polarity: Polarity,
    pub uncertain: bool,
    /// The negation cue that governs this mention, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportClassification {
    pub positive: bool,
    pub mentions: Vec<Mention>,
    pub sentence_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub lower: String,
    pub start: usize,
    pub end: usize,
}

/// Alphanumeric runs with character offsets.
pub(crate) fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut current: Option<(usize, String)> = None;
    let mut n = 0;
    for (i, ch) in text.chars().enumerate() {
        n = i + 1;
        if ch.is_alphanumeric() {
            let (_, buf) = current.get_or_insert_with(|| (i, String::new()));
            buf.extend(ch.to_lowercase());
        } else if let Some((start, lower)) = current.take() {
            out.push(Token { lower, start, end: i });
        }
    }
    if let Some((start, lower)) = current {
        out.push(Token { lower, start, end: n });
    }
    out
}

/// Split on `.`, `?`, `!` and newlines, trimming whitespace and dropping empty
/// pieces. A `.` between two digits (as in "1.5 cm") does not split.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let is_break = |i: usize| match chars[i] {
        '?' | '!' | '\n' => true,
        '.' => !(i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_ascii_digit()
            && chars[i + 1].is_ascii_digit()),
        _ => false,
    };
    let mut out = Vec::new();
    let mut push = |mut s: usize, mut e: usize| {
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            out.push(Sentence { index: out.len(), start: s, end: e, text: chars[s..e].iter().collect() });
        }
    };
    let mut start = 0;
    for i in 0..chars.len() {
        if is_break(i) {
            push(start, i);
            start = i + 1;
        }
    }
    push(start, chars.len());
    out
}

fn find_all(tokens: &[Token], cues: &[Cue]) -> Vec<(usize, usize, String)> {
    let mut hits = Vec::new();
    for cue in cues {
        if cue.is_empty() || cue.len() > tokens.len() {
            continue;
        }
        for i in 0..=tokens.len() - cue.len() {
            if cue.iter().zip(&tokens[i..]).all(|(c, t)| *c == t.lower) {
                hits.push((i, i + cue.len(), cue.join(" ")));
            }
        }
    }
    hits
}

/// Classifier bound to a lexicon.
#[derive(Debug, Clone, Default)]
pub struct ReportClassifier {
    lexicon: Lexicon,
}

impl ReportClassifier {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    fn mentions_in(&self, sentence: &Sentence) -> Vec<Mention> {
        let lex = &self.lexicon;
        let mut tokens = tokenize(&sentence.text);
        for t in &mut tokens {
            t.start += sentence.start;
            t.end += sentence.start;
        }
        let pseudo = find_all(&tokens, &lex.pseudo_negation);
        let not_pseudo = |&(s, e, _): &(usize, usize, String)| !pseudo.iter().any(|(ps, pe, _)| *ps <= s && e <= *pe);
        let pre: Vec<_> = find_all(&tokens, &lex.pre_negation).into_iter().filter(not_pseudo).collect();
        let post: Vec<_> = find_all(&tokens, &lex.post_negation).into_iter().filter(not_pseudo).collect();
        let uncertain = find_all(&tokens, &lex.uncertainty);
        let terminators: Vec<usize> = find_all(&tokens, &lex.terminators).into_iter().map(|(s, _, _)| s).collect();
        let blocked = |from: usize, to: usize| terminators.iter().any(|&k| k >= from && k < to);

        let mut targets = find_all(&tokens, &lex.targets);
        targets.sort_by_key(|(s, e, _)| (*s, std::cmp::Reverse(*e)));
        // drop targets nested inside an earlier, longer target
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for (s, e, _) in targets {
            if !kept.iter().any(|&(ks, ke)| ks <= s && e <= ke) {
                kept.push((s, e));
            }
        }

        kept.into_iter()
            .map(|(ts, te)| {
                let pre_cue = pre
                    .iter()
                    .filter(|(_, ce, _)| *ce <= ts && ts - (ce - 1) <= PRE_NEGATION_WINDOW && !blocked(*ce, ts))
                    .max_by_key(|(_, ce, _)| *ce);
                let post_cue = post
                    .iter()
                    .filter(|(cs, _, _)| *cs >= te && cs - (te - 1) <= POST_NEGATION_WINDOW && !blocked(te, *cs))
                    .min_by_key(|(cs, _, _)| *cs);
                let cue = pre_cue.or(post_cue).map(|(_, _, c)| c.clone());
                let is_uncertain = uncertain.iter().any(|(us, ue, _)| {
                    (*ue <= ts && ts - (ue - 1) <= PRE_NEGATION_WINDOW) || (*us >= te && us - (te - 1) <= POST_NEGATION_WINDOW)
                });
                Mention {
                    sentence_index: sentence.index,
                    span: (tokens[ts].start, tokens[te - 1].end),
                    polarity: if cue.is_some() { Polarity::Negated } else { Polarity::Positive },
                    uncertain: is_uncertain,
                    cue,
                }
            })
            .collect()
    }

    pub fn classify_sentence(&self, sentence: &Sentence) -> Polarity {
        let mentions = self.mentions_in(sentence);
        if mentions.is_empty() {
            Polarity::None
        } else if mentions.iter().any(|m| m.polarity == Polarity::Positive) {
            Polarity::Positive
        } else {
            Polarity::Negated
        }
    }

    pub fn classify_text(&self, sentence_text: &str) -> Polarity {
        let sentence = Sentence {
            index: 0,
            start: 0,
            end: sentence_text.chars().count(),
            text: sentence_text.to_string(),
        };
        self.classify_sentence(&sentence)
    }

    pub fn classify_report(&self, text: &str) -> ReportClassification {
        let sentences = split_sentences(text);
        let mentions: Vec<Mention> = sentences.iter().flat_map(|s| self.mentions_in(s)).collect();
        ReportClassification {
            positive: mentions.iter().any(|m| m.polarity == Polarity::Positive),
            mentions,
            sentence_count: sentences.len(),
        }
    }
}

/// Classify with the bundled lexicon.
pub fn classify_report(text: &str) -> ReportClassification {
    ReportClassifier::default().classify_report(text)
}
