use std::path::Path;

use thiserror::Error;

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.txt");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: cue outside of any section")]
    NoSection { line: usize },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("lexicon has no targets")]
    NoTargets,
    #[error("cannot read lexicon: {0}")]
    Io(#[from] std::io::Error),
}

const SECTIONS: [&str; 6] =
    ["targets", "pre_negation", "post_negation", "uncertainty", "terminators", "pseudo_negation"];

/// A cue is a lowercase token sequence.
pub type Cue = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub targets: Vec<Cue>,
    pub pre_negation: Vec<Cue>,
    pub post_negation: Vec<Cue>,
    pub uncertainty: Vec<Cue>,
    pub terminators: Vec<Cue>,
    pub pseudo_negation: Vec<Cue>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

fn to_cue(line: &str) -> Cue {
    super::tokenize(line).into_iter().map(|t| t.lower).collect()
}

impl Lexicon {
    /// Parse the sectioned plain-text format: `[section]` headers, one cue
    /// per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = Lexicon {
            targets: Vec::new(),
            pre_negation: Vec::new(),
            post_negation: Vec::new(),
            uncertainty: Vec::new(),
            terminators: Vec::new(),
            pseudo_negation: Vec::new(),
        };
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(LexiconError::UnknownSection { line: i + 1, name });
                }
                section = Some(name);
                continue;
            }
            let cue = to_cue(line);
            if cue.is_empty() {
                continue;
            }
            let bucket = match section.as_deref() {
                None => return Err(LexiconError::NoSection { line: i + 1 }),
                Some("targets") => &mut lex.targets,
                Some("pre_negation") => &mut lex.pre_negation,
                Some("post_negation") => &mut lex.post_negation,
                Some("uncertainty") => &mut lex.uncertainty,
                Some("terminators") => &mut lex.terminators,
                Some("pseudo_negation") => &mut lex.pseudo_negation,
                Some(_) => unreachable!("section names are checked at the header"),
            };
            if !bucket.contains(&cue) {
                bucket.push(cue);
            }
        }
        if lex.targets.is_empty() {
            return Err(LexiconError::NoTargets);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lexicon_sections() {
        let lex = Lexicon::default();
        assert_eq!(lex.targets.len(), 4);
        assert!(lex.pre_negation.contains(&vec!["no".to_string(), "evidence".into(), "of".into()]));
        assert!(lex.post_negation.contains(&vec!["is".to_string(), "not".into(), "seen".into()]));
        assert!(lex.uncertainty.contains(&vec!["cannot".to_string(), "exclude".into()]));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Lexicon::parse("pneumothorax"), Err(LexiconError::NoSection { line: 1 })));
        assert!(matches!(
            Lexicon::parse("[targets]\nptx\n[bogus]\nx"),
            Err(LexiconError::UnknownSection { line: 3, .. })
        ));
        assert!(matches!(Lexicon::parse("# nothing\n[pre_negation]\nno"), Err(LexiconError::NoTargets)));
    }

    #[test]
    fn custom_lexicon_extends_targets() {
        let lex = Lexicon::parse("[targets]\npneumothorax\npneumo thorax # split spelling\n").unwrap();
        assert_eq!(lex.targets[1], vec!["pneumo".to_string(), "thorax".into()]);
    }
}
