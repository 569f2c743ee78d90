//! Transcript-level cues: insult keywords, a rule-based address formality
//! classifier and linguistic complexity on a 1 to 7 scale.

pub mod complexity;
pub mod text;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use complexity::{
    complexity_features, ComplexityFeatures, ComplexityModel, ComplexityScore, LinguisticComplexity,
};
pub use text::{fold, tokenize, FrequencyList, Lexicon, Token};

/// Bundled German insult lexicon.
pub const INSULTS_DE: &str = include_str!("../../data/insults_de.txt");
/// Bundled German frequency list (`token<TAB>rank`).
pub const FREQUENCY_DE: &str = include_str!("../../data/frequency_de.tsv");
/// Bundled German subordinate-clause markers.
pub const CLAUSE_MARKERS_DE: &str = include_str!("../../data/clause_markers_de.txt");
/// Bundled sentences whose feature ranges calibrate the complexity scale.
pub const COMPLEXITY_CORPUS_DE: &str = include_str!("../../data/complexity_corpus_de.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub speaker: String,
    pub t0: f64,
    pub t1: f64,
}

impl Utterance {
    pub fn new(text: impl Into<String>, speaker: impl Into<String>, t0: f64, t1: f64) -> Result<Self> {
        if !(t1 >= t0) {
            return Err(invalid("utterance ends before it starts"));
        }
        Ok(Self {
            text: text.into(),
            speaker: speaker.into(),
            t0,
            t1,
        })
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsultHit {
    /// Folded lexicon term that matched.
    pub term: String,
    /// 1-based index of the first matching token.
    pub token: usize,
    /// Byte span of the match in the utterance text.
    pub start: usize,
    pub end: usize,
}

/// Whole-word lexicon matches, multi-word terms matching consecutive tokens.
/// Overlapping matches are all reported.
pub fn detect_insults(text: &str, lexicon: &Lexicon) -> Vec<InsultHit> {
    let tokens = tokenize(text);
    let mut hits = Vec::new();
    for i in 0..tokens.len() {
        for term in lexicon.terms() {
            let end = i + term.len();
            if end <= tokens.len() && tokens[i..end].iter().zip(term).all(|(t, w)| t.folded == *w) {
                hits.push(InsultHit {
                    term: term.join(" "),
                    token: i + 1,
                    start: tokens[i].start,
                    end: tokens[end - 1].end,
                });
            }
        }
    }
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formality {
    Formal,
    Informal,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormalityVerdict {
    pub label: Formality,
    /// Tokens supporting the label.
    pub evidence: Vec<String>,
    /// Sentence-initial polite forms, which cannot be told apart from the
    /// third person plural.
    #[serde(default)]
    pub ambiguous: Vec<String>,
}

const INFORMAL: [&str; 9] = [
    "du", "dich", "dir", "dein", "deine", "deinem", "deinen", "deiner", "deines",
];
const FORMAL: [&str; 3] = ["Sie", "Ihnen", "Ihrer"];

/// Informal address wins over formal address when both occur.
pub fn classify_formality(text: &str) -> FormalityVerdict {
    let mut informal = Vec::new();
    let mut formal = Vec::new();
    let mut ambiguous = Vec::new();
    for t in tokenize(text) {
        if INFORMAL.contains(&t.folded.as_str()) {
            informal.push(t.folded.clone());
        } else if FORMAL.contains(&t.text) {
            if t.sentence_initial {
                ambiguous.push(t.text.to_string());
            } else {
                formal.push(t.text.to_string());
            }
        }
    }
    let (label, evidence) = if !informal.is_empty() {
        (Formality::Informal, informal)
    } else if !formal.is_empty() {
        (Formality::Formal, formal)
    } else {
        (Formality::Neutral, Vec::new())
    };
    FormalityVerdict {
        label,
        evidence,
        ambiguous,
    }
}

/// Source of formality verdicts; an external model service can stand in for
/// the rules.
pub trait FormalityProvider {
    fn formality(&self, text: &str) -> Result<FormalityVerdict>;
}

/// Source of complexity scores.
pub trait ComplexityProvider {
    fn complexity(&self, text: &str) -> Result<ComplexityScore>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleFormality;

impl FormalityProvider for RuleFormality {
    fn formality(&self, text: &str) -> Result<FormalityVerdict> {
        Ok(classify_formality(text))
    }
}

/// Per-utterance verbal cues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbalAnalysis {
    pub t0: f64,
    pub t1: f64,
    pub speaker: String,
    pub insults: Vec<InsultHit>,
    pub formality: FormalityVerdict,
    /// Absent for utterances without words.
    pub complexity: Option<ComplexityScore>,
    pub word_count: usize,
}

pub fn analyze_utterance(
    utterance: &Utterance,
    lexicon: &Lexicon,
    formality: &dyn FormalityProvider,
    complexity: &dyn ComplexityProvider,
) -> Result<VerbalAnalysis> {
    let word_count = complexity::word_count(&utterance.text);
    Ok(VerbalAnalysis {
        t0: utterance.t0,
        t1: utterance.t1,
        speaker: utterance.speaker.clone(),
        insults: detect_insults(&utterance.text, lexicon),
        formality: formality.formality(&utterance.text)?,
        complexity: if word_count > 0 {
            Some(complexity.complexity(&utterance.text)?)
        } else {
            None
        },
        word_count,
    })
}
