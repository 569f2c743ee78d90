//! Linguistic complexity: four surface features mapped linearly onto a
//! 1 to 7 scale.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, Error, Result};

use super::text::{tokenize, FrequencyList, Lexicon};
use super::{ComplexityProvider, CLAUSE_MARKERS_DE, COMPLEXITY_CORPUS_DE, FREQUENCY_DE};

pub const MIN_SCORE: f64 = 1.0;
pub const MAX_SCORE: f64 = 7.0;
/// Words ranked beyond this, or missing from the list, count as rare.
pub const DEFAULT_RARE_RANK: u32 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityFeatures {
    pub sentence_length_words: f64,
    pub mean_word_length_chars: f64,
    pub clause_marker_count: f64,
    pub rare_word_ratio: f64,
}

impl ComplexityFeatures {
    pub fn to_array(&self) -> [f64; 4] {
        [
            self.sentence_length_words,
            self.mean_word_length_chars,
            self.clause_marker_count,
            self.rare_word_ratio,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore {
    pub score: f64,
    pub features: ComplexityFeatures,
}

fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphabetic)
}

pub(crate) fn word_count(text: &str) -> usize {
    tokenize(text).iter().filter(|t| is_word(t.text)).count()
}

/// Features of `text`; errors when it contains no words.
pub fn complexity_features(
    text: &str,
    frequency: &FrequencyList,
    clause_markers: &Lexicon,
    rare_rank: u32,
) -> Result<ComplexityFeatures> {
    let words: Vec<_> = tokenize(text).into_iter().filter(|t| is_word(t.text)).collect();
    if words.is_empty() {
        return Err(Error::Empty);
    }
    let n = words.len() as f64;
    let chars: usize = words.iter().map(|w| w.text.chars().count()).sum();
    let markers = words
        .iter()
        .filter(|w| clause_markers.contains_word(&w.folded))
        .count();
    let rare = words
        .iter()
        .filter(|w| frequency.rank(&w.folded).map_or(true, |r| r > rare_rank))
        .count();
    Ok(ComplexityFeatures {
        sentence_length_words: n,
        mean_word_length_chars: chars as f64 / n,
        clause_marker_count: markers as f64,
        rare_word_ratio: rare as f64 / n,
    })
}

/// `score = clamp(1 + Σ wᵢ (fᵢ − loᵢ) / (hiᵢ − loᵢ), 1, 7)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityModel {
    pub low: [f64; 4],
    pub high: [f64; 4],
    /// Non-negative so that every feature pushes the score upward.
    pub weights: [f64; 4],
}

impl ComplexityModel {
    /// Feature ranges from a reference corpus, equal weights summing to the
    /// width of the scale.
    pub fn fit(corpus: &[ComplexityFeatures]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty);
        }
        let mut low = [f64::INFINITY; 4];
        let mut high = [f64::NEG_INFINITY; 4];
        for f in corpus {
            for (i, v) in f.to_array().into_iter().enumerate() {
                low[i] = low[i].min(v);
                high[i] = high[i].max(v);
            }
        }
        if low.iter().zip(&high).any(|(l, h)| !(h > l)) {
            return Err(degenerate("a complexity feature is constant over the corpus"));
        }
        Ok(Self {
            low,
            high,
            weights: [(MAX_SCORE - MIN_SCORE) / 4.0; 4],
        })
    }

    pub fn with_weights(mut self, weights: [f64; 4]) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(crate::error::invalid("complexity weights must be finite and non-negative"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn score(&self, f: &ComplexityFeatures) -> f64 {
        let raw: f64 = f
            .to_array()
            .iter()
            .enumerate()
            .map(|(i, v)| self.weights[i] * (v - self.low[i]) / (self.high[i] - self.low[i]))
            .sum();
        (MIN_SCORE + raw).clamp(MIN_SCORE, MAX_SCORE)
    }
}

/// Rule-based complexity scorer built from word lists and a calibrated
/// linear model.
#[derive(Debug, Clone)]
pub struct LinguisticComplexity {
    pub frequency: FrequencyList,
    pub clause_markers: Lexicon,
    pub rare_rank: u32,
    pub model: ComplexityModel,
}

impl LinguisticComplexity {
    /// Bundled German lists, calibrated on the bundled corpus.
    pub fn german() -> Result<Self> {
        let frequency = FrequencyList::parse(FREQUENCY_DE)?;
        let clause_markers = Lexicon::parse(CLAUSE_MARKERS_DE);
        Self::calibrated(frequency, clause_markers, DEFAULT_RARE_RANK, COMPLEXITY_CORPUS_DE)
    }

    /// Fits the model on one sentence per line of `corpus` (`#` comments).
    pub fn calibrated(
        frequency: FrequencyList,
        clause_markers: Lexicon,
        rare_rank: u32,
        corpus: &str,
    ) -> Result<Self> {
        let features = corpus
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| complexity_features(l, &frequency, &clause_markers, rare_rank))
            .collect::<Result<Vec<_>>>()?;
        let model = ComplexityModel::fit(&features)?;
        Ok(Self {
            frequency,
            clause_markers,
            rare_rank,
            model,
        })
    }

    pub fn features(&self, text: &str) -> Result<ComplexityFeatures> {
        complexity_features(text, &self.frequency, &self.clause_markers, self.rare_rank)
    }
}

impl ComplexityProvider for LinguisticComplexity {
    fn complexity(&self, text: &str) -> Result<ComplexityScore> {
        let features = self.features(text)?;
        Ok(ComplexityScore {
            score: self.model.score(&features),
            features,
        })
    }
}

/// Scores `text` with a given model and word lists.
pub fn complexity_score(text: &str, scorer: &LinguisticComplexity) -> Result<ComplexityScore> {
    scorer.complexity(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn german() -> LinguisticComplexity {
        LinguisticComplexity::german().unwrap()
    }

    #[test]
    fn halt_is_near_one() {
        let s = german().complexity("Halt.").unwrap();
        assert_eq!(s.features.sentence_length_words, 1.0);
        assert_eq!(s.features.mean_word_length_chars, 4.0);
        assert_eq!(s.features.clause_marker_count, 0.0);
        assert_eq!(s.features.rare_word_ratio, 0.0);
        assert!(s.score < 1.5, "{}", s.score);
    }

    #[test]
    fn long_embedded_sentence_is_above_four() {
        let text = "Ich muss Sie darauf hinweisen, dass wir den Vorfall dokumentieren, \
                    weil mehrere Anwohner angerufen haben, und wenn Sie uns jetzt erklären, \
                    was passiert ist, können wir gemeinsam überlegen, wie es heute Abend \
                    weitergeht und welche weiteren Schritte jetzt notwendig werden.";
        let c = german();
        let s = c.complexity(text).unwrap();
        assert_eq!(s.features.sentence_length_words, 40.0);
        assert!(s.features.clause_marker_count >= 3.0);
        assert!(s.score > 4.0, "{}", s.score);
    }

    // Evaluates the linear map by hand from the fitted ranges.
    #[test]
    fn score_matches_formula() {
        let c = german();
        let f = c.features("Zeigen Sie mir bitte Ihren Ausweis, weil wir kontrollieren.").unwrap();
        let m = &c.model;
        let mut expected = 1.0;
        for (i, v) in f.to_array().iter().enumerate() {
            expected += 1.5 * (v - m.low[i]) / (m.high[i] - m.low[i]);
        }
        assert!((c.model.score(&f) - expected.clamp(1.0, 7.0)).abs() < 1e-12);
        assert_eq!(c.complexity("Halt.").unwrap(), c.complexity("Halt.").unwrap());
    }

    #[test]
    fn empty_text_errors() {
        assert_eq!(german().complexity("  ?! ").unwrap_err(), Error::Empty);
        assert!(german().model.with_weights([1.0, -1.0, 0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_monotone_in_length(
            f in (1.0f64..80.0, 2.0f64..15.0, 0.0f64..8.0, 0.0f64..1.0),
            extra in 0.0f64..40.0,
        ) {
            let m = german().model;
            let a = ComplexityFeatures {
                sentence_length_words: f.0,
                mean_word_length_chars: f.1,
                clause_marker_count: f.2,
                rare_word_ratio: f.3,
            };
            let b = ComplexityFeatures { sentence_length_words: f.0 + extra, ..a };
            let (sa, sb) = (m.score(&a), m.score(&b));
            prop_assert!((MIN_SCORE..=MAX_SCORE).contains(&sa));
            prop_assert!(sb >= sa);
        }
    }
}
