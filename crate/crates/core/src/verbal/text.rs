//! Tokenization, case folding and the word-list file formats.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// A word token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub folded: String,
    pub start: usize,
    pub end: usize,
    /// True for the first token of the text or after `.`, `!`, `?` or `:`.
    pub sentence_initial: bool,
}

/// Lowercases, strips diacritics and expands `ß` so that spelling variants
/// compare equal.
pub fn fold(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.nfkd().filter(|c| !is_combining_mark(*c)) {
        if c == 'ß' || c == 'ẞ' {
            out.push_str("ss");
        } else {
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Splits on every character that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let mut boundary = true;
    let mut last_end = 0;
    for (i, c) in text.char_indices().chain(core::iter::once((text.len(), ' '))) {
        if c.is_alphanumeric() && i < text.len() {
            if start.is_none() {
                boundary |= text[last_end..i].contains(['.', '!', '?', ':']);
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            tokens.push(Token {
                text: &text[s..i],
                folded: fold(&text[s..i]),
                start: s,
                end: i,
                sentence_initial: boundary,
            });
            boundary = false;
            last_end = i;
        }
    }
    tokens
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Word list with one term per line and `#` comments. Terms are stored as
/// folded token sequences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    terms: BTreeSet<Vec<String>>,
}

impl Lexicon {
    pub fn parse(text: &str) -> Self {
        let terms = data_lines(text)
            .map(|(_, l)| tokenize(l).into_iter().map(|t| t.folded).collect::<Vec<_>>())
            .filter(|t| !t.is_empty())
            .collect();
        Self { terms }
    }

    pub fn from_terms<I: IntoIterator<Item = S>, S: AsRef<str>>(terms: I) -> Self {
        let mut joined = String::new();
        for t in terms {
            joined.push_str(t.as_ref());
            joined.push('\n');
        }
        Self::parse(&joined)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains_word(&self, folded: &str) -> bool {
        self.terms.contains(&alloc::vec![folded.to_string()])
    }

    pub(crate) fn terms(&self) -> impl Iterator<Item = &Vec<String>> {
        self.terms.iter()
    }
}

/// Word frequency ranks from a `token<TAB>rank` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyList {
    ranks: BTreeMap<String, u32>,
}

impl FrequencyList {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ranks = BTreeMap::new();
        for (line, l) in data_lines(text) {
            let (token, rank) = l.split_once('\t').ok_or_else(|| Error::Parse {
                line,
                message: "expected token<TAB>rank".into(),
            })?;
            let rank: u32 = rank.trim().parse().map_err(|_| Error::Parse {
                line,
                message: alloc::format!("invalid rank `{}`", rank.trim()),
            })?;
            let entry = ranks.entry(fold(token.trim())).or_insert(rank);
            *entry = (*entry).min(rank);
        }
        Ok(Self { ranks })
    }

    pub fn rank(&self, folded: &str) -> Option<u32> {
        self.ranks.get(folded).copied()
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding() {
        assert_eq!(fold("Blödmann"), "blodmann");
        assert_eq!(fold("DASS"), "dass");
        assert_eq!(fold("daß"), "dass");
        assert_eq!(fold("Ärger"), fold("ärger"));
    }

    #[test]
    fn tokens_and_sentence_starts() {
        let t = tokenize("Sie da! Können Sie, bitte: Sie");
        let words: Vec<_> = t.iter().map(|t| t.text).collect();
        assert_eq!(words, ["Sie", "da", "Können", "Sie", "bitte", "Sie"]);
        let initial: Vec<_> = t.iter().map(|t| t.sentence_initial).collect();
        assert_eq!(initial, [true, false, true, false, false, true]);
        assert_eq!(&"Sie da!"[t[1].start..t[1].end], "da");
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ...  ").is_empty());
    }

    #[test]
    fn frequency_list_format() {
        let f = FrequencyList::parse("# comment\nDie\t1\nfür\t7\n").unwrap();
        assert_eq!(f.rank("die"), Some(1));
        assert_eq!(f.rank("fur"), Some(7));
        assert!(matches!(
            FrequencyList::parse("a 1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(FrequencyList::parse("a\tx").is_err());
    }

    #[test]
    fn lexicon_format() {
        let l = Lexicon::parse("# x\n\nIdiot\nhalt die Klappe\n");
        assert_eq!(l.len(), 2);
        assert!(l.contains_word("idiot"));
    }
}
