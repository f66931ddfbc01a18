//! Word to subword alignment.
//!
//! Model traces index positions in subword space while annotations live in
//! word space; the alignment maps every word to the contiguous run of
//! subword pieces that spell it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::negdata::TokenSpan;

/// How a tokenizer marks that a piece does not end a word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "style", content = "marker")]
pub enum ContinuationStyle {
    /// The marker suffixes every non-final piece of a word ("Hau@@ s").
    Suffix(String),
    /// The marker prefixes every non-initial piece of a word ("Hau ##s").
    Prefix(String),
}

impl Default for ContinuationStyle {
    fn default() -> Self {
        ContinuationStyle::Suffix("@@".to_string())
    }
}

/// Word index → contiguous subword range. Ranges partition the subword
/// sequence in order, which the constructor enforces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordAlignment {
    spans: Vec<TokenSpan>,
    subword_len: usize,
}

impl SubwordAlignment {
    pub fn new(spans: Vec<TokenSpan>, subword_len: usize) -> Result<Self> {
        let mut expected = 0usize;
        for (w, span) in spans.iter().enumerate() {
            if span.start != expected || span.end < span.start {
                return Err(Error::validation(format!(
                    "alignment spans must partition the subword sequence; word {w} breaks at [{}, {}]",
                    span.start, span.end
                )));
            }
            expected = span.end + 1;
        }
        if expected != subword_len {
            return Err(Error::validation(format!(
                "alignment covers {expected} subwords but the sequence has {subword_len}"
            )));
        }
        Ok(SubwordAlignment { spans, subword_len })
    }

    pub fn word_count(&self) -> usize {
        self.spans.len()
    }

    pub fn subword_len(&self) -> usize {
        self.subword_len
    }

    pub fn subwords_of(&self, word: usize) -> Option<TokenSpan> {
        self.spans.get(word).copied()
    }

    pub fn spans(&self) -> &[TokenSpan] {
        &self.spans
    }
}

/// Word/subword alignments for both sides of a parallel pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAlignment {
    pub pair_id: String,
    pub source: SubwordAlignment,
    pub target: SubwordAlignment,
}

/// Reconstructs words from subword pieces and maps each word to its piece
/// range. Fails on the first word whose pieces do not concatenate back to
/// it, naming that word.
pub fn align_subwords<W, S>(
    words: &[W],
    subwords: &[S],
    style: &ContinuationStyle,
) -> Result<SubwordAlignment>
where
    W: AsRef<str>,
    S: AsRef<str>,
{
    let mut spans = Vec::with_capacity(words.len());
    let mut word_ix = 0usize;
    let mut start = 0usize;
    let mut assembled = String::new();

    let mut close_word = |assembled: &mut String, start: usize, end: usize| -> Result<()> {
        let expected = words.get(word_ix).map(|w| w.as_ref());
        match expected {
            Some(w) if w == assembled => {
                spans.push(TokenSpan::new(start, end));
                word_ix += 1;
                assembled.clear();
                Ok(())
            }
            Some(w) => Err(Error::validation(format!(
                "subword alignment diverges at word {word_ix} ({w:?}): pieces spell {assembled:?}"
            ))),
            None => Err(Error::validation(format!(
                "subword pieces continue past the last word; leftover {assembled:?}"
            ))),
        }
    };

    for (i, piece) in subwords.iter().enumerate() {
        let piece = piece.as_ref();
        match style {
            ContinuationStyle::Suffix(m) => {
                if let Some(stem) = strip_suffix_marker(piece, m) {
                    assembled.push_str(stem);
                } else {
                    assembled.push_str(piece);
                    close_word(&mut assembled, start, i)?;
                    start = i + 1;
                }
            }
            ContinuationStyle::Prefix(m) => {
                let continues = piece.len() > m.len() && piece.starts_with(m.as_str());
                if continues {
                    assembled.push_str(&piece[m.len()..]);
                } else {
                    if !assembled.is_empty() {
                        close_word(&mut assembled, start, i - 1)?;
                        start = i;
                    }
                    assembled.push_str(piece);
                }
            }
        }
    }
    if !assembled.is_empty() {
        // prefix style closes its last word here; for suffix style this is
        // a dangling continuation piece that must fail the word check
        close_word(&mut assembled, start, subwords.len() - 1)?;
    }
    if word_ix != words.len() {
        return Err(Error::validation(format!(
            "ran out of subword pieces at word {word_ix} ({:?})",
            words[word_ix].as_ref()
        )));
    }

    SubwordAlignment::new(spans, subwords.len())
}

fn strip_suffix_marker<'a>(piece: &'a str, marker: &str) -> Option<&'a str> {
    if piece.len() > marker.len() {
        piece.strip_suffix(marker)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn suffix() -> ContinuationStyle {
        ContinuationStyle::default()
    }

    #[test]
    fn merges_suffix_marked_pieces() {
        let words = ["Diese", "Hunde", "bellen"];
        let pieces = ["Die@@", "se", "Hun@@", "de", "bellen"];
        let a = align_subwords(&words, &pieces, &suffix()).unwrap();
        assert_eq!(a.word_count(), 3);
        assert_eq!(a.subwords_of(0), Some(TokenSpan::new(0, 1)));
        assert_eq!(a.subwords_of(1), Some(TokenSpan::new(2, 3)));
        assert_eq!(a.subwords_of(2), Some(TokenSpan::new(4, 4)));
    }

    #[test]
    fn one_to_one_when_nothing_is_split() {
        let words = ["a", "b"];
        let a = align_subwords(&words, &["a", "b"], &suffix()).unwrap();
        assert_eq!(a.spans(), &[TokenSpan::new(0, 0), TokenSpan::new(1, 1)]);
    }

    #[test]
    fn split_word_then_singleton() {
        // words ["ab","c"] against ["a@@","b","c"]: 0 ↦ [0,1], 1 ↦ [2,2]
        let a = align_subwords(&["ab", "c"], &["a@@", "b", "c"], &suffix()).unwrap();
        assert_eq!(a.subwords_of(0), Some(TokenSpan::new(0, 1)));
        assert_eq!(a.subwords_of(1), Some(TokenSpan::new(2, 2)));
    }

    #[test]
    fn divergence_names_first_bad_word() {
        let words = ["Diese", "Hunde"];
        let pieces = ["Die@@", "se", "Katzen"];
        let err = align_subwords(&words, &pieces, &suffix()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("word 1"), "{msg}");
        assert!(msg.contains("Hunde"), "{msg}");
    }

    #[test]
    fn leftover_pieces_rejected() {
        let err = align_subwords(&["a"], &["a", "b"], &suffix()).unwrap_err();
        assert!(err.to_string().contains("continue past"), "{err}");
    }

    #[test]
    fn missing_pieces_rejected() {
        let err = align_subwords(&["a", "b"], &["a"], &suffix()).unwrap_err();
        assert!(err.to_string().contains("word 1"), "{err}");
    }

    #[test]
    fn prefix_style_marker() {
        let style = ContinuationStyle::Prefix("##".to_string());
        let words = ["unhappy", "dogs"];
        let pieces = ["un", "##happy", "dogs"];
        let a = align_subwords(&words, &pieces, &style).unwrap();
        assert_eq!(a.subwords_of(0), Some(TokenSpan::new(0, 1)));
        assert_eq!(a.subwords_of(1), Some(TokenSpan::new(2, 2)));
    }

    #[test]
    fn literal_marker_token_is_its_own_word() {
        // a bare "@@" token must not be treated as a continuation
        let a = align_subwords(&["@@"], &["@@"], &suffix()).unwrap();
        assert_eq!(a.word_count(), 1);
    }
}
