//! Annotated negation data: token-level sentences with cue/event/scope
//! spans, parallel pairs, corpus statistics, and manual-evaluation labels.
//!
//! The on-disk column format lives in [`negpar`], word/subword alignment in
//! [`subword`], and manual translation-quality labels in [`manual`].

pub mod manual;
pub mod negpar;
pub mod subword;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corpus partition tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid_input(format!(
                "unknown split {other:?}, expected train|dev|test"
            ))),
        }
    }
}

/// Inclusive token index range `[start, end]`. Discontiguous components
/// are lists of these; a single token is `[i, i]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= self.start && index <= self.end
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

/// One negation instance inside a sentence. A sentence may hold several;
/// `instance_id` is its 0-based position within the sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegInstance {
    pub instance_id: usize,
    pub cue_spans: Vec<TokenSpan>,
    pub event_spans: Vec<TokenSpan>,
    pub scope_spans: Vec<TokenSpan>,
}

impl NegInstance {
    pub fn has_cue(&self) -> bool {
        !self.cue_spans.is_empty()
    }

    pub fn has_event(&self) -> bool {
        !self.event_spans.is_empty()
    }

    pub fn has_scope(&self) -> bool {
        !self.scope_spans.is_empty()
    }

    pub fn cue_tokens(&self) -> BTreeSet<usize> {
        collect_indices(&self.cue_spans)
    }

    pub fn event_tokens(&self) -> BTreeSet<usize> {
        collect_indices(&self.event_spans)
    }

    pub fn scope_tokens(&self) -> BTreeSet<usize> {
        collect_indices(&self.scope_spans)
    }
}

fn collect_indices(spans: &[TokenSpan]) -> BTreeSet<usize> {
    spans.iter().flat_map(|s| s.indices()).collect()
}

/// Tokenized sentence plus its negation instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    pub instances: Vec<NegInstance>,
}

impl AnnotatedSentence {
    pub fn unannotated(tokens: Vec<String>) -> Self {
        AnnotatedSentence { tokens, instances: Vec::new() }
    }

    /// Checks the structural invariants:
    /// spans in range and non-degenerate, per-component spans ordered and
    /// non-overlapping, every instance has a cue, and event tokens form a
    /// subset of scope tokens.
    pub fn validate(&self) -> Result<()> {
        for inst in &self.instances {
            let id = inst.instance_id;
            self.check_spans(&inst.cue_spans, id, "cue")?;
            self.check_spans(&inst.event_spans, id, "event")?;
            self.check_spans(&inst.scope_spans, id, "scope")?;
            if !inst.has_cue() {
                return Err(Error::validation(format!(
                    "negation instance {id} has no cue span"
                )));
            }
            let scope = inst.scope_tokens();
            for t in inst.event_tokens() {
                if !scope.contains(&t) {
                    return Err(Error::validation(format!(
                        "instance {id}: event token {t} lies outside the scope"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_spans(&self, spans: &[TokenSpan], id: usize, kind: &str) -> Result<()> {
        let mut prev_end: Option<usize> = None;
        for (i, span) in spans.iter().enumerate() {
            if span.start > span.end {
                return Err(Error::validation(format!(
                    "instance {id}: inverted {kind} span [{}, {}]",
                    span.start, span.end
                )));
            }
            if span.end >= self.tokens.len() {
                return Err(Error::validation(format!(
                    "instance {id}: {kind} span [{}, {}] exceeds sentence length {}",
                    span.start,
                    span.end,
                    self.tokens.len()
                )));
            }
            if let Some(prev) = prev_end {
                if span.start <= prev {
                    return Err(Error::validation(format!(
                        "instance {id}: {kind} spans overlap or are unordered at position {i}"
                    )));
                }
            }
            prev_end = Some(span.end);
        }
        Ok(())
    }

    /// Token indices covered by no span of any instance.
    pub fn outside_tokens(&self) -> Vec<usize> {
        let mut covered = vec![false; self.tokens.len()];
        for inst in &self.instances {
            for span in inst
                .cue_spans
                .iter()
                .chain(&inst.event_spans)
                .chain(&inst.scope_spans)
            {
                for i in span.indices() {
                    if i < covered.len() {
                        covered[i] = true;
                    }
                }
            }
        }
        covered
            .iter()
            .enumerate()
            .filter_map(|(i, c)| (!c).then_some(i))
            .collect()
    }
}

/// Aligned sentence pair; annotations may exist on either side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub pair_id: String,
    pub split: Split,
    pub source: AnnotatedSentence,
    pub target: AnnotatedSentence,
}

impl ParallelPair {
    pub fn validate(&self) -> Result<()> {
        self.source
            .validate()
            .and(self.target.validate())
            .map_err(|e| Error::validation(format!("pair {}: {e}", self.pair_id)))
    }
}

/// Annotated sentence tied to a trace by pair id, with the word/subword
/// map for the side the analysis reads. No alignment means the trace is
/// indexed by word positions directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedSentence {
    pub pair_id: String,
    pub sentence: AnnotatedSentence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<subword::SubwordAlignment>,
}

impl AlignedSentence {
    pub fn validate(&self) -> Result<()> {
        self.sentence
            .validate()
            .map_err(|e| Error::validation(format!("pair {}: {e}", self.pair_id)))?;
        if let Some(a) = &self.alignment {
            if a.word_count() != self.sentence.tokens.len() {
                return Err(Error::validation(format!(
                    "pair {}: alignment covers {} words but the sentence has {}",
                    self.pair_id,
                    a.word_count(),
                    self.sentence.tokens.len()
                )));
            }
        }
        Ok(())
    }

    /// Trace positions spelling the given word.
    pub fn word_span(&self, word: usize) -> Result<TokenSpan> {
        if word >= self.sentence.tokens.len() {
            return Err(Error::invalid_input(format!(
                "pair {}: word {word} out of range",
                self.pair_id
            )));
        }
        match &self.alignment {
            Some(a) => a.subwords_of(word).ok_or_else(|| {
                Error::validation(format!(
                    "pair {}: alignment has no span for word {word}",
                    self.pair_id
                ))
            }),
            None => Ok(TokenSpan::new(word, word)),
        }
    }

    /// Number of trace positions the sentence occupies.
    pub fn trace_len(&self) -> usize {
        self.alignment
            .as_ref()
            .map_or(self.sentence.tokens.len(), |a| a.subword_len())
    }
}

/// Reads one `AlignedSentence` JSON object per line, validating each.
pub fn read_aligned_jsonl(path: impl AsRef<std::path::Path>) -> Result<Vec<AlignedSentence>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path.as_ref())?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sent: AlignedSentence =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        sent.validate()?;
        out.push(sent);
    }
    Ok(out)
}

pub fn write_aligned_jsonl(
    sentences: &[AlignedSentence],
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let mut buf = String::new();
    for sent in sentences {
        buf.push_str(&serde_json::to_string(sent).expect("aligned sentences serialize"));
        buf.push('\n');
    }
    crate::report::write_atomic(path.as_ref(), buf.as_bytes())
}

/// Instance-level component tallies for a set of sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCounts {
    pub sentences: usize,
    pub instances: usize,
    pub with_cue: usize,
    pub with_event: usize,
    pub with_scope: usize,
}

impl ComponentCounts {
    pub fn add(&mut self, other: &ComponentCounts) {
        self.sentences += other.sentences;
        self.instances += other.instances;
        self.with_cue += other.with_cue;
        self.with_event += other.with_event;
        self.with_scope += other.with_scope;
    }
}

/// Counts how many instances carry each annotation component.
pub fn corpus_stats<'a, I>(sentences: I) -> ComponentCounts
where
    I: IntoIterator<Item = &'a AnnotatedSentence>,
{
    let mut counts = ComponentCounts::default();
    for sent in sentences {
        counts.sentences += 1;
        counts.instances += sent.instances.len();
        for inst in &sent.instances {
            counts.with_cue += inst.has_cue() as usize;
            counts.with_event += inst.has_event() as usize;
            counts.with_scope += inst.has_scope() as usize;
        }
    }
    counts
}
