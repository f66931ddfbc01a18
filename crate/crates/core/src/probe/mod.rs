//! Probing classifiers over exported hidden states: does a layer encode
//! which tokens are negation cues, events, or scope?
//!
//! The cue task is binary {others, cue}; scope and event tasks are
//! tri-class {others, cue, scope|event}. Examples are word-level vectors
//! pooled from subword pieces unless subword-level examples are requested.

pub mod mlp;
mod train;

use serde::{Deserialize, Serialize};

pub use mlp::{argmax, AdamState, MlpGrads, MlpParams};
pub use train::{
    layer_sweep, mean_dev_f1, sweep_table, train_probe, LayerSweepRow, ProbeMeta, TrainConfig,
    TrainedProbe,
};

use crate::error::{Error, Result};
use crate::negdata::AlignedSentence;
use crate::tracestore::{Side, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeTask {
    Cue,
    Scope,
    Event,
}

impl ProbeTask {
    pub fn class_count(self) -> usize {
        match self {
            ProbeTask::Cue => 2,
            ProbeTask::Scope | ProbeTask::Event => 3,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            ProbeTask::Cue => &["others", "cue"],
            ProbeTask::Scope => &["others", "cue", "scope"],
            ProbeTask::Event => &["others", "cue", "event"],
        }
    }

    /// Class whose F1 drives model selection and reporting: the cue class
    /// for the binary task, the scope/event class otherwise.
    pub fn selection_class(self) -> usize {
        match self {
            ProbeTask::Cue => 1,
            ProbeTask::Scope | ProbeTask::Event => 2,
        }
    }
}

impl std::fmt::Display for ProbeTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProbeTask::Cue => "cue",
            ProbeTask::Scope => "scope",
            ProbeTask::Event => "event",
        })
    }
}

impl std::str::FromStr for ProbeTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cue" => Ok(ProbeTask::Cue),
            "scope" => Ok(ProbeTask::Scope),
            "event" => Ok(ProbeTask::Event),
            other => Err(Error::invalid_input(format!(
                "unknown probe task {other:?} (expected cue, scope, or event)"
            ))),
        }
    }
}

/// Where a token's example vector comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// One example per word, mean over its subword hidden states.
    #[default]
    Word,
    /// One example per subword piece, label inherited from its word.
    Subword,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "word" => Ok(Pooling::Word),
            "subword" => Ok(Pooling::Subword),
            other => Err(Error::invalid_input(format!(
                "unknown pooling {other:?} (expected word or subword)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeExample {
    pub vector: Vec<f64>,
    pub label: usize,
}

/// Token label under the task's class scheme. Precedence on overlap:
/// cue > event > scope > others (events are scope subsets, and cue tokens
/// may sit inside their own scope).
fn word_label(sentence: &crate::negdata::AnnotatedSentence, word: usize, task: ProbeTask) -> usize {
    let mut is_cue = false;
    let mut is_event = false;
    let mut is_scope = false;
    for inst in &sentence.instances {
        is_cue |= inst.cue_spans.iter().any(|s| s.contains(word));
        is_event |= inst.event_spans.iter().any(|s| s.contains(word));
        is_scope |= inst.scope_spans.iter().any(|s| s.contains(word));
    }
    match task {
        ProbeTask::Cue => usize::from(is_cue),
        ProbeTask::Event => {
            if is_cue {
                1
            } else if is_event {
                2
            } else {
                0
            }
        }
        ProbeTask::Scope => {
            if is_cue {
                1
            } else if is_scope {
                2
            } else {
                0
            }
        }
    }
}

/// Builds one labeled example per token from the hidden states at
/// (side, layer). Sentences without a trace are skipped with a warning;
/// a sentence whose alignment disagrees with its trace's length is an error.
pub fn token_dataset(
    corpus: &[AlignedSentence],
    traces: &TraceSet,
    side: Side,
    layer: usize,
    task: ProbeTask,
    pooling: Pooling,
) -> Result<(Vec<ProbeExample>, Vec<String>)> {
    let mut examples = Vec::new();
    let mut warnings = Vec::new();
    for aligned in corpus {
        let Some(trace) = traces.get(&aligned.pair_id) else {
            warnings.push(format!("no trace for pair {}; skipped", aligned.pair_id));
            continue;
        };
        let trace_side_len = match side {
            Side::Encoder => trace.dims.src_len,
            Side::Decoder => trace.dims.tgt_len,
        };
        if aligned.trace_len() != trace_side_len {
            return Err(Error::validation(format!(
                "pair {}: sentence occupies {} positions but the trace has {}",
                aligned.pair_id,
                aligned.trace_len(),
                trace_side_len
            )));
        }
        for word in 0..aligned.sentence.tokens.len() {
            let label = word_label(&aligned.sentence, word, task);
            let span = aligned.word_span(word)?;
            match pooling {
                Pooling::Word => {
                    let vector = trace.pooled_state(side, layer, span)?;
                    examples.push(ProbeExample { vector, label });
                }
                Pooling::Subword => {
                    for pos in span.indices() {
                        let vector = trace.state(side, layer, pos)?.iter().map(|&v| v as f64).collect();
                        examples.push(ProbeExample { vector, label });
                    }
                }
            }
        }
    }
    Ok((examples, warnings))
}

/// Precision, recall, and F1 for one class of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean, with the 0/0 case pinned to 0.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Token-level precision/recall/F1 of `positive_class`.
pub fn evaluate(predictions: &[usize], gold: &[usize], positive_class: usize) -> Result<Prf> {
    if predictions.len() != gold.len() {
        return Err(Error::invalid_input(format!(
            "{} predictions against {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p == positive_class, g == positive_class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    Ok(Prf { precision, recall, f1: harmonic_f1(precision, recall) })
}
