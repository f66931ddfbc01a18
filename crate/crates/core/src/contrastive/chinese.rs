//! Chinese polarity-flip rules over word-segmented text.
//!
//! Deletion removes one occurrence of a negation cue (不 没 无 非 别 and
//! their pinyin romanizations by default). Insertion has no reliable
//! position heuristic without parsing, so every internal gap is proposed
//! and flagged `needs_review`.

use crate::contrastive::{Direction, Variant};

pub const RULE_CUE_DEL: &str = "cue_del";
pub const RULE_CUE_INS: &str = "cue_ins";

/// The set of cue forms to delete, plus the single form used for
/// insertion variants.
#[derive(Debug, Clone)]
pub struct ChineseCues {
    forms: Vec<String>,
    insertion_form: String,
}

impl ChineseCues {
    /// The five standard verbal negators, in both scripts.
    pub fn standard() -> Self {
        ChineseCues {
            forms: ["不", "没", "无", "非", "别", "bu", "mei", "wu", "fei", "bie"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            insertion_form: "不".to_string(),
        }
    }

    pub fn new<I, S>(forms: I, insertion_form: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ChineseCues {
            forms: forms.into_iter().map(Into::into).collect(),
            insertion_form: insertion_form.into(),
        }
    }

    pub fn forms(&self) -> &[String] {
        &self.forms
    }

    /// Whole-token matches always count. Containment within a longer
    /// segment counts only for single-character forms, so romanized cues
    /// never fire inside unrelated syllables (mei in meiguo).
    fn longest_match<'a>(&'a self, token: &str) -> Option<&'a str> {
        self.forms
            .iter()
            .filter(|f| {
                token == f.as_str()
                    || (f.chars().count() == 1 && token.contains(f.as_str()))
            })
            .max_by_key(|f| f.len())
            .map(|f| f.as_str())
    }
}

/// Applies deletion to each cue occurrence; when the reference holds no
/// cue at all, proposes review-flagged insertions instead.
pub fn chinese_variants(tokens: &[String], cues: &ChineseCues) -> Vec<Variant> {
    let mut variants = Vec::new();
    let mut any_cue = false;

    for (i, token) in tokens.iter().enumerate() {
        let Some(cue) = cues.longest_match(token) else {
            continue;
        };
        any_cue = true;
        let mut out = tokens.to_vec();
        if token == cue {
            out.remove(i);
        } else {
            // cue embedded in a longer segment (不是 → 是): strip it
            out[i] = token.replacen(cue, "", 1);
        }
        variants.push(Variant {
            tokens: out,
            rule_tag: RULE_CUE_DEL.into(),
            direction: Direction::Deletion,
            needs_review: false,
        });
    }

    if !any_cue {
        // no POS hints: one candidate per position before a token
        for gap in 0..tokens.len() {
            let mut out = tokens.to_vec();
            out.insert(gap, cues.insertion_form.clone());
            variants.push(Variant {
                tokens: out,
                rule_tag: RULE_CUE_INS.into(),
                direction: Direction::Insertion,
                needs_review: true,
            });
        }
    }

    variants
}
