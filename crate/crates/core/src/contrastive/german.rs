//! German polarity-flip rules. Each rule makes exactly one edit so that a
//! variant differs from the reference at a single site.
//!
//! Deletion-direction rules strip negation from a negated reference;
//! insertion-direction rules negate a positive one. The affix rules are
//! gated by a vocabulary so "un"-stripping or -prefixing only proposes
//! attested words (ungern → gern, but Ungarn stays).

use std::collections::HashSet;

use crate::contrastive::{Direction, Variant};

pub const RULE_NICHT_DEL: &str = "nicht_del";
pub const RULE_NICHT_INS: &str = "nicht_ins";
pub const RULE_KEIN_TO_EIN: &str = "kein_to_ein";
pub const RULE_EIN_TO_KEIN: &str = "ein_to_kein";
pub const RULE_AFFIX_DEL: &str = "affix_del";
pub const RULE_AFFIX_INS: &str = "affix_ins";

const KEIN_FORMS: [&str; 6] = ["kein", "keine", "keinen", "keinem", "keiner", "keines"];
const EIN_FORMS: [&str; 6] = ["ein", "eine", "einen", "einem", "einer", "eines"];

/// Case-insensitive word list used to gate the affix rules.
#[derive(Debug, Clone, Default)]
pub struct GermanVocabulary {
    words: HashSet<String>,
}

impl GermanVocabulary {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        GermanVocabulary {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Self {
        Self::from_words(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Applies all six rules to a tokenized reference and returns every
/// resulting variant. Ordering is deterministic: by token position, then
/// by rule constant order.
pub fn german_variants(tokens: &[String], vocab: &GermanVocabulary) -> Vec<Variant> {
    let mut variants = Vec::new();
    let has_nicht = tokens.iter().any(|t| t.eq_ignore_ascii_case("nicht"));

    for (i, token) in tokens.iter().enumerate() {
        let lower = token.to_lowercase();

        if lower == "nicht" {
            variants.push(Variant {
                tokens: without(tokens, i),
                rule_tag: RULE_NICHT_DEL.into(),
                direction: Direction::Deletion,
                needs_review: false,
            });
        }

        if let Some(slot) = KEIN_FORMS.iter().position(|&f| f == lower) {
            variants.push(Variant {
                tokens: replaced(tokens, i, &match_case(token, EIN_FORMS[slot])),
                rule_tag: RULE_KEIN_TO_EIN.into(),
                direction: Direction::Deletion,
                needs_review: false,
            });
        }

        if let Some(slot) = EIN_FORMS.iter().position(|&f| f == lower) {
            variants.push(Variant {
                tokens: replaced(tokens, i, &match_case(token, KEIN_FORMS[slot])),
                rule_tag: RULE_EIN_TO_KEIN.into(),
                direction: Direction::Insertion,
                needs_review: false,
            });
        }

        if let Some(stripped) = lower.strip_prefix("un") {
            if stripped.chars().count() >= 3 && vocab.contains(stripped) {
                variants.push(Variant {
                    tokens: replaced(tokens, i, &match_case(token, stripped)),
                    rule_tag: RULE_AFFIX_DEL.into(),
                    direction: Direction::Deletion,
                    needs_review: false,
                });
            }
        }

        if !lower.starts_with("un") {
            let negated = format!("un{lower}");
            if vocab.contains(&negated) {
                variants.push(Variant {
                    tokens: replaced(tokens, i, &match_case(token, &negated)),
                    rule_tag: RULE_AFFIX_INS.into(),
                    direction: Direction::Insertion,
                    needs_review: false,
                });
            }
        }
    }

    if !has_nicht {
        variants.extend(nicht_insertions(tokens));
    }

    variants
}

/// Inserting "nicht" needs a position. German main clauses are
/// verb-second, so when the second token looks like a finite verb
/// (all-lowercase alphabetic) we insert right after it and trust the
/// result; anything else falls back to every internal gap, flagged for
/// review.
fn nicht_insertions(tokens: &[String]) -> Vec<Variant> {
    if tokens.is_empty() {
        return Vec::new();
    }
    let v2_verb = tokens.len() >= 3
        && tokens[1].chars().all(|c| c.is_alphabetic() && c.is_lowercase())
        && !tokens[1].is_empty();
    if v2_verb {
        return vec![Variant {
            tokens: inserted(tokens, 2, "nicht"),
            rule_tag: RULE_NICHT_INS.into(),
            direction: Direction::Insertion,
            needs_review: false,
        }];
    }
    (1..tokens.len())
        .map(|gap| Variant {
            tokens: inserted(tokens, gap, "nicht"),
            rule_tag: RULE_NICHT_INS.into(),
            direction: Direction::Insertion,
            needs_review: true,
        })
        .collect()
}

fn without(tokens: &[String], index: usize) -> Vec<String> {
    let mut out = tokens.to_vec();
    out.remove(index);
    out
}

fn replaced(tokens: &[String], index: usize, replacement: &str) -> Vec<String> {
    let mut out = tokens.to_vec();
    out[index] = replacement.to_string();
    out
}

fn inserted(tokens: &[String], gap: usize, token: &str) -> Vec<String> {
    let mut out = tokens.to_vec();
    out.insert(gap, token.to_string());
    out
}

/// Copies the capitalization of `original`'s first letter onto
/// `replacement` (which arrives lowercase).
fn match_case(original: &str, replacement: &str) -> String {
    let capitalized = original.chars().next().is_some_and(|c| c.is_uppercase());
    if capitalized {
        let mut chars = replacement.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::edit_sites;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn vocab() -> GermanVocabulary {
        GermanVocabulary::from_words(["glücklich", "unglücklich", "gern", "ungern", "klar"])
    }

    fn rule_variants(tokens: &str, rule_tag: &str) -> Vec<Variant> {
        german_variants(&toks(tokens), &vocab())
            .into_iter()
            .filter(|v| v.rule_tag == rule_tag)
            .collect()
    }

    #[test]
    fn nicht_deletion() {
        let vs = rule_variants("ich gehe nicht", RULE_NICHT_DEL);
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].tokens, toks("ich gehe"));
        assert_eq!(vs[0].direction, Direction::Deletion);
        assert!(!vs[0].needs_review);
    }

    #[test]
    fn kein_becomes_ein_case_preserved() {
        let vs = rule_variants("Kein Hund bellt", RULE_KEIN_TO_EIN);
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].tokens, toks("Ein Hund bellt"));

        let vs = rule_variants("ich habe keinen Hund", RULE_KEIN_TO_EIN);
        assert_eq!(vs[0].tokens, toks("ich habe einen Hund"));
        assert_eq!(vs[0].direction, Direction::Deletion);
    }

    #[test]
    fn ein_becomes_kein() {
        let vs = rule_variants("ich habe eine Katze", RULE_EIN_TO_KEIN);
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].tokens, toks("ich habe keine Katze"));
        assert_eq!(vs[0].direction, Direction::Insertion);
    }

    #[test]
    fn affix_deletion_is_vocabulary_gated() {
        let vs = rule_variants("er ist unglücklich", RULE_AFFIX_DEL);
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].tokens, toks("er ist glücklich"));

        // "garn" is not in the vocabulary, so Ungarn is left alone
        assert!(rule_variants("Ungarn ist schön", RULE_AFFIX_DEL).is_empty());
    }

    #[test]
    fn affix_insertion_is_vocabulary_gated() {
        let vs = rule_variants("er macht das gern", RULE_AFFIX_INS);
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].tokens, toks("er macht das ungern"));
        assert_eq!(vs[0].direction, Direction::Insertion);

        // "unklar" is not attested in this vocabulary
        assert!(rule_variants("das ist klar", RULE_AFFIX_INS).is_empty());
    }

    #[test]
    fn nicht_insertion_after_v2_verb() {
        let vs = rule_variants("ich gehe heute", RULE_NICHT_INS);
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].tokens, toks("ich gehe nicht heute"));
        assert!(!vs[0].needs_review);
    }

    #[test]
    fn nicht_insertion_fallback_flags_review() {
        // second token capitalized, so the verb-second guess is off
        let vs = rule_variants("Der Hund bellt", RULE_NICHT_INS);
        assert!(vs.len() > 1);
        assert!(vs.iter().all(|v| v.needs_review));
    }

    #[test]
    fn no_insertion_into_already_negated_sentence() {
        assert!(rule_variants("ich gehe nicht", RULE_NICHT_INS).is_empty());
    }

    #[test]
    fn every_variant_is_single_site() {
        let sentences = [
            "ich gehe nicht",
            "Kein Hund bellt",
            "ich habe eine Katze",
            "er ist unglücklich",
            "er macht das gern",
            "Der Hund bellt laut",
        ];
        for s in sentences {
            let reference = toks(s);
            for v in german_variants(&reference, &vocab()) {
                assert_eq!(
                    edit_sites(&reference, &v.tokens),
                    1,
                    "rule {} on {s:?} produced {:?}",
                    v.rule_tag,
                    v.tokens
                );
            }
        }
    }

    #[test]
    fn multiple_occurrences_yield_one_variant_each() {
        let vs = rule_variants("nicht heute und nicht morgen", RULE_NICHT_DEL);
        assert_eq!(vs.len(), 2);
        assert_eq!(vs[0].tokens, toks("heute und nicht morgen"));
        assert_eq!(vs[1].tokens, toks("nicht heute und morgen"));
    }
}
