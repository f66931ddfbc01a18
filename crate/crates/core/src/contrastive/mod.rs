//! Contrastive translation pairs for negation: minimal polarity-flipped
//! variants of reference translations, plus model-score evaluation.
//!
//! A system "passes" an instance when it assigns the reference a strictly
//! higher log-probability than every flipped variant.

pub mod chinese;
pub mod german;
pub mod scoring;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a variant removes negation from the reference or adds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Deletion,
    Insertion,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Deletion => "deletion",
            Direction::Insertion => "insertion",
        })
    }
}

/// One polarity-flipped candidate. `needs_review` marks heuristic edits
/// that a human should check before the variant is trusted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub tokens: Vec<String>,
    pub rule_tag: String,
    pub direction: Direction,
    #[serde(default)]
    pub needs_review: bool,
}

/// A reference translation with its variants. `source` is carried along
/// when the parallel source sentence is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastiveInstance {
    pub instance_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_tokens: Option<Vec<String>>,
    pub reference_tokens: Vec<String>,
    pub variants: Vec<Variant>,
}

/// Counts the edit sites between a reference and a variant, where an edit
/// site is one maximal run of differing tokens under an alignment that
/// allows a single insertion or deletion. Used to check minimality.
pub fn edit_sites(reference: &[String], variant: &[String]) -> usize {
    let (longer, shorter) = if reference.len() >= variant.len() {
        (reference, variant)
    } else {
        (variant, reference)
    };
    match longer.len() - shorter.len() {
        0 => {
            let mut sites = 0;
            let mut in_site = false;
            for (a, b) in longer.iter().zip(shorter) {
                if a != b {
                    if !in_site {
                        sites += 1;
                    }
                    in_site = true;
                } else {
                    in_site = false;
                }
            }
            sites
        }
        1 => {
            // try every position for the missing token; best alignment wins
            let mut best = usize::MAX;
            for skip in 0..longer.len() {
                let mut sites = 1; // the insertion/deletion itself
                let mut in_site = false;
                let mut ok = true;
                let mut j = 0;
                for (i, tok) in longer.iter().enumerate() {
                    if i == skip {
                        continue;
                    }
                    if j >= shorter.len() {
                        ok = false;
                        break;
                    }
                    if tok != &shorter[j] {
                        if !in_site {
                            sites += 1;
                        }
                        in_site = true;
                    } else {
                        in_site = false;
                    }
                    j += 1;
                }
                if ok {
                    best = best.min(sites);
                }
            }
            best
        }
        _ => usize::MAX,
    }
}

/// One JSON object per line.
pub fn write_instances_jsonl<W: Write>(out: &mut W, instances: &[ContrastiveInstance]) -> Result<()> {
    for inst in instances {
        let line = serde_json::to_string(inst)
            .map_err(|e| Error::format(format!("instance serialization failed: {e}")))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_instances_jsonl<R: BufRead>(reader: R) -> Result<Vec<ContrastiveInstance>> {
    let mut instances = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: ContrastiveInstance = serde_json::from_str(&line)
            .map_err(|e| Error::parse(i + 1, format!("bad instance record: {e}")))?;
        instances.push(inst);
    }
    Ok(instances)
}
