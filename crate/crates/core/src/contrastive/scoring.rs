//! Scoring contrastive sets against model log-probabilities.
//!
//! The model under test exports per-token log-probabilities (natural log)
//! for the reference and every variant, one JSONL record per instance.
//! Token scores reduce to sentence scores by summation; an instance counts
//! as correct only when the reference outscores every variant strictly,
//! so a tie is a failure.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::contrastive::{ContrastiveInstance, Direction};
use crate::error::{Error, Result};
use crate::report::{Cell, Table};

/// Wire format: per-token log-probabilities, reference first.
/// `variants[i]` scores `instance.variants[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScores {
    pub instance_id: String,
    pub reference: Vec<f64>,
    pub variants: Vec<Vec<f64>>,
}

impl TokenScores {
    /// Collapses token scores into sentence-level log-probabilities.
    pub fn reduce(&self) -> Result<ScoreRecord> {
        let reference_logprob = sentence_logprob(&self.reference)
            .map_err(|e| Error::validation(format!("instance {:?}: {e}", self.instance_id)))?;
        let mut variant_logprobs = Vec::with_capacity(self.variants.len());
        for (v, lps) in self.variants.iter().enumerate() {
            let score = sentence_logprob(lps).map_err(|e| {
                Error::validation(format!("instance {:?} variant {v}: {e}", self.instance_id))
            })?;
            variant_logprobs.push(score);
        }
        Ok(ScoreRecord {
            instance_id: self.instance_id.clone(),
            reference_logprob,
            variant_logprobs,
        })
    }
}

/// Sentence-level scores for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub instance_id: String,
    pub reference_logprob: f64,
    pub variant_logprobs: Vec<f64>,
}

pub fn read_scores_jsonl<R: BufRead>(reader: R) -> Result<Vec<TokenScores>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TokenScores = serde_json::from_str(&line)
            .map_err(|e| Error::parse(i + 1, format!("bad score record: {e}")))?;
        records.push(record);
    }
    Ok(records)
}

/// Sums per-token log-probabilities into a sentence score. Tokens must
/// exist and every entry must be a finite non-positive log-probability.
pub fn sentence_logprob(token_logprobs: &[f64]) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(Error::invalid_input("cannot score an empty token sequence"));
    }
    for (i, &lp) in token_logprobs.iter().enumerate() {
        if !lp.is_finite() || lp > 0.0 {
            return Err(Error::validation(format!(
                "token {i}: {lp} is not a valid log-probability"
            )));
        }
    }
    Ok(token_logprobs.iter().sum())
}

/// Strict-majorization check: the reference must beat every variant.
pub fn score_instance(record: &ScoreRecord) -> Result<bool> {
    if record.variant_logprobs.is_empty() {
        return Err(Error::invalid_input(format!(
            "instance {:?} has no variants to compare against",
            record.instance_id
        )));
    }
    Ok(record
        .variant_logprobs
        .iter()
        .all(|&v| record.reference_logprob > v))
}

/// Accuracy within one (rule, direction) bucket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStat {
    pub rule_tag: String,
    pub direction: Direction,
    pub total: usize,
    pub correct: usize,
}

impl GroupStat {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub groups: Vec<GroupStat>,
    /// Instance-level: reference vs all of that instance's variants.
    pub overall_total: usize,
    pub overall_correct: usize,
    pub warnings: Vec<String>,
}

impl AccuracySummary {
    pub fn overall_accuracy(&self) -> f64 {
        self.overall_correct as f64 / self.overall_total as f64
    }

    pub fn to_table(&self) -> Table {
        let mut table = Table::new(
            "contrastive_accuracy",
            ["group", "direction", "n", "correct", "accuracy"],
        );
        for g in &self.groups {
            table.push_row(vec![
                Cell::from(g.rule_tag.clone()),
                Cell::from(g.direction.to_string()),
                Cell::from(g.total as i64),
                Cell::from(g.correct as i64),
                Cell::from(g.accuracy()),
            ]);
        }
        table.push_row(vec![
            Cell::from("overall"),
            Cell::from("all"),
            Cell::from(self.overall_total as i64),
            Cell::from(self.overall_correct as i64),
            Cell::from(self.overall_accuracy()),
        ]);
        table
    }
}

/// Joins instances with their score records and aggregates accuracy per
/// (rule, direction) group plus an overall instance-level row.
///
/// Within a group, an instance is correct when the reference beats that
/// group's variants; overall, it must beat all of them. Instances without
/// variants are skipped with a warning; a missing or mismatched score
/// record is an error.
pub fn contrastive_accuracy(
    instances: &[ContrastiveInstance],
    scores: &[TokenScores],
) -> Result<AccuracySummary> {
    let mut by_id: BTreeMap<&str, &TokenScores> = BTreeMap::new();
    for record in scores {
        if by_id.insert(record.instance_id.as_str(), record).is_some() {
            return Err(Error::validation(format!(
                "duplicate score record for instance {:?}",
                record.instance_id
            )));
        }
    }

    let mut groups: BTreeMap<(String, Direction), (usize, usize)> = BTreeMap::new();
    let mut overall_total = 0usize;
    let mut overall_correct = 0usize;
    let mut warnings = Vec::new();

    for inst in instances {
        if inst.variants.is_empty() {
            warnings.push(format!("instance {} has no variants; skipped", inst.instance_id));
            continue;
        }
        let token_scores = by_id.get(inst.instance_id.as_str()).ok_or_else(|| {
            Error::validation(format!("no score record for instance {:?}", inst.instance_id))
        })?;
        if token_scores.variants.len() != inst.variants.len() {
            return Err(Error::validation(format!(
                "instance {:?}: {} variants in the set but {} scored",
                inst.instance_id,
                inst.variants.len(),
                token_scores.variants.len()
            )));
        }
        let record = token_scores.reduce()?;

        overall_total += 1;
        overall_correct += score_instance(&record)? as usize;

        let mut per_group: BTreeMap<(String, Direction), Vec<f64>> = BTreeMap::new();
        for (variant, &score) in inst.variants.iter().zip(&record.variant_logprobs) {
            per_group
                .entry((variant.rule_tag.clone(), variant.direction))
                .or_default()
                .push(score);
        }
        for ((rule_tag, direction), group_scores) in per_group {
            let sub = ScoreRecord {
                instance_id: record.instance_id.clone(),
                reference_logprob: record.reference_logprob,
                variant_logprobs: group_scores,
            };
            let entry = groups.entry((rule_tag, direction)).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += score_instance(&sub)? as usize;
        }
    }

    if overall_total == 0 {
        return Err(Error::invalid_input("no scorable instances"));
    }

    let groups = groups
        .into_iter()
        .map(|((rule_tag, direction), (total, correct))| GroupStat {
            rule_tag,
            direction,
            total,
            correct,
        })
        .collect();

    Ok(AccuracySummary { groups, overall_total, overall_correct, warnings })
}
