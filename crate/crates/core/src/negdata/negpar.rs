//! Token-per-row column format for negation annotation.
//!
//! Layout, tab separated:
//!
//! ```text
//! sentence_id  token_id  surface  [cue_1  event_1  scope_1  [cue_2 ...]]
//! ```
//!
//! Sentences are blocks separated by blank lines. `token_id` counts from 0
//! inside its block. Each negation instance contributes one cue/event/scope
//! column triple; a cell holds `_` when the token does not belong to that
//! component and a non-`_` marker (we write the surface form) when it does.
//! Sentences without negation carry exactly the three fixed columns.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::negdata::{AnnotatedSentence, NegInstance, Split, TokenSpan};

/// A parsed annotation file: the split it belongs to plus one entry per
/// sentence block, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegParDocument {
    pub split: Split,
    pub entries: Vec<NegParEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegParEntry {
    pub sentence_id: String,
    pub sentence: AnnotatedSentence,
}

impl NegParDocument {
    pub fn sentences(&self) -> impl Iterator<Item = &AnnotatedSentence> {
        self.entries.iter().map(|e| &e.sentence)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

struct Row<'a> {
    line_no: usize,
    sentence_id: &'a str,
    token_id: usize,
    surface: &'a str,
    cells: Vec<&'a str>,
}

/// Parses the column format. Structural problems (column counts, token
/// numbering, ids) report the 1-based line; annotation inconsistencies
/// surface as validation errors naming the sentence.
pub fn parse_negpar(text: &str, split: Split) -> Result<NegParDocument> {
    let mut entries = Vec::new();
    let mut block: Vec<Row> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            if !block.is_empty() {
                entries.push(finish_block(std::mem::take(&mut block))?);
            }
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::parse(
                line_no,
                format!("expected at least 3 tab-separated columns, got {}", fields.len()),
            ));
        }
        if (fields.len() - 3) % 3 != 0 {
            return Err(Error::parse(
                line_no,
                format!(
                    "annotation columns must come in cue/event/scope triples, got {} extra",
                    fields.len() - 3
                ),
            ));
        }
        let token_id: usize = fields[1].parse().map_err(|_| {
            Error::parse(line_no, format!("token id {:?} is not an integer", fields[1]))
        })?;
        block.push(Row {
            line_no,
            sentence_id: fields[0],
            token_id,
            surface: fields[2],
            cells: fields[3..].to_vec(),
        });
    }
    if !block.is_empty() {
        entries.push(finish_block(block)?);
    }

    Ok(NegParDocument { split, entries })
}

fn finish_block(rows: Vec<Row>) -> Result<NegParEntry> {
    let first = &rows[0];
    let sentence_id = first.sentence_id.to_string();
    let width = first.cells.len();
    for (offset, row) in rows.iter().enumerate() {
        if row.sentence_id != sentence_id {
            return Err(Error::parse(
                row.line_no,
                format!(
                    "sentence id changed from {sentence_id:?} to {:?} without a blank line",
                    row.sentence_id
                ),
            ));
        }
        if row.token_id != offset {
            return Err(Error::parse(
                row.line_no,
                format!("expected token id {offset}, got {}", row.token_id),
            ));
        }
        if row.cells.len() != width {
            return Err(Error::parse(
                row.line_no,
                format!(
                    "expected {} columns as in the block's first row, got {}",
                    width + 3,
                    row.cells.len() + 3
                ),
            ));
        }
    }

    let tokens: Vec<String> = rows.iter().map(|r| r.surface.to_string()).collect();
    let n_instances = width / 3;
    let mut instances = Vec::with_capacity(n_instances);
    for inst in 0..n_instances {
        let marks = |col: usize| -> Vec<bool> {
            rows.iter().map(|r| r.cells[inst * 3 + col] != "_").collect()
        };
        instances.push(NegInstance {
            instance_id: inst,
            cue_spans: marks_to_spans(&marks(0)),
            event_spans: marks_to_spans(&marks(1)),
            scope_spans: marks_to_spans(&marks(2)),
        });
    }

    let sentence = AnnotatedSentence { tokens, instances };
    sentence
        .validate()
        .map_err(|e| Error::validation(format!("sentence {sentence_id}: {e}")))?;
    Ok(NegParEntry { sentence_id, sentence })
}

/// Runs of marked positions become one inclusive span each, so
/// non-contiguous marks yield multiple spans.
fn marks_to_spans(marks: &[bool]) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &m) in marks.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push(TokenSpan::new(s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(TokenSpan::new(s, marks.len() - 1));
    }
    spans
}

/// Inverse of [`parse_negpar`]; `parse_negpar(serialize_negpar(d), d.split)`
/// reproduces `d` exactly.
pub fn serialize_negpar(doc: &NegParDocument) -> String {
    let mut out = String::new();
    for (b, entry) in doc.entries.iter().enumerate() {
        if b > 0 {
            out.push('\n');
        }
        let sent = &entry.sentence;
        let membership: Vec<[Vec<bool>; 3]> = sent
            .instances
            .iter()
            .map(|inst| {
                [
                    spans_to_marks(&inst.cue_spans, sent.tokens.len()),
                    spans_to_marks(&inst.event_spans, sent.tokens.len()),
                    spans_to_marks(&inst.scope_spans, sent.tokens.len()),
                ]
            })
            .collect();
        for (t, surface) in sent.tokens.iter().enumerate() {
            let _ = write!(out, "{}\t{}\t{}", entry.sentence_id, t, surface);
            for marks in &membership {
                for col in marks {
                    let cell = if col[t] { surface.as_str() } else { "_" };
                    let _ = write!(out, "\t{cell}");
                }
            }
            out.push('\n');
        }
    }
    out
}

fn spans_to_marks(spans: &[TokenSpan], len: usize) -> Vec<bool> {
    let mut marks = vec![false; len];
    for span in spans {
        for i in span.indices() {
            marks[i] = true;
        }
    }
    marks
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_SENTENCES: &str = "\
s1\t0\tI\t_\t_\t_
s1\t1\tdid\t_\t_\tdid
s1\t2\tnot\tnot\t_\t_
s1\t3\tsleep\t_\tsleep\tsleep

s2\t0\tAll
s2\t1\tquiet
";

    #[test]
    fn parses_two_sentence_fixture() {
        let doc = parse_negpar(TWO_SENTENCES, Split::Dev).unwrap();
        assert_eq!(doc.len(), 2);
        assert_eq!(doc.entries[0].sentence_id, "s1");

        let s1 = &doc.entries[0].sentence;
        assert_eq!(s1.tokens, vec!["I", "did", "not", "sleep"]);
        assert_eq!(s1.instances.len(), 1);
        let inst = &s1.instances[0];
        assert_eq!(inst.cue_spans, vec![TokenSpan::new(2, 2)]);
        assert_eq!(inst.event_spans, vec![TokenSpan::new(3, 3)]);
        assert_eq!(inst.scope_spans, vec![TokenSpan::new(1, 1), TokenSpan::new(3, 3)]);

        let s2 = &doc.entries[1].sentence;
        assert!(s2.instances.is_empty());
        assert_eq!(s2.tokens.len(), 2);
    }

    #[test]
    fn contiguous_marks_merge_into_one_inclusive_span() {
        // cue on token 1, scope on tokens 0 through 2
        let text = "s1\t0\tthere\t_\t_\tthere\ns1\t1\tno\tno\t_\tno\ns1\t2\tresponse\t_\t_\tresponse\n";
        let doc = parse_negpar(text, Split::Train).unwrap();
        let inst = &doc.entries[0].sentence.instances[0];
        assert_eq!(inst.cue_spans, vec![TokenSpan::new(1, 1)]);
        assert_eq!(inst.scope_spans, vec![TokenSpan::new(0, 2)]);
    }

    #[test]
    fn non_contiguous_scope_becomes_two_spans() {
        let doc = parse_negpar(TWO_SENTENCES, Split::Dev).unwrap();
        let scope = &doc.entries[0].sentence.instances[0].scope_spans;
        assert_eq!(scope.len(), 2, "gap in scope marks must split the span");
    }

    #[test]
    fn bad_column_count_reports_line() {
        let text = "s1\t0\tok\t_\t_\t_\ns1\t1\tbroken\t_\t_\n";
        let err = parse_negpar(text, Split::Train).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn token_numbering_must_be_sequential() {
        let text = "s1\t0\ta\ns1\t2\tb\n";
        let err = parse_negpar(text, Split::Train).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let doc = parse_negpar(TWO_SENTENCES, Split::Test).unwrap();
        let text = serialize_negpar(&doc);
        let again = parse_negpar(&text, Split::Test).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn multiple_instances_per_sentence() {
        let text = "\
s9\t0\tno\tno\t_\t_\t_\t_\t_
s9\t1\tand\t_\t_\t_\t_\t_\t_
s9\t2\tnever\t_\t_\t_\tnever\t_\t_
s9\t3\tagain\t_\t_\t_\t_\t_\tagain
";
        let doc = parse_negpar(text, Split::Train).unwrap();
        let sent = &doc.entries[0].sentence;
        assert_eq!(sent.instances.len(), 2);
        assert_eq!(sent.instances[0].cue_spans, vec![TokenSpan::new(0, 0)]);
        assert_eq!(sent.instances[1].cue_spans, vec![TokenSpan::new(2, 2)]);
        assert_eq!(sent.instances[1].scope_spans, vec![TokenSpan::new(3, 3)]);
    }

    #[test]
    fn annotation_violating_invariants_is_rejected() {
        // event marked outside any scope column
        let text = "s1\t0\tnot\tnot\t_\t_\ns1\t1\tgo\t_\tgo\t_\n";
        let err = parse_negpar(text, Split::Train).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err:?}");
    }
}
