//! Cosine similarity between negation cues and the rest of the sentence:
//! cue/event (sim_ce), cue/scope (sim_cs), cue/outside (sim_co), averaged
//! over all token pairs in a corpus, per layer.
//!
//! Pairing stays inside one sentence: ce and cs pair a cue token with
//! event/scope tokens of the same negation instance, co pairs it with
//! tokens outside every annotated span of the sentence. The three buckets
//! are disjoint (scope drops cue and event tokens; events drop cue tokens).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::negdata::AlignedSentence;
use crate::report::{Cell, Table};
use crate::tracestore::{Side, TraceSet};

/// A stack-qualified layer, displayed the way the figures label slices
/// ("ENC3", "DEC6").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerRef {
    pub side: Side,
    pub layer: usize,
}

impl std::fmt::Display for LayerRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.side {
            Side::Encoder => "ENC",
            Side::Decoder => "DEC",
        };
        write!(f, "{tag}{}", self.layer)
    }
}

impl std::str::FromStr for LayerRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (side, digits) = if let Some(rest) = lower.strip_prefix("enc") {
            (Side::Encoder, rest)
        } else if let Some(rest) = lower.strip_prefix("dec") {
            (Side::Decoder, rest)
        } else {
            return Err(Error::invalid_input(format!(
                "layer {s:?} must look like enc3 or dec6"
            )));
        };
        let layer = digits
            .parse::<usize>()
            .map_err(|_| Error::invalid_input(format!("layer {s:?} has no index")))?;
        Ok(LayerRef { side, layer })
    }
}

/// cos(u, v) = dot / (|u||v|). Identical vectors short-circuit to 1 so
/// constructed fixtures stay exact; the general result is clamped to
/// [-1, 1] against rounding.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid_input(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let su: f64 = u.iter().map(|a| a * a).sum();
    let sv: f64 = v.iter().map(|b| b * b).sum();
    if su == 0.0 || sv == 0.0 {
        return Err(Error::invalid_input("cosine of a zero vector is undefined"));
    }
    if u == v {
        return Ok(1.0);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (su * sv).sqrt()).clamp(-1.0, 1.0))
}

/// Mean cosine per bucket at one layer, with pair counts. A `None` value
/// means the bucket had no pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTriple {
    pub layer: LayerRef,
    pub sim_ce: Option<f64>,
    pub sim_cs: Option<f64>,
    pub sim_co: Option<f64>,
    pub n_ce: usize,
    pub n_cs: usize,
    pub n_co: usize,
}

#[derive(Default)]
struct Bucket {
    sum: f64,
    n: usize,
}

impl Bucket {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Micro-averaged cosine similarities over all within-sentence pairs at
/// (side, layer). Sentences without a trace are skipped with a warning.
pub fn sim_groups(
    corpus: &[AlignedSentence],
    traces: &TraceSet,
    layer: LayerRef,
) -> Result<(SimTriple, Vec<String>)> {
    let mut ce = Bucket::default();
    let mut cs = Bucket::default();
    let mut co = Bucket::default();
    let mut warnings = Vec::new();

    for aligned in corpus {
        let Some(trace) = traces.get(&aligned.pair_id) else {
            warnings.push(format!("no trace for pair {}; skipped", aligned.pair_id));
            continue;
        };
        // word vectors are pooled lazily and cached per sentence
        let words = aligned.sentence.tokens.len();
        let mut vectors: Vec<Option<Vec<f64>>> = vec![None; words];
        let vector = |w: usize, vectors: &mut Vec<Option<Vec<f64>>>| -> Result<Vec<f64>> {
            if vectors[w].is_none() {
                let span = aligned.word_span(w)?;
                vectors[w] = Some(trace.pooled_state(layer.side, layer.layer, span)?);
            }
            Ok(vectors[w].clone().unwrap())
        };

        let outside = aligned.sentence.outside_tokens();
        for inst in &aligned.sentence.instances {
            let cues = inst.cue_tokens();
            let events: BTreeSet<usize> =
                inst.event_tokens().difference(&cues).copied().collect();
            let scope: BTreeSet<usize> = inst
                .scope_tokens()
                .difference(&cues)
                .copied()
                .collect::<BTreeSet<_>>()
                .difference(&inst.event_tokens())
                .copied()
                .collect();
            for &c in &cues {
                let cv = vector(c, &mut vectors)?;
                for &e in &events {
                    ce.push(cosine(&cv, &vector(e, &mut vectors)?)?);
                }
                for &s in &scope {
                    cs.push(cosine(&cv, &vector(s, &mut vectors)?)?);
                }
                for &o in &outside {
                    co.push(cosine(&cv, &vector(o, &mut vectors)?)?);
                }
            }
        }
    }

    Ok((
        SimTriple {
            layer,
            sim_ce: ce.mean(),
            sim_cs: cs.mean(),
            sim_co: co.mean(),
            n_ce: ce.n,
            n_cs: cs.n,
            n_co: co.n,
        },
        warnings,
    ))
}

/// One SimTriple per requested layer.
pub fn sim_sweep(
    corpus: &[AlignedSentence],
    traces: &TraceSet,
    layers: &[LayerRef],
) -> Result<(Vec<SimTriple>, Vec<String>)> {
    let mut rows = Vec::with_capacity(layers.len());
    let mut warnings = Vec::new();
    for (i, &layer) in layers.iter().enumerate() {
        let (row, warn) = sim_groups(corpus, traces, layer)?;
        rows.push(row);
        if i == 0 {
            warnings = warn;
        }
    }
    Ok((rows, warnings))
}

pub fn sim_table(rows: &[SimTriple]) -> Table {
    let mut table = Table::new(
        "cosine_similarity",
        ["layer", "sim_ce", "sim_cs", "sim_co", "n_ce", "n_cs", "n_co"],
    );
    for row in rows {
        table.push_row(vec![
            Cell::from(row.layer.to_string()),
            Cell::from(row.sim_ce),
            Cell::from(row.sim_cs),
            Cell::from(row.sim_co),
            Cell::from(row.n_ce as i64),
            Cell::from(row.n_cs as i64),
            Cell::from(row.n_co as i64),
        ]);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::negdata::{AnnotatedSentence, NegInstance, TokenSpan};
    use crate::tracestore::{synth_trace, ModelTrace, TraceDims, TraceFlags, TraceSet};

    #[test]
    fn cosine_by_hand() {
        assert_eq!(cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert!((c - 0.8).abs() < 1e-12);
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cosine_ignores_positive_scale() {
        let u = [0.3, -1.2, 0.7];
        let v = [2.0, 0.1, -0.4];
        let base = cosine(&u, &v).unwrap();
        for scale in [0.001, 0.5, 3.0, 1e6] {
            let su: Vec<f64> = u.iter().map(|x| x * scale).collect();
            let c = cosine(&su, &v).unwrap();
            assert!((c - base).abs() < 1e-12, "scale {scale}: {c} vs {base}");
        }
    }

    fn dims(src_len: usize, hidden: usize) -> TraceDims {
        TraceDims { enc_layers: 2, dec_layers: 2, heads: 1, src_len, tgt_len: 2, hidden_dim: hidden }
    }

    /// Overwrites encoder layer-1 states with the given per-word rows.
    fn with_enc_rows(mut trace: ModelTrace, rows: &[&[f64]]) -> ModelTrace {
        let d = trace.dims;
        assert_eq!(rows.len(), d.src_len);
        for (pos, row) in rows.iter().enumerate() {
            let off = (d.src_len + pos) * d.hidden_dim;
            for (j, &v) in row.iter().enumerate() {
                trace.enc_hidden[off + j] = v as f32;
            }
        }
        trace
    }

    fn corpus_of(pair_id: &str, tokens: &[&str], inst: NegInstance) -> AlignedSentence {
        AlignedSentence {
            pair_id: pair_id.into(),
            sentence: AnnotatedSentence {
                tokens: tokens.iter().map(|t| t.to_string()).collect(),
                instances: vec![inst],
            },
            alignment: None,
        }
    }

    #[test]
    fn identical_and_orthogonal_vectors_give_exact_means() {
        // tokens: 0 cue, 1 event (same vector as cue), 2 outside (orthogonal)
        let d = dims(3, 4);
        let trace = with_enc_rows(
            synth_trace(1, d, "p"),
            &[&[1.0, 1.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 2.0, 0.0]],
        );
        let mut set = TraceSet::new(d.shared(), TraceFlags::default());
        set.push(trace).unwrap();
        let corpus = vec![corpus_of(
            "p",
            &["not", "go", "today"],
            NegInstance {
                instance_id: 0,
                cue_spans: vec![TokenSpan::new(0, 0)],
                event_spans: vec![TokenSpan::new(1, 1)],
                scope_spans: vec![TokenSpan::new(1, 1)],
            },
        )];
        let (triple, warnings) =
            sim_groups(&corpus, &set, LayerRef { side: Side::Encoder, layer: 1 }).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(triple.sim_ce, Some(1.0));
        assert_eq!(triple.sim_co, Some(0.0));
        assert_eq!(triple.sim_cs, None);
        assert_eq!((triple.n_ce, triple.n_cs, triple.n_co), (1, 0, 1));
    }

    #[test]
    fn means_match_exhaustive_pair_enumeration() {
        // 2 sentences, hand-set 2-dim vectors; compare against a direct
        // pair-by-pair recomputation. Values are dyadic so the f32 storage
        // round-trip is exact and the oracle sees the same numbers.
        let d = dims(4, 2);
        let rows1: &[&[f64]] = &[&[1.0, 0.0], &[0.625, 0.75], &[0.0, 1.0], &[-1.0, 0.0]];
        let rows2: &[&[f64]] = &[&[0.5, 0.5], &[1.0, 1.0], &[1.0, -1.0], &[0.25, 0.875]];
        let mut set = TraceSet::new(d.shared(), TraceFlags::default());
        set.push(with_enc_rows(synth_trace(2, d, "a"), rows1)).unwrap();
        set.push(with_enc_rows(synth_trace(3, d, "b"), rows2)).unwrap();
        let inst = |cue: usize, event: usize, scope: &[usize]| NegInstance {
            instance_id: 0,
            cue_spans: vec![TokenSpan::new(cue, cue)],
            event_spans: vec![TokenSpan::new(event, event)],
            scope_spans: scope.iter().map(|&s| TokenSpan::new(s, s)).collect(),
        };
        // sentence a: cue 0, event 1, scope {1,2}; token 3 outside
        // sentence b: cue 1, event 2, scope {2,3}; token 0 outside
        let corpus = vec![
            corpus_of("a", &["w0", "w1", "w2", "w3"], inst(0, 1, &[1, 2])),
            corpus_of("b", &["w0", "w1", "w2", "w3"], inst(1, 2, &[2, 3])),
        ];
        let (triple, _) =
            sim_groups(&corpus, &set, LayerRef { side: Side::Encoder, layer: 1 }).unwrap();

        let cos = |u: &[f64], v: &[f64]| cosine(u, v).unwrap();
        let want_ce = (cos(rows1[0], rows1[1]) + cos(rows2[1], rows2[2])) / 2.0;
        let want_cs = (cos(rows1[0], rows1[2]) + cos(rows2[1], rows2[3])) / 2.0;
        let want_co = (cos(rows1[0], rows1[3]) + cos(rows2[1], rows2[0])) / 2.0;
        assert!((triple.sim_ce.unwrap() - want_ce).abs() < 1e-9);
        assert!((triple.sim_cs.unwrap() - want_cs).abs() < 1e-9);
        assert!((triple.sim_co.unwrap() - want_co).abs() < 1e-9);
        assert_eq!((triple.n_ce, triple.n_cs, triple.n_co), (2, 2, 2));
    }

    #[test]
    fn sentence_order_does_not_matter() {
        let d = dims(3, 3);
        let mut set = TraceSet::new(d.shared(), TraceFlags::default());
        set.push(synth_trace(5, d, "a")).unwrap();
        set.push(synth_trace(6, d, "b")).unwrap();
        let inst = NegInstance {
            instance_id: 0,
            cue_spans: vec![TokenSpan::new(0, 0)],
            event_spans: vec![TokenSpan::new(1, 1)],
            scope_spans: vec![TokenSpan::new(1, 1)],
        };
        let s1 = corpus_of("a", &["x", "y", "z"], inst.clone());
        let s2 = corpus_of("b", &["x", "y", "z"], inst);
        let layer = LayerRef { side: Side::Encoder, layer: 2 };
        let (fwd, _) = sim_groups(&[s1.clone(), s2.clone()], &set, layer).unwrap();
        let (rev, _) = sim_groups(&[s2, s1], &set, layer).unwrap();
        assert_eq!(fwd.n_ce, rev.n_ce);
        assert!((fwd.sim_ce.unwrap() - rev.sim_ce.unwrap()).abs() < 1e-12);
        assert!((fwd.sim_co.unwrap() - rev.sim_co.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn no_events_means_omitted_value_with_zero_count() {
        let d = dims(3, 3);
        let mut set = TraceSet::new(d.shared(), TraceFlags::default());
        set.push(synth_trace(5, d, "a")).unwrap();
        let corpus = vec![corpus_of(
            "a",
            &["not", "go", "now"],
            NegInstance {
                instance_id: 0,
                cue_spans: vec![TokenSpan::new(0, 0)],
                event_spans: vec![],
                scope_spans: vec![TokenSpan::new(1, 1)],
            },
        )];
        let (triple, _) =
            sim_groups(&corpus, &set, LayerRef { side: Side::Encoder, layer: 1 }).unwrap();
        assert_eq!(triple.sim_ce, None);
        assert_eq!(triple.n_ce, 0);
        assert!(triple.sim_cs.is_some());
    }

    #[test]
    fn sweep_has_one_row_per_layer_and_bounded_values() {
        // the decoder slice indexes target positions, so the fixture keeps
        // both sides the same length as the annotated sentence
        let d = TraceDims {
            enc_layers: 2,
            dec_layers: 2,
            heads: 1,
            src_len: 3,
            tgt_len: 3,
            hidden_dim: 3,
        };
        let mut set = TraceSet::new(d.shared(), TraceFlags::default());
        set.push(synth_trace(5, d, "a")).unwrap();
        let corpus = vec![corpus_of(
            "a",
            &["not", "go", "now"],
            NegInstance {
                instance_id: 0,
                cue_spans: vec![TokenSpan::new(0, 0)],
                event_spans: vec![TokenSpan::new(1, 1)],
                scope_spans: vec![TokenSpan::new(1, 1)],
            },
        )];
        let layers: Vec<LayerRef> = (1..=2)
            .map(|l| LayerRef { side: Side::Encoder, layer: l })
            .chain([LayerRef { side: Side::Decoder, layer: 2 }])
            .collect();
        let (rows, _) = sim_sweep(&corpus, &set, &layers).unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            for v in [row.sim_ce, row.sim_cs, row.sim_co].into_iter().flatten() {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
        assert_eq!(rows[2].layer.to_string(), "DEC2");
    }

    #[test]
    fn layer_ref_parses_and_displays() {
        let r: LayerRef = "enc3".parse().unwrap();
        assert_eq!(r, LayerRef { side: Side::Encoder, layer: 3 });
        assert_eq!(r.to_string(), "ENC3");
        let d: LayerRef = "DEC6".parse().unwrap();
        assert_eq!(d.to_string(), "DEC6");
        assert!("foo3".parse::<LayerRef>().is_err());
        assert!("enc".parse::<LayerRef>().is_err());
    }
}
