//! Model traces: per-sentence attention tensors, hidden states, and token
//! log-probabilities exported from an NMT system, plus a deterministic
//! synthetic generator for fixtures.
//!
//! Tensors are stored flat in row-major order; accessors do the stride
//! arithmetic. Layer arguments are 1-based for attention and decoder
//! states (layer 1 = first layer); encoder hidden states accept 0..=L_e
//! where index 0 is the embedding row.

pub mod container;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which stack of the model a position lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Encoder,
    Decoder,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Encoder => "enc",
            Side::Decoder => "dec",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDims {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub src_len: usize,
    pub tgt_len: usize,
    pub hidden_dim: usize,
}

impl TraceDims {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("heads", self.heads),
            ("src_len", self.src_len),
            ("tgt_len", self.tgt_len),
            ("hidden_dim", self.hidden_dim),
        ];
        for (name, v) in all {
            if v == 0 {
                return Err(Error::validation(format!("dimension {name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn shared(&self) -> SharedDims {
        SharedDims {
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            heads: self.heads,
            hidden_dim: self.hidden_dim,
        }
    }
}

/// Dimensions every trace in a set must agree on (sentence lengths vary).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedDims {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub hidden_dim: usize,
}

/// Exporter choices the analyses must know about but cannot infer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFlags {
    #[serde(default)]
    pub final_norm_applied: bool,
    #[serde(default)]
    pub embeddings_include_position: bool,
}

/// One sentence pair's export. Attention tensors are `[layers][heads][query][key]`,
/// hidden states `[layers][position][dim]`, all flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTrace {
    pub pair_id: String,
    pub dims: TraceDims,
    pub enc_self_attn: Vec<f32>,
    pub dec_self_attn: Vec<f32>,
    pub cross_attn: Vec<f32>,
    /// `[enc_layers + 1][src_len][hidden_dim]`; index 0 is the embeddings.
    pub enc_hidden: Vec<f32>,
    pub dec_hidden: Vec<f32>,
    pub tgt_token_logprobs: Vec<f32>,
}

pub const ATTN_ROW_TOLERANCE: f64 = 1e-4;

impl ModelTrace {
    /// Attention row of encoder self-attention; `layer` is 1-based.
    pub fn enc_self_row(&self, layer: usize, head: usize, query: usize) -> &[f32] {
        let d = &self.dims;
        let off = (((layer - 1) * d.heads + head) * d.src_len + query) * d.src_len;
        &self.enc_self_attn[off..off + d.src_len]
    }

    pub fn dec_self_row(&self, layer: usize, head: usize, query: usize) -> &[f32] {
        let d = &self.dims;
        let off = (((layer - 1) * d.heads + head) * d.tgt_len + query) * d.tgt_len;
        &self.dec_self_attn[off..off + d.tgt_len]
    }

    /// Cross-attention row (decoder query over source keys); 1-based layer.
    pub fn cross_row(&self, layer: usize, head: usize, query: usize) -> &[f32] {
        let d = &self.dims;
        let off = (((layer - 1) * d.heads + head) * d.tgt_len + query) * d.src_len;
        &self.cross_attn[off..off + d.src_len]
    }

    /// Encoder hidden state; `layer` 0 (embeddings) through enc_layers.
    pub fn enc_state(&self, layer: usize, pos: usize) -> &[f32] {
        let d = &self.dims;
        let off = (layer * d.src_len + pos) * d.hidden_dim;
        &self.enc_hidden[off..off + d.hidden_dim]
    }

    /// Decoder hidden state after `layer` (1-based).
    pub fn dec_state(&self, layer: usize, pos: usize) -> &[f32] {
        let d = &self.dims;
        let off = ((layer - 1) * d.tgt_len + pos) * d.hidden_dim;
        &self.dec_hidden[off..off + d.hidden_dim]
    }

    /// Hidden-state row for (side, layer, pos) under each side's layer
    /// numbering. Errors on out-of-range layers or positions.
    pub fn state(&self, side: Side, layer: usize, pos: usize) -> Result<&[f32]> {
        let d = &self.dims;
        match side {
            Side::Encoder => {
                if layer > d.enc_layers || pos >= d.src_len {
                    return Err(Error::invalid_input(format!(
                        "encoder state ({layer}, {pos}) out of range for {}x{}",
                        d.enc_layers, d.src_len
                    )));
                }
                Ok(self.enc_state(layer, pos))
            }
            Side::Decoder => {
                if layer == 0 || layer > d.dec_layers || pos >= d.tgt_len {
                    return Err(Error::invalid_input(format!(
                        "decoder state ({layer}, {pos}) out of range for {}x{}",
                        d.dec_layers, d.tgt_len
                    )));
                }
                Ok(self.dec_state(layer, pos))
            }
        }
    }

    /// Mean of the hidden-state rows covered by an inclusive position span,
    /// in f64. Used to pool subword pieces into word vectors.
    pub fn pooled_state(
        &self,
        side: Side,
        layer: usize,
        span: crate::negdata::TokenSpan,
    ) -> Result<Vec<f64>> {
        let mut acc = vec![0.0f64; self.dims.hidden_dim];
        let mut n = 0usize;
        for pos in span.indices() {
            let row = self.state(side, layer, pos)?;
            for (a, &x) in acc.iter_mut().zip(row) {
                *a += x as f64;
            }
            n += 1;
        }
        for a in &mut acc {
            *a /= n as f64;
        }
        Ok(acc)
    }

    fn expected_lens(dims: &TraceDims) -> [(usize, &'static str); 6] {
        let d = dims;
        [
            (d.enc_layers * d.heads * d.src_len * d.src_len, "enc_self_attn"),
            (d.dec_layers * d.heads * d.tgt_len * d.tgt_len, "dec_self_attn"),
            (d.dec_layers * d.heads * d.tgt_len * d.src_len, "cross_attn"),
            ((d.enc_layers + 1) * d.src_len * d.hidden_dim, "enc_hidden"),
            (d.dec_layers * d.tgt_len * d.hidden_dim, "dec_hidden"),
            (d.tgt_len, "tgt_token_logprobs"),
        ]
    }

    /// Full invariant check: tensor extents, stochastic attention rows
    /// (sum 1 within 1e-4, entries nonnegative), causal decoder mask,
    /// finite hidden states, non-positive log-probabilities.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let actual = [
            self.enc_self_attn.len(),
            self.dec_self_attn.len(),
            self.cross_attn.len(),
            self.enc_hidden.len(),
            self.dec_hidden.len(),
            self.tgt_token_logprobs.len(),
        ];
        for ((expected, name), got) in Self::expected_lens(&self.dims).iter().zip(actual) {
            if *expected != got {
                return Err(Error::validation(format!(
                    "trace {}: tensor {name} has {got} values, expected {expected}",
                    self.pair_id
                )));
            }
        }

        let d = &self.dims;
        for layer in 1..=d.enc_layers {
            for head in 0..d.heads {
                for q in 0..d.src_len {
                    check_attn_row(
                        self.enc_self_row(layer, head, q),
                        None,
                        &self.pair_id,
                        "enc_self_attn",
                        layer,
                        head,
                        q,
                    )?;
                }
            }
        }
        for layer in 1..=d.dec_layers {
            for head in 0..d.heads {
                for q in 0..d.tgt_len {
                    check_attn_row(
                        self.dec_self_row(layer, head, q),
                        Some(q),
                        &self.pair_id,
                        "dec_self_attn",
                        layer,
                        head,
                        q,
                    )?;
                    check_attn_row(
                        self.cross_row(layer, head, q),
                        None,
                        &self.pair_id,
                        "cross_attn",
                        layer,
                        head,
                        q,
                    )?;
                }
            }
        }

        for (i, &x) in self.enc_hidden.iter().chain(&self.dec_hidden).enumerate() {
            if !x.is_finite() {
                return Err(Error::validation(format!(
                    "trace {}: non-finite hidden state at flat index {i}",
                    self.pair_id
                )));
            }
        }
        for (t, &lp) in self.tgt_token_logprobs.iter().enumerate() {
            if !lp.is_finite() || lp > 0.0 {
                return Err(Error::validation(format!(
                    "trace {}: log-probability {lp} at position {t} is invalid",
                    self.pair_id
                )));
            }
        }
        Ok(())
    }
}

/// `causal_up_to = Some(q)` restricts the support to keys 0..=q and forces
/// exact zeros beyond it.
fn check_attn_row(
    row: &[f32],
    causal_up_to: Option<usize>,
    pair_id: &str,
    tensor: &str,
    layer: usize,
    head: usize,
    query: usize,
) -> Result<()> {
    let mut sum = 0.0f64;
    for (k, &v) in row.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::validation(format!(
                "trace {pair_id}: {tensor} layer {layer} head {head} row {query}: entry {v} at key {k}"
            )));
        }
        if let Some(q) = causal_up_to {
            if k > q && v != 0.0 {
                return Err(Error::validation(format!(
                    "trace {pair_id}: {tensor} layer {layer} head {head} row {query}: causal violation at key {k}"
                )));
            }
        }
        sum += v as f64;
    }
    if (sum - 1.0).abs() > ATTN_ROW_TOLERANCE {
        return Err(Error::validation(format!(
            "trace {pair_id}: {tensor} layer {layer} head {head} row {query} sums to {sum}"
        )));
    }
    Ok(())
}

/// Ordered, uniformly-dimensioned collection of traces.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    dims: SharedDims,
    flags: TraceFlags,
    traces: Vec<ModelTrace>,
}

impl TraceSet {
    pub fn new(dims: SharedDims, flags: TraceFlags) -> Self {
        TraceSet { dims, flags, traces: Vec::new() }
    }

    pub fn dims(&self) -> SharedDims {
        self.dims
    }

    pub fn flags(&self) -> TraceFlags {
        self.flags
    }

    /// Validates the trace and enforces uniform dims and unique pair ids.
    pub fn push(&mut self, trace: ModelTrace) -> Result<()> {
        if trace.dims.shared() != self.dims {
            return Err(Error::validation(format!(
                "trace {}: dims {:?} do not match the set's {:?}",
                trace.pair_id,
                trace.dims.shared(),
                self.dims
            )));
        }
        trace.validate()?;
        if self.get(&trace.pair_id).is_some() {
            return Err(Error::validation(format!("duplicate trace pair id {:?}", trace.pair_id)));
        }
        self.traces.push(trace);
        Ok(())
    }

    pub fn get(&self, pair_id: &str) -> Option<&ModelTrace> {
        self.traces.iter().find(|t| t.pair_id == pair_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModelTrace> {
        self.traces.iter()
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

/// Deterministic pseudo-random trace satisfying every invariant:
/// attention rows are normalized positive draws, the causal mask is
/// applied, log-probabilities are negative.
pub fn synth_trace(seed: u64, dims: TraceDims, pair_id: impl Into<String>) -> ModelTrace {
    assert!(dims.validate().is_ok(), "synth_trace requires positive dims");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = &dims;

    let mut enc_self = Vec::with_capacity(d.enc_layers * d.heads * d.src_len * d.src_len);
    for _ in 0..d.enc_layers * d.heads * d.src_len {
        extend_attn_row(&mut enc_self, d.src_len, d.src_len, &mut rng);
    }
    let mut dec_self = Vec::with_capacity(d.dec_layers * d.heads * d.tgt_len * d.tgt_len);
    for _ in 0..d.dec_layers * d.heads {
        for q in 0..d.tgt_len {
            extend_attn_row(&mut dec_self, d.tgt_len, q + 1, &mut rng);
        }
    }
    let mut cross = Vec::with_capacity(d.dec_layers * d.heads * d.tgt_len * d.src_len);
    for _ in 0..d.dec_layers * d.heads * d.tgt_len {
        extend_attn_row(&mut cross, d.src_len, d.src_len, &mut rng);
    }

    let enc_hidden = (0..(d.enc_layers + 1) * d.src_len * d.hidden_dim)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) as f32)
        .collect();
    let dec_hidden = (0..d.dec_layers * d.tgt_len * d.hidden_dim)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) as f32)
        .collect();
    let tgt_token_logprobs = (0..d.tgt_len)
        .map(|_| -(rng.random::<f64>() * 5.0 + 0.05) as f32)
        .collect();

    ModelTrace {
        pair_id: pair_id.into(),
        dims,
        enc_self_attn: enc_self,
        dec_self_attn: dec_self,
        cross_attn: cross,
        enc_hidden,
        dec_hidden,
        tgt_token_logprobs,
    }
}

/// Appends one attention row of `width` keys whose first `support` entries
/// are a normalized positive draw (the rest are the causal zeros). The row
/// sums to 1 within 1e-6 after the f32 cast thanks to a residual fix-up.
fn extend_attn_row(out: &mut Vec<f32>, width: usize, support: usize, rng: &mut ChaCha8Rng) {
    let draws: Vec<f64> = (0..support).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = draws.iter().sum();
    let start = out.len();
    out.extend(draws.iter().map(|v| (v / total) as f32));
    // nudge the largest entry so the f32 row still sums to 1
    let row = &mut out[start..start + support];
    let sum: f64 = row.iter().map(|&v| v as f64).sum();
    let largest = (0..support)
        .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
        .unwrap();
    row[largest] = (row[largest] as f64 - (sum - 1.0)) as f32;
    out.extend(std::iter::repeat_n(0.0f32, width - support));
}

/// A whole fixture set: `pairs` traces with ids `synth-0000`, `synth-0001`, ...
/// derived deterministically from `seed`.
pub fn synth_traceset(seed: u64, dims: TraceDims, pairs: usize, flags: TraceFlags) -> TraceSet {
    let mut set = TraceSet::new(dims.shared(), flags);
    for i in 0..pairs {
        let trace = synth_trace(seed.wrapping_add(i as u64), dims, format!("synth-{i:04}"));
        set.push(trace).expect("synthesized traces always validate");
    }
    set
}
