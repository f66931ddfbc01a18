//! Attention-flow attribution: head aggregation, residual mixing, the
//! layered capacity graph, exact max-flow from decoder positions to source
//! embeddings, raw-attention baselines, rank correlation, and the
//! per-layer flow report.
//!
//! Capacity layout: every node's outgoing capacity totals 1, so any
//! single-source flow is bounded by 1. Encoder layer nodes split
//! 0.5/0.5 between self-attention and the residual; decoder nodes above
//! layer 1 split 0.5 to cross-attention and 0.5 to the residual-mixed
//! self-attention path; layer-1 decoder nodes spend everything on
//! cross-attention. Aggregated rows are renormalized before use so the
//! budget holds in max mode too.

pub mod graph;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use graph::{EdgeState, FlowNetwork, FLOW_EPS};

use crate::error::{Error, Result};
use crate::negdata::TokenSpan;
use crate::report::{Cell, Table};
use crate::tracestore::{ModelTrace, TraceSet};

/// How per-head attention matrices are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    #[default]
    Average,
    Max,
}

impl std::str::FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "avg" | "average" => Ok(HeadMode::Average),
            "max" | "maximum" => Ok(HeadMode::Max),
            other => Err(Error::invalid_input(format!(
                "unknown head mode {other:?} (expected avg or max)"
            ))),
        }
    }
}

pub type Weights = Vec<Vec<f64>>;

/// Combines `[H][Q][K]` attention into one `[Q][K]` matrix.
pub fn head_aggregate(heads: &[Weights], mode: HeadMode) -> Result<Weights> {
    let first = heads
        .first()
        .ok_or_else(|| Error::invalid_input("head_aggregate needs at least one head"))?;
    let q = first.len();
    let k = first.first().map_or(0, Vec::len);
    for head in heads {
        if head.len() != q || head.iter().any(|row| row.len() != k) {
            return Err(Error::invalid_input("attention heads disagree on shape"));
        }
    }
    let mut out = vec![vec![0.0f64; k]; q];
    match mode {
        HeadMode::Average => {
            for head in heads {
                for (orow, hrow) in out.iter_mut().zip(head) {
                    for (o, &h) in orow.iter_mut().zip(hrow) {
                        *o += h;
                    }
                }
            }
            let scale = 1.0 / heads.len() as f64;
            for row in &mut out {
                for o in row {
                    *o *= scale;
                }
            }
        }
        HeadMode::Max => {
            for head in heads {
                for (orow, hrow) in out.iter_mut().zip(head) {
                    for (o, &h) in orow.iter_mut().zip(hrow) {
                        *o = o.max(h);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 0.5·A + 0.5·I; models the skip connection around an attention sublayer.
pub fn add_residual(a: &Weights) -> Result<Weights> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) {
        return Err(Error::invalid_input("residual mixing needs a square matrix"));
    }
    Ok((0..n)
        .map(|q| (0..n).map(|k| 0.5 * a[q][k] + 0.5 * f64::from(u8::from(q == k))).collect())
        .collect())
}

fn normalize_rows(m: &mut Weights) {
    for row in m {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for v in row {
                *v /= sum;
            }
        }
    }
}

fn aggregated_enc_self(trace: &ModelTrace, layer: usize, mode: HeadMode) -> Result<Weights> {
    let d = &trace.dims;
    let heads: Vec<Weights> = (0..d.heads)
        .map(|h| {
            (0..d.src_len)
                .map(|q| trace.enc_self_row(layer, h, q).iter().map(|&v| v as f64).collect())
                .collect()
        })
        .collect();
    head_aggregate(&heads, mode)
}

fn aggregated_dec_self(trace: &ModelTrace, layer: usize, mode: HeadMode) -> Result<Weights> {
    let d = &trace.dims;
    let heads: Vec<Weights> = (0..d.heads)
        .map(|h| {
            (0..d.tgt_len)
                .map(|q| trace.dec_self_row(layer, h, q).iter().map(|&v| v as f64).collect())
                .collect()
        })
        .collect();
    head_aggregate(&heads, mode)
}

fn aggregated_cross(trace: &ModelTrace, layer: usize, mode: HeadMode) -> Result<Weights> {
    let d = &trace.dims;
    let heads: Vec<Weights> = (0..d.heads)
        .map(|h| {
            (0..d.tgt_len)
                .map(|q| trace.cross_row(layer, h, q).iter().map(|&v| v as f64).collect())
                .collect()
        })
        .collect();
    head_aggregate(&heads, mode)
}

/// Layered capacity graph over one trace. Encoder node (ℓ, p) for
/// ℓ ∈ 0..=L_e (layer 0 = embeddings), decoder node (ℓ, p) for ℓ ∈ 1..=L_d.
#[derive(Debug, Clone)]
pub struct FlowGraph {
    pub net: FlowNetwork,
    enc_layers: usize,
    dec_layers: usize,
    src_len: usize,
    tgt_len: usize,
}

impl FlowGraph {
    pub fn encoder_node(&self, layer: usize, pos: usize) -> Result<usize> {
        if layer > self.enc_layers || pos >= self.src_len {
            return Err(Error::invalid_input(format!(
                "encoder node ({layer}, {pos}) out of range for {}x{}",
                self.enc_layers, self.src_len
            )));
        }
        Ok(layer * self.src_len + pos)
    }

    pub fn decoder_node(&self, layer: usize, pos: usize) -> Result<usize> {
        if layer == 0 || layer > self.dec_layers || pos >= self.tgt_len {
            return Err(Error::invalid_input(format!(
                "decoder node ({layer}, {pos}) out of range for {}x{}",
                self.dec_layers, self.tgt_len
            )));
        }
        Ok((self.enc_layers + 1) * self.src_len + (layer - 1) * self.tgt_len + pos)
    }

    pub fn node_count(&self) -> usize {
        self.net.node_count()
    }

    /// Embedding positions reachable from a node along positive-capacity
    /// edges. Used to sanity-check constructions.
    pub fn reachable_embeddings(&self, from: usize) -> Vec<usize> {
        let states = self.net.edge_states();
        let mut adj = vec![Vec::new(); self.net.node_count()];
        for e in &states {
            if e.capacity > 0.0 {
                adj[e.from].push(e.to);
            }
        }
        let mut seen = vec![false; self.net.node_count()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            for &to in &adj[v] {
                if !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        (0..self.src_len).filter(|&p| seen[p]).collect()
    }
}

/// Builds the capacity graph for one trace. Edges with zero capacity are
/// omitted.
pub fn build_flow_graph(trace: &ModelTrace, mode: HeadMode) -> Result<FlowGraph> {
    let d = &trace.dims;
    let enc_nodes = (d.enc_layers + 1) * d.src_len;
    let nodes = enc_nodes + d.dec_layers * d.tgt_len;
    let mut g = FlowGraph {
        net: FlowNetwork::new(nodes),
        enc_layers: d.enc_layers,
        dec_layers: d.dec_layers,
        src_len: d.src_len,
        tgt_len: d.tgt_len,
    };

    for layer in 1..=d.enc_layers {
        let mut attn = aggregated_enc_self(trace, layer, mode)?;
        normalize_rows(&mut attn);
        let mixed = add_residual(&attn)?;
        for q in 0..d.src_len {
            for k in 0..d.src_len {
                let cap = mixed[q][k];
                if cap > 0.0 {
                    let from = g.encoder_node(layer, q)?;
                    let to = g.encoder_node(layer - 1, k)?;
                    g.net.add_edge(from, to, cap)?;
                }
            }
        }
    }

    for layer in 1..=d.dec_layers {
        let mut cross = aggregated_cross(trace, layer, mode)?;
        normalize_rows(&mut cross);
        // layer 1 has no lower decoder layer; its whole budget crosses over
        let cross_share = if layer == 1 { 1.0 } else { 0.5 };
        for t in 0..d.tgt_len {
            for k in 0..d.src_len {
                let cap = cross_share * cross[t][k];
                if cap > 0.0 {
                    let from = g.decoder_node(layer, t)?;
                    let to = g.encoder_node(d.enc_layers, k)?;
                    g.net.add_edge(from, to, cap)?;
                }
            }
        }
        if layer > 1 {
            let mut attn = aggregated_dec_self(trace, layer, mode)?;
            normalize_rows(&mut attn);
            let mixed = add_residual(&attn)?;
            for t in 0..d.tgt_len {
                for t2 in 0..d.tgt_len {
                    let cap = 0.5 * mixed[t][t2];
                    if cap > 0.0 {
                        let from = g.decoder_node(layer, t)?;
                        let to = g.decoder_node(layer - 1, t2)?;
                        g.net.add_edge(from, to, cap)?;
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Max flow from decoder node (layer, t) to the embedding of `cue_pos`.
pub fn position_flow(graph: &FlowGraph, layer: usize, t: usize, cue_pos: usize) -> Result<f64> {
    let source = graph.decoder_node(layer, t)?;
    let sink = graph.encoder_node(0, cue_pos)?;
    graph.net.clone().max_flow(source, sink)
}

/// Attention flow to a source cue at one decoder layer: the maximum over
/// decoder positions of the per-position max flow.
pub fn cue_flow_in_graph(graph: &FlowGraph, cue_pos: usize, layer: usize) -> Result<f64> {
    if layer == 0 || layer > graph.dec_layers {
        return Err(Error::invalid_input(format!(
            "decoder layer {layer} out of range 1..={}",
            graph.dec_layers
        )));
    }
    if cue_pos >= graph.src_len {
        return Err(Error::invalid_input(format!(
            "cue position {cue_pos} out of range for source length {}",
            graph.src_len
        )));
    }
    let flows: Result<Vec<f64>> = (0..graph.tgt_len)
        .into_par_iter()
        .map(|t| position_flow(graph, layer, t, cue_pos))
        .collect();
    Ok(flows?.into_iter().fold(0.0, f64::max))
}

pub fn cue_flow(trace: &ModelTrace, cue_pos: usize, layer: usize, mode: HeadMode) -> Result<f64> {
    let graph = build_flow_graph(trace, mode)?;
    cue_flow_in_graph(&graph, cue_pos, layer)
}

/// Cue flow for a multi-piece cue: the maximum over its subword sinks.
pub fn cue_flow_span(
    trace: &ModelTrace,
    span: TokenSpan,
    layer: usize,
    mode: HeadMode,
) -> Result<f64> {
    let graph = build_flow_graph(trace, mode)?;
    let mut best = 0.0f64;
    for pos in span.indices() {
        best = best.max(cue_flow_in_graph(&graph, pos, layer)?);
    }
    Ok(best)
}

/// The cue column of the head-aggregated cross-attention at one layer,
/// plus its maximum over decoder positions.
pub fn raw_cue_attention(
    trace: &ModelTrace,
    cue_pos: usize,
    layer: usize,
    mode: HeadMode,
) -> Result<(Vec<f64>, f64)> {
    let d = &trace.dims;
    if layer == 0 || layer > d.dec_layers {
        return Err(Error::invalid_input(format!(
            "decoder layer {layer} out of range 1..={}",
            d.dec_layers
        )));
    }
    if cue_pos >= d.src_len {
        return Err(Error::invalid_input(format!(
            "cue position {cue_pos} out of range for source length {}",
            d.src_len
        )));
    }
    let cross = aggregated_cross(trace, layer, mode)?;
    let column: Vec<f64> = cross.iter().map(|row| row[cue_pos]).collect();
    let max = column.iter().copied().fold(0.0, f64::max);
    Ok((column, max))
}

/// Average ranks (1-based; ties share the mean of their positions).
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0f64; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) tie; mean 1-based rank
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid_input(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid_input("need at least two observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid_input("non-finite observation"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::invalid_input("constant vector has no rank correlation"));
    }
    // equal variances happen exactly when tie structures match; dividing
    // directly keeps perfectly monotone inputs at exactly ±1
    if vx == vy {
        Ok(cov / vx)
    } else {
        Ok(cov / (vx * vy).sqrt())
    }
}

/// Translation outcome for a labeled cue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Correct,
    Dropped,
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Category::Correct => "correct",
            Category::Dropped => "dropped",
        })
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "correct" => Ok(Category::Correct),
            "dropped" => Ok(Category::Dropped),
            other => Err(Error::parse(
                0,
                format!("unknown category {other:?} (expected correct or dropped)"),
            )),
        }
    }
}

/// One labeled source cue occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueLabel {
    pub pair_id: String,
    pub src_pos: usize,
    pub category: Category,
}

/// Reads cue labels from CSV with header pair_id,src_pos,category.
pub fn read_cue_labels(path: impl AsRef<Path>) -> Result<Vec<CueLabel>> {
    let mut reader = csv::Reader::from_path(path.as_ref())
        .map_err(|e| Error::format(format!("cannot open cue label csv: {e}")))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<CueLabelRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(line, e.to_string()))?;
        let category = row
            .category
            .parse::<Category>()
            .map_err(|e| Error::parse(line, e.to_string()))?;
        out.push(CueLabel { pair_id: row.pair_id, src_pos: row.src_pos, category });
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct CueLabelRow {
    pair_id: String,
    src_pos: usize,
    category: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReportRow {
    pub layer: usize,
    pub category: Category,
    pub n: usize,
    pub mean_flow: f64,
    /// Absolute Spearman correlation between flows and categories at this
    /// layer; absent when only one category is present or flows are constant.
    pub abs_spearman: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowReport {
    pub rows: Vec<FlowReportRow>,
    pub warnings: Vec<String>,
}

impl FlowReport {
    pub fn to_table(&self) -> Table {
        let mut table = Table::new(
            "attention_flow",
            ["layer", "category", "n", "mean_flow", "abs_spearman"],
        );
        for row in &self.rows {
            table.push_row(vec![
                Cell::from(row.layer as i64),
                Cell::from(row.category.to_string()),
                Cell::from(row.n as i64),
                Cell::from(row.mean_flow),
                Cell::from(row.abs_spearman),
            ]);
        }
        table
    }
}

/// Per-layer mean cue flow by category, with the flow/category rank
/// correlation when both categories are represented.
pub fn flow_report(
    set: &TraceSet,
    labels: &[CueLabel],
    layers: &[usize],
    mode: HeadMode,
) -> Result<FlowReport> {
    if labels.is_empty() {
        return Err(Error::invalid_input("no labeled cues supplied"));
    }
    // group label indices by trace so each graph is built once
    let mut by_pair: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        by_pair.entry(label.pair_id.as_str()).or_default().push(i);
    }

    // flows[layer_idx][label_idx]
    let mut flows = vec![vec![0.0f64; labels.len()]; layers.len()];
    for (pair_id, indices) in &by_pair {
        let trace = set
            .get(pair_id)
            .ok_or_else(|| Error::validation(format!("no trace with pair id {pair_id:?}")))?;
        let graph = build_flow_graph(trace, mode)?;
        for (li, &layer) in layers.iter().enumerate() {
            for &i in indices {
                flows[li][i] = cue_flow_in_graph(&graph, labels[i].src_pos, layer)?;
            }
        }
    }

    let mut report = FlowReport::default();
    for (li, &layer) in layers.iter().enumerate() {
        let layer_flows = &flows[li];
        let indicator: Vec<f64> = labels
            .iter()
            .map(|l| f64::from(u8::from(l.category == Category::Correct)))
            .collect();
        let both = labels.iter().any(|l| l.category == Category::Correct)
            && labels.iter().any(|l| l.category == Category::Dropped);
        let abs_rho = if both {
            match spearman(layer_flows, &indicator) {
                Ok(rho) => Some(rho.abs()),
                Err(e) => {
                    report
                        .warnings
                        .push(format!("layer {layer}: correlation omitted ({e})"));
                    None
                }
            }
        } else {
            None
        };
        for category in [Category::Correct, Category::Dropped] {
            let group: Vec<f64> = labels
                .iter()
                .zip(layer_flows)
                .filter(|(l, _)| l.category == category)
                .map(|(_, &f)| f)
                .collect();
            if group.is_empty() {
                report
                    .warnings
                    .push(format!("layer {layer}: no cues in category {category}; row omitted"));
                continue;
            }
            report.rows.push(FlowReportRow {
                layer,
                category,
                n: group.len(),
                mean_flow: group.iter().sum::<f64>() / group.len() as f64,
                abs_spearman: abs_rho,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracestore::{synth_trace, TraceDims, TraceFlags};

    fn dims() -> TraceDims {
        TraceDims { enc_layers: 2, dec_layers: 2, heads: 2, src_len: 3, tgt_len: 2, hidden_dim: 4 }
    }

    /// Trace whose cross-attention is one-hot on `target` everywhere and
    /// whose self-attention is the identity.
    fn onehot_trace(target: usize, d: TraceDims) -> ModelTrace {
        let mut t = synth_trace(0, d, "onehot");
        let d = t.dims;
        t.enc_self_attn = identity_rows(d.enc_layers * d.heads, d.src_len);
        t.dec_self_attn = identity_rows(d.dec_layers * d.heads, d.tgt_len);
        let mut cross = Vec::new();
        for _ in 0..d.dec_layers * d.heads * d.tgt_len {
            for k in 0..d.src_len {
                cross.push(if k == target { 1.0 } else { 0.0 });
            }
        }
        t.cross_attn = cross;
        t.validate().unwrap();
        t
    }

    fn identity_rows(blocks: usize, n: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(blocks * n * n);
        for _ in 0..blocks {
            for q in 0..n {
                for k in 0..n {
                    out.push(if q == k { 1.0 } else { 0.0 });
                }
            }
        }
        out
    }

    #[test]
    fn head_average_and_max_match_by_hand() {
        let h1 = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let h2 = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let avg = head_aggregate(&[h1.clone(), h2.clone()], HeadMode::Average).unwrap();
        assert_eq!(avg, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let max = head_aggregate(&[h1.clone(), h2], HeadMode::Max).unwrap();
        assert_eq!(max, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let single = head_aggregate(&[h1.clone()], HeadMode::Max).unwrap();
        assert_eq!(single, h1);
        assert!(head_aggregate(&[], HeadMode::Average).is_err());
    }

    #[test]
    fn residual_mixing_by_hand() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(add_residual(&id).unwrap(), id);
        let swap = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(add_residual(&swap).unwrap(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let ragged = vec![vec![0.0, 1.0]];
        assert!(add_residual(&ragged).is_err());
    }

    #[test]
    fn residual_rows_stay_stochastic() {
        let t = synth_trace(1, dims(), "p");
        for layer in 1..=2 {
            let mixed =
                add_residual(&aggregated_enc_self(&t, layer, HeadMode::Average).unwrap()).unwrap();
            for row in mixed {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-6, "row sums to {sum}");
            }
        }
    }

    #[test]
    fn graph_has_expected_node_count() {
        let d = TraceDims {
            enc_layers: 6,
            dec_layers: 6,
            heads: 1,
            src_len: 10,
            tgt_len: 8,
            hidden_dim: 2,
        };
        let g = build_flow_graph(&synth_trace(3, d, "p"), HeadMode::Average).unwrap();
        assert_eq!(g.node_count(), 70 + 48);
    }

    #[test]
    fn graph_is_acyclic() {
        let g = build_flow_graph(&synth_trace(5, dims(), "p"), HeadMode::Average).unwrap();
        assert!(g.net.is_acyclic());
    }

    #[test]
    fn onehot_trace_reaches_one_embedding_with_full_flow() {
        let t = onehot_trace(1, dims());
        let g = build_flow_graph(&t, HeadMode::Average).unwrap();
        for layer in 1..=2 {
            for pos in 0..2 {
                let node = g.decoder_node(layer, pos).unwrap();
                assert_eq!(g.reachable_embeddings(node), vec![1]);
            }
            let flow = cue_flow_in_graph(&g, 1, layer).unwrap();
            assert_eq!(flow, 1.0, "layer {layer}");
        }
    }

    #[test]
    fn zero_cue_column_means_zero_flow() {
        // one-hot on position 0; position 2 never receives mass
        let t = onehot_trace(0, dims());
        assert_eq!(cue_flow(&t, 2, 2, HeadMode::Average).unwrap(), 0.0);
    }

    #[test]
    fn synth_flows_stay_in_unit_interval() {
        for seed in 0..5 {
            let t = synth_trace(seed, dims(), "p");
            let g = build_flow_graph(&t, HeadMode::Average).unwrap();
            for layer in 1..=2 {
                for cue in 0..3 {
                    let f = cue_flow_in_graph(&g, cue, layer).unwrap();
                    assert!((0.0..=1.0 + 1e-9).contains(&f), "flow {f} outside [0,1]");
                }
            }
        }
    }

    #[test]
    fn cue_flow_is_max_over_positions() {
        let t = synth_trace(8, dims(), "p");
        let g = build_flow_graph(&t, HeadMode::Average).unwrap();
        let per_pos: Vec<f64> =
            (0..2).map(|pos| position_flow(&g, 2, pos, 1).unwrap()).collect();
        let expect = per_pos.iter().copied().fold(0.0, f64::max);
        assert_eq!(cue_flow_in_graph(&g, 1, 2).unwrap(), expect);
    }

    #[test]
    fn out_of_range_arguments_are_rejected() {
        let t = synth_trace(1, dims(), "p");
        assert!(cue_flow(&t, 99, 1, HeadMode::Average).is_err());
        assert!(cue_flow(&t, 0, 0, HeadMode::Average).is_err());
        assert!(cue_flow(&t, 0, 99, HeadMode::Average).is_err());
    }

    #[test]
    fn span_flow_is_max_over_pieces() {
        let t = synth_trace(2, dims(), "p");
        let span = TokenSpan::new(0, 1);
        let a = cue_flow(&t, 0, 2, HeadMode::Average).unwrap();
        let b = cue_flow(&t, 1, 2, HeadMode::Average).unwrap();
        let s = cue_flow_span(&t, span, 2, HeadMode::Average).unwrap();
        assert_eq!(s, a.max(b));
    }

    #[test]
    fn raw_attention_matches_column_scan() {
        let t = synth_trace(4, dims(), "p");
        let (col, max) = raw_cue_attention(&t, 1, 2, HeadMode::Average).unwrap();
        assert_eq!(col.len(), 2);
        let cross = aggregated_cross(&t, 2, HeadMode::Average).unwrap();
        for (pos, &w) in col.iter().enumerate() {
            assert_eq!(w, cross[pos][1]);
        }
        assert_eq!(max, col.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn uniform_cross_attention_gives_uniform_column() {
        let mut t = synth_trace(0, dims(), "p");
        for v in &mut t.cross_attn {
            *v = 1.0 / 3.0;
        }
        let (col, max) = raw_cue_attention(&t, 0, 1, HeadMode::Average).unwrap();
        for w in col {
            assert!((w - 1.0 / 3.0).abs() < 1e-6);
        }
        assert!((max - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn spearman_monotone_cases_are_exact() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(), -1.0);
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        // ranks: x -> [1, 2.5, 2.5, 4], y -> [1, 3, 2, 4]
        let rho = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        // Pearson of those ranks, computed by hand: cov = 4.5, vx = 4.5, vy = 5
        let expect = 4.5 / (4.5f64 * 5.0).sqrt();
        assert!((rho - expect).abs() < 1e-12, "{rho} vs {expect}");
    }

    #[test]
    fn spearman_rejects_bad_input() {
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn report_groups_and_means() {
        let d = dims();
        let mut set = TraceSet::new(d.shared(), TraceFlags::default());
        set.push(synth_trace(10, d, "a")).unwrap();
        set.push(synth_trace(11, d, "b")).unwrap();
        let labels = vec![
            CueLabel { pair_id: "a".into(), src_pos: 0, category: Category::Correct },
            CueLabel { pair_id: "a".into(), src_pos: 1, category: Category::Dropped },
            CueLabel { pair_id: "b".into(), src_pos: 2, category: Category::Correct },
        ];
        let report = flow_report(&set, &labels, &[1, 2], HeadMode::Average).unwrap();
        assert_eq!(report.rows.len(), 4);
        let row = &report.rows[0];
        assert_eq!((row.layer, row.category, row.n), (1, Category::Correct, 2));
        let fa = cue_flow(set.get("a").unwrap(), 0, 1, HeadMode::Average).unwrap();
        let fb = cue_flow(set.get("b").unwrap(), 2, 1, HeadMode::Average).unwrap();
        assert!((row.mean_flow - (fa + fb) / 2.0).abs() < 1e-12);
        assert!(row.abs_spearman.is_some());
    }

    #[test]
    fn single_category_omits_correlation_with_warning() {
        let d = dims();
        let mut set = TraceSet::new(d.shared(), TraceFlags::default());
        set.push(synth_trace(10, d, "a")).unwrap();
        let labels = vec![
            CueLabel { pair_id: "a".into(), src_pos: 0, category: Category::Correct },
            CueLabel { pair_id: "a".into(), src_pos: 1, category: Category::Correct },
        ];
        let report = flow_report(&set, &labels, &[2], HeadMode::Average).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].abs_spearman, None);
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn unknown_pair_id_is_an_error() {
        let d = dims();
        let mut set = TraceSet::new(d.shared(), TraceFlags::default());
        set.push(synth_trace(10, d, "a")).unwrap();
        let labels =
            vec![CueLabel { pair_id: "zzz".into(), src_pos: 0, category: Category::Correct }];
        assert!(flow_report(&set, &labels, &[1], HeadMode::Average).is_err());
    }
}
