//! On-disk trace container.
//!
//! Layout: 8-byte magic, u32 format version, u64 metadata length, metadata
//! JSON, then the raw little-endian f32 payload. Per trace the payload
//! order is enc_self_attn, dec_self_attn, cross_attn, enc_hidden,
//! dec_hidden, tgt_token_logprobs. All multi-byte integers are
//! little-endian. Decoding is strict: every length is checked before use
//! and decoded traces must pass full validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::write_atomic;

use super::{ModelTrace, SharedDims, TraceDims, TraceFlags, TraceSet};

pub const MAGIC: &[u8; 8] = b"NEGTRACE";
pub const FORMAT_VERSION: u32 = 1;

const TENSOR_ORDER: [&str; 6] = [
    "enc_self_attn",
    "dec_self_attn",
    "cross_attn",
    "enc_hidden",
    "dec_hidden",
    "tgt_token_logprobs",
];

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    dims: SharedDims,
    flags: TraceFlags,
    dtype: String,
    log_base: String,
    tensor_order: Vec<String>,
    traces: Vec<TraceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceEntry {
    pair_id: String,
    src_len: usize,
    tgt_len: usize,
}

/// Serializes a trace set to container bytes.
pub fn encode_traceset(set: &TraceSet) -> Result<Vec<u8>> {
    let meta = Metadata {
        dims: set.dims(),
        flags: set.flags(),
        dtype: "f32le".to_owned(),
        log_base: "e".to_owned(),
        tensor_order: TENSOR_ORDER.iter().map(|s| (*s).to_owned()).collect(),
        traces: set
            .iter()
            .map(|t| TraceEntry {
                pair_id: t.pair_id.clone(),
                src_len: t.dims.src_len,
                tgt_len: t.dims.tgt_len,
            })
            .collect(),
    };
    let meta_bytes = serde_json::to_vec(&meta)
        .map_err(|e| Error::format(format!("metadata serialization failed: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta_bytes);
    for trace in set.iter() {
        for tensor in [
            &trace.enc_self_attn,
            &trace.dec_self_attn,
            &trace.cross_attn,
            &trace.enc_hidden,
            &trace.dec_hidden,
            &trace.tgt_token_logprobs,
        ] {
            for &v in tensor {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(format!(
                    "container truncated reading {what}: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32_le(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64_le(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32_vec(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let n_bytes = count
            .checked_mul(4)
            .ok_or_else(|| Error::format(format!("tensor {what} extent overflows")))?;
        let raw = self.take(n_bytes, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn tensor_len(factors: &[usize], what: &str) -> Result<usize> {
    factors.iter().try_fold(1usize, |acc, &f| {
        acc.checked_mul(f)
            .ok_or_else(|| Error::format(format!("tensor {what} extent overflows")))
    })
}

/// Parses container bytes back into a validated trace set.
pub fn decode_traceset(bytes: &[u8]) -> Result<TraceSet> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(Error::format("not a trace container (bad magic)"));
    }
    let version = cur.u32_le("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported container version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let meta_len = cur.u64_le("metadata length")?;
    let meta_len = usize::try_from(meta_len)
        .map_err(|_| Error::format("metadata length does not fit in memory"))?;
    let meta_bytes = cur.take(meta_len, "metadata")?;
    let meta: Metadata = serde_json::from_slice(meta_bytes)
        .map_err(|e| Error::format(format!("metadata is not valid JSON: {e}")))?;

    if meta.dtype != "f32le" {
        return Err(Error::format(format!("unsupported dtype {:?}", meta.dtype)));
    }
    if meta.log_base != "e" {
        return Err(Error::format(format!("unsupported log base {:?}", meta.log_base)));
    }
    if meta.tensor_order != TENSOR_ORDER {
        return Err(Error::format("unexpected tensor order in metadata"));
    }

    let mut set = TraceSet::new(meta.dims, meta.flags);
    for entry in &meta.traces {
        let dims = TraceDims {
            enc_layers: meta.dims.enc_layers,
            dec_layers: meta.dims.dec_layers,
            heads: meta.dims.heads,
            src_len: entry.src_len,
            tgt_len: entry.tgt_len,
            hidden_dim: meta.dims.hidden_dim,
        };
        let d = &dims;
        let enc_self_attn = cur.f32_vec(
            tensor_len(&[d.enc_layers, d.heads, d.src_len, d.src_len], "enc_self_attn")?,
            "enc_self_attn",
        )?;
        let dec_self_attn = cur.f32_vec(
            tensor_len(&[d.dec_layers, d.heads, d.tgt_len, d.tgt_len], "dec_self_attn")?,
            "dec_self_attn",
        )?;
        let cross_attn = cur.f32_vec(
            tensor_len(&[d.dec_layers, d.heads, d.tgt_len, d.src_len], "cross_attn")?,
            "cross_attn",
        )?;
        let enc_hidden = cur.f32_vec(
            tensor_len(&[d.enc_layers + 1, d.src_len, d.hidden_dim], "enc_hidden")?,
            "enc_hidden",
        )?;
        let dec_hidden = cur.f32_vec(
            tensor_len(&[d.dec_layers, d.tgt_len, d.hidden_dim], "dec_hidden")?,
            "dec_hidden",
        )?;
        let tgt_token_logprobs = cur.f32_vec(d.tgt_len, "tgt_token_logprobs")?;

        set.push(ModelTrace {
            pair_id: entry.pair_id.clone(),
            dims,
            enc_self_attn,
            dec_self_attn,
            cross_attn,
            enc_hidden,
            dec_hidden,
            tgt_token_logprobs,
        })?;
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(format!(
            "container has {} trailing bytes after the last trace",
            bytes.len() - cur.pos
        )));
    }
    Ok(set)
}

pub fn write_traceset(set: &TraceSet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_traceset(set)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_traceset(path: impl AsRef<Path>) -> Result<TraceSet> {
    let bytes = std::fs::read(path)?;
    decode_traceset(&bytes)
}
