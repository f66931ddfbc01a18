//! Analysis toolkit for negation in machine translation.
//!
//! The crate covers the full loop we use when studying how NMT systems
//! handle negation: annotated-corpus ingestion and statistics, contrastive
//! translation-pair generation and scoring, binary model traces, attention
//! flow from decoder positions back to source cues, diagnostic probes over
//! hidden states, representation similarity between negation components,
//! and fast lexicon scans over raw parallel data.
//!
//! Everything downstream of a seed is deterministic: reports carry input
//! digests instead of timestamps and rerunning a command reproduces its
//! output byte for byte.

pub mod attnflow;
pub mod chart;
pub mod contrastive;
pub mod cuescan;
pub mod error;
pub mod negdata;
pub mod probe;
pub mod report;
pub mod reprsim;
pub mod tracestore;

pub use error::{Error, Result};

/// Reported in provenance blocks; bump together with Cargo.toml.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
