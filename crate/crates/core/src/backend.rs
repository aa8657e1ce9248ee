//! The model-backend contract and candidate merging.
//!
//! A backend takes a prompt-prefixed model input and returns one or more
//! scored candidates, each a complete target-DSL string. Beam decoding
//! yields several candidates; [`merge_candidates`] unions them into a flat
//! set of per-pair predictions so downstream filtering can threshold each
//! `(offset, url)` independently.

pub mod reference;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::target::{parse_target, TargetList, TargetParseError};

/// One decoded model response: a full target string with the backend's
/// confidence in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub target: String,
    pub score: f64,
}

impl Candidate {
    pub fn new(target: impl Into<String>, score: f64) -> Self {
        Candidate {
            target: target.into(),
            score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Beam,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Greedy => f.write_str("greedy"),
            Strategy::Beam => f.write_str("beam"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "beam" => Ok(Strategy::Beam),
            other => Err(format!("unknown strategy `{other}` (expected greedy or beam)")),
        }
    }
}

/// Decoding strategy for a backend call. `beam_width` only matters for beam
/// decoding; greedy always has an effective width of 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub beam_width: u32,
}

/// Beam width used when none is configured, following the deployed setting
/// of four responses per request.
pub const DEFAULT_BEAM_WIDTH: u32 = 4;

impl DecodeConfig {
    pub fn greedy() -> Self {
        DecodeConfig {
            strategy: Strategy::Greedy,
            beam_width: DEFAULT_BEAM_WIDTH,
        }
    }

    pub fn beam(width: u32) -> Self {
        DecodeConfig {
            strategy: Strategy::Beam,
            beam_width: width.max(1),
        }
    }

    pub fn effective_width(&self) -> u32 {
        match self.strategy {
            Strategy::Greedy => 1,
            Strategy::Beam => self.beam_width.max(1),
        }
    }
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig::greedy()
    }
}

/// One predicted violation after merging: a single `(offset, url)` pair with
/// the best score any candidate gave it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationPrediction {
    pub offset: u64,
    pub url: String,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend `{backend}`: transport failure: {message}")]
    Transport { backend: String, message: String },
    #[error("backend `{backend}`: malformed response: {message}")]
    MalformedResponse { backend: String, message: String },
    #[error("model input must not be empty")]
    EmptyInput,
}

/// The backend contract.
///
/// Inputs are always prompt-prefixed (see `corpus::build_model_input`): the
/// first line is the task prompt and everything after the first newline is
/// the source under analysis. Candidate offsets are byte offsets into that
/// source, not into the prompt-prefixed input.
///
/// Implementations must be safe to call concurrently and must return between
/// one and `config.effective_width()` candidates. Candidates whose targets
/// fail to parse are the caller's problem to drop and count — backends
/// forward what the model produced.
pub trait Backend: Send + Sync {
    /// A stable human-readable identity, used in error messages and health
    /// reports (e.g. `reference` or `remote:http://host:port`).
    fn identity(&self) -> String;

    fn analyze_raw(&self, input: &str, config: &DecodeConfig) -> Result<Vec<Candidate>, BackendError>;
}

/// Merges candidates into the union of their `(offset, url)` pairs.
///
/// A pair appearing in several candidates keeps the maximum score. Output is
/// sorted by `(offset, url)`; empty input or all-`EMPTY` candidates yield an
/// empty list. Fails on the first unparseable candidate — callers that must
/// tolerate bad candidates parse and drop them first, then use
/// [`merge_parsed`].
pub fn merge_candidates(cands: &[Candidate]) -> Result<Vec<ViolationPrediction>, TargetParseError> {
    let mut parsed = Vec::with_capacity(cands.len());
    for cand in cands {
        parsed.push((parse_target(&cand.target)?, cand.score));
    }
    Ok(merge_parsed(parsed))
}

/// Max-score union of already-parsed candidates; see [`merge_candidates`].
pub fn merge_parsed(cands: impl IntoIterator<Item = (TargetList, f64)>) -> Vec<ViolationPrediction> {
    let mut best: BTreeMap<(u64, String), f64> = BTreeMap::new();
    for (targets, score) in cands {
        for t in targets {
            let entry = best.entry((t.offset, t.url)).or_insert(score);
            if score > *entry {
                *entry = score;
            }
        }
    }
    best.into_iter()
        .map(|((offset, url), score)| ViolationPrediction { offset, url, score })
        .collect()
}
