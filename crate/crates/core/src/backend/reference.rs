//! A deterministic rule-based backend.
//!
//! Stands in for the learned model everywhere a repeatable answer is needed:
//! tests, replay over synthetic corpora, and local runs without a model
//! service. Three checks, each tied to a best-practice URL and a fixed
//! confidence, so threshold and suppression behavior downstream is exactly
//! predictable:
//!
//! 1. an exported Go function whose doc comment does not start with the
//!    function name (high confidence),
//! 2. a comment block that does not end in terminal punctuation (medium
//!    confidence — deliberately a low-value nit, useful for exercising
//!    suppression),
//! 3. a source line longer than a byte limit (low confidence).
//!
//! Beam decoding is simulated by nesting: the k-th candidate keeps the k
//! highest-confidence findings, scored by the weakest finding it includes,
//! so wider beams reveal progressively less confident findings and candidate
//! scores are non-increasing.

use crate::backend::{Backend, BackendError, Candidate, DecodeConfig};
use crate::target::{serialize_target, TargetList, ViolationTarget, EMPTY_TOKEN};

/// URLs and confidences for the three checks, overridable so tests can model
/// arbitrary strata.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleConfig {
    pub func_doc_url: String,
    pub func_doc_score: f64,
    pub comment_period_url: String,
    pub comment_period_score: f64,
    pub line_length_url: String,
    pub line_length_score: f64,
    pub max_line_bytes: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            func_doc_url: "https://go.dev/doc/comment#func".to_string(),
            func_doc_score: 0.99,
            comment_period_url: "https://google.github.io/styleguide/go/decisions#comment-sentences"
                .to_string(),
            comment_period_score: 0.85,
            line_length_url: "https://google.github.io/styleguide/go/decisions#line-length"
                .to_string(),
            line_length_score: 0.70,
            max_line_bytes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Finding {
    offset: u64,
    url: String,
    score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ReferenceBackend {
    rules: RuleConfig,
}

impl ReferenceBackend {
    pub fn new(rules: RuleConfig) -> Self {
        ReferenceBackend { rules }
    }

    /// Runs all checks over a bare source (no prompt line) and returns
    /// findings ordered by descending confidence, then offset, then URL.
    fn findings(&self, source: &str) -> Vec<Finding> {
        let lines = line_spans(source);
        let mut found = Vec::new();
        self.check_func_docs(source, &lines, &mut found);
        self.check_comment_periods(source, &lines, &mut found);
        self.check_line_lengths(&lines, &mut found);
        found.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("rule scores are finite")
                .then(a.offset.cmp(&b.offset))
                .then(a.url.cmp(&b.url))
        });
        found.dedup_by(|a, b| a.offset == b.offset && a.url == b.url);
        found
    }

    fn check_func_docs(&self, source: &str, lines: &[(usize, usize)], found: &mut Vec<Finding>) {
        for (idx, &(start, end)) in lines.iter().enumerate() {
            let line = &source[start..end];
            let Some(name) = exported_go_func_name(line) else {
                continue;
            };
            // The doc comment is the contiguous block of `//` lines directly
            // above; without one there is nothing to check.
            let mut doc_first: Option<usize> = None;
            for prev in (0..idx).rev() {
                let (s, e) = lines[prev];
                if source[s..e].starts_with("//") {
                    doc_first = Some(prev);
                } else {
                    break;
                }
            }
            let Some(first) = doc_first else { continue };
            let (ds, de) = lines[first];
            let text = source[ds..de].trim_start_matches('/').trim_start();
            if !starts_with_word(text, name) {
                found.push(Finding {
                    offset: start as u64,
                    url: self.rules.func_doc_url.clone(),
                    score: self.rules.func_doc_score,
                });
            }
        }
    }

    fn check_comment_periods(
        &self,
        source: &str,
        lines: &[(usize, usize)],
        found: &mut Vec<Finding>,
    ) {
        let mut idx = 0;
        while idx < lines.len() {
            let (start, end) = lines[idx];
            let Some(first_text) = comment_text(&source[start..end]) else {
                idx += 1;
                continue;
            };
            // Extend the block over consecutive comment lines, joining their
            // text so multi-line sentences are judged as one.
            let mut text = first_text.to_string();
            let mut next = idx + 1;
            while next < lines.len() {
                let (s, e) = lines[next];
                match comment_text(&source[s..e]) {
                    Some(t) => {
                        if !t.is_empty() {
                            if !text.is_empty() {
                                text.push(' ');
                            }
                            text.push_str(t);
                        }
                        next += 1;
                    }
                    None => break,
                }
            }
            if !text.is_empty() && !text.ends_with(['.', '!', '?']) {
                found.push(Finding {
                    offset: start as u64,
                    url: self.rules.comment_period_url.clone(),
                    score: self.rules.comment_period_score,
                });
            }
            idx = next;
        }
    }

    fn check_line_lengths(&self, lines: &[(usize, usize)], found: &mut Vec<Finding>) {
        for &(start, end) in lines {
            if end - start > self.rules.max_line_bytes {
                found.push(Finding {
                    offset: start as u64,
                    url: self.rules.line_length_url.clone(),
                    score: self.rules.line_length_score,
                });
            }
        }
    }
}

impl Backend for ReferenceBackend {
    fn identity(&self) -> String {
        "reference".to_string()
    }

    fn analyze_raw(&self, input: &str, config: &DecodeConfig) -> Result<Vec<Candidate>, BackendError> {
        if input.is_empty() {
            return Err(BackendError::EmptyInput);
        }
        // The first line is the task prompt; analyze only what follows.
        let source = input.split_once('\n').map(|(_, rest)| rest).unwrap_or("");
        let findings = self.findings(source);
        if findings.is_empty() {
            return Ok(vec![Candidate::new(EMPTY_TOKEN, 1.0)]);
        }
        let width = config.effective_width() as usize;
        let mut candidates = Vec::with_capacity(width.min(findings.len()));
        for k in 1..=width.min(findings.len()) {
            let mut kept: Vec<ViolationTarget> = findings[..k]
                .iter()
                .map(|f| ViolationTarget {
                    offset: f.offset,
                    url: f.url.clone(),
                })
                .collect();
            kept.sort();
            let target = serialize_target(&TargetList::new(kept))
                .expect("rule URLs are valid absolute URLs");
            candidates.push(Candidate::new(target, findings[k - 1].score));
        }
        Ok(candidates)
    }
}

/// `(start, end)` byte spans of each line, excluding the newline.
fn line_spans(source: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, b) in source.bytes().enumerate() {
        if b == b'\n' {
            spans.push((start, i));
            start = i + 1;
        }
    }
    if start < source.len() {
        spans.push((start, source.len()));
    }
    spans
}

/// The name of an exported function declared at the top level of `line`, if
/// any. Handles plain functions and methods with a receiver.
fn exported_go_func_name(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("func ")?;
    let rest = if let Some(after) = rest.strip_prefix('(') {
        // Skip the method receiver `(r *Recv) `.
        let close = after.find(')')?;
        after[close + 1..].trim_start()
    } else {
        rest
    };
    let end = rest
        .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .unwrap_or(rest.len());
    let name = &rest[..end];
    if name.chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
        Some(name)
    } else {
        None
    }
}

/// Whether `text` begins with `word` followed by a word boundary.
fn starts_with_word(text: &str, word: &str) -> bool {
    text.strip_prefix(word)
        .is_some_and(|rest| !rest.chars().next().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_'))
}

/// The prose of a comment line, or `None` if the line is not a comment.
///
/// A comment line is `//` or `#` (possibly indented) followed by a space or
/// end of line; this deliberately excludes directives (`//go:build`) and
/// shebangs (`#!/bin/sh`).
fn comment_text(line: &str) -> Option<&str> {
    let trimmed = line.trim_start();
    for marker in ["//", "#"] {
        if let Some(rest) = trimmed.strip_prefix(marker) {
            if rest.is_empty() {
                return Some("");
            }
            if let Some(text) = rest.strip_prefix(' ') {
                return Some(text.trim_end());
            }
            return None;
        }
    }
    None
}
