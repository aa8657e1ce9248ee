//! From raw predictions to postable comments.
//!
//! The pipeline applies a fixed sequence of filters to merged backend
//! predictions — confidence thresholds, changed-line filtering when a diff
//! is available, then suppression rules — and renders what survives into
//! [`PostedComment`]s with a best-practice summary attached. Every stage is
//! a contraction (it only removes predictions), every removal is counted in
//! [`StageStats`], and suppression keeps the removed predictions around with
//! the rule's reason so operators can audit why a comment was withheld.

pub mod diff;

use std::collections::BTreeMap;

use globset::{Glob, GlobMatcher};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{merge_parsed, Backend, DecodeConfig, ViolationPrediction};
use crate::corpus::{build_model_input, CorpusError, FileSnapshot, PromptTable, DEFAULT_INPUT_BUDGET};
use crate::jsonl::{self, JsonlError};
use crate::pipeline::diff::ChangedLineSet;
use crate::target::{anchor_offset, parse_target, LineCol};

/// Confidence thresholds: a prediction posts only when its score is strictly
/// greater than the threshold for its URL (the per-URL entry when present,
/// otherwise the default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub default_t: f64,
    pub per_url: BTreeMap<String, f64>,
}

/// The deployed default: post only predictions scoring above 0.98.
pub const DEFAULT_THRESHOLD: f64 = 0.98;

impl Default for ThresholdTable {
    fn default() -> Self {
        ThresholdTable {
            default_t: DEFAULT_THRESHOLD,
            per_url: BTreeMap::new(),
        }
    }
}

impl ThresholdTable {
    pub fn threshold_for(&self, url: &str) -> f64 {
        self.per_url.get(url).copied().unwrap_or(self.default_t)
    }

    /// Parses the text config: one `default <t>` or `<url> <t>` per line,
    /// `#` comments and blank lines skipped. Duplicate keys are configuration
    /// mistakes and rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut default_t: Option<f64> = None;
        let mut per_url = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .rsplit_once(char::is_whitespace)
                .ok_or(ConfigError::MalformedThresholdLine { line: idx + 1 })?;
            let key = key.trim();
            let t: f64 = value
                .parse()
                .map_err(|_| ConfigError::MalformedThresholdLine { line: idx + 1 })?;
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError::ThresholdOutOfRange {
                    line: idx + 1,
                    value: t,
                });
            }
            if key == "default" {
                if default_t.replace(t).is_some() {
                    return Err(ConfigError::DuplicateThresholdKey {
                        line: idx + 1,
                        key: key.to_string(),
                    });
                }
            } else if per_url.insert(key.to_string(), t).is_some() {
                return Err(ConfigError::DuplicateThresholdKey {
                    line: idx + 1,
                    key: key.to_string(),
                });
            }
        }
        Ok(ThresholdTable {
            default_t: default_t.unwrap_or(DEFAULT_THRESHOLD),
            per_url,
        })
    }

    /// Renders the table back to the text config format.
    pub fn to_text(&self) -> String {
        let mut out = format!("default {}\n", self.default_t);
        for (url, t) in &self.per_url {
            out.push_str(&format!("{url} {t}\n"));
        }
        out
    }
}

/// Keeps exactly the predictions scoring strictly above their URL's
/// threshold, preserving order.
pub fn apply_thresholds(
    preds: &[ViolationPrediction],
    table: &ThresholdTable,
) -> Vec<ViolationPrediction> {
    preds
        .iter()
        .filter(|p| p.score > table.threshold_for(&p.url))
        .cloned()
        .collect()
}

/// Keeps predictions anchored on a changed line of `path`. Files absent from
/// the changed-line set lose all predictions. Predictions whose offsets do
/// not anchor inside the source are dropped as well.
pub fn filter_changed_lines(
    preds: &[ViolationPrediction],
    source: &str,
    changed: &ChangedLineSet,
    path: &str,
) -> Vec<ViolationPrediction> {
    preds
        .iter()
        .filter(|p| {
            anchor_offset(source.as_bytes(), p.offset)
                .map(|lc| changed.contains(path, lc.line))
                .unwrap_or(false)
        })
        .cloned()
        .collect()
}

/// One suppression rule as written in the rules file (one JSON object per
/// line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionRuleSpec {
    /// URL prefix (or full URL) this rule applies to.
    pub url_pattern: String,
    /// Regular expression tested against the line containing the prediction
    /// offset, or against the whole file when `whole_file` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_glob: Option<String>,
    #[serde(default)]
    pub whole_file: bool,
    pub reason: String,
    #[serde(default = "default_active")]
    pub active: bool,
}

fn default_active() -> bool {
    true
}

/// A compiled suppression rule, ready for matching.
#[derive(Debug, Clone)]
pub struct SuppressionRule {
    spec: SuppressionRuleSpec,
    source_pattern: Option<Regex>,
    path_glob: Option<GlobMatcher>,
}

impl SuppressionRuleSpec {
    pub fn compile(self) -> Result<SuppressionRule, ConfigError> {
        if self.url_pattern.is_empty() {
            return Err(ConfigError::EmptyUrlPattern);
        }
        let source_pattern = self
            .source_pattern
            .as_deref()
            .map(Regex::new)
            .transpose()
            .map_err(|source| ConfigError::BadSourcePattern {
                url_pattern: self.url_pattern.clone(),
                source,
            })?;
        let path_glob = self
            .path_glob
            .as_deref()
            .map(|g| Glob::new(g).map(|g| g.compile_matcher()))
            .transpose()
            .map_err(|source| ConfigError::BadPathGlob {
                url_pattern: self.url_pattern.clone(),
                source,
            })?;
        Ok(SuppressionRule {
            spec: self,
            source_pattern,
            path_glob,
        })
    }
}

impl SuppressionRule {
    pub fn spec(&self) -> &SuppressionRuleSpec {
        &self.spec
    }

    /// Whether this rule suppresses `pred` in `source` at `path`. Inactive
    /// rules match nothing.
    pub fn matches(&self, pred: &ViolationPrediction, source: &str, path: &str) -> bool {
        if !self.spec.active || !pred.url.starts_with(&self.spec.url_pattern) {
            return false;
        }
        if let Some(glob) = &self.path_glob {
            if !glob.is_match(path) {
                return false;
            }
        }
        if let Some(re) = &self.source_pattern {
            let scope = if self.spec.whole_file {
                source
            } else {
                line_containing(source, pred.offset)
            };
            if !re.is_match(scope) {
                return false;
            }
        }
        true
    }
}

/// Parses and compiles a newline-delimited JSON rules file.
pub fn parse_rules(reader: impl std::io::BufRead) -> Result<Vec<SuppressionRule>, ConfigError> {
    let specs: Vec<SuppressionRuleSpec> = jsonl::read_all(reader)?;
    specs.into_iter().map(SuppressionRuleSpec::compile).collect()
}

/// A prediction withheld by a suppression rule, with the rule's reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suppressed {
    pub prediction: ViolationPrediction,
    pub reason: String,
}

/// Splits predictions into kept and suppressed. A prediction is suppressed
/// by the first active rule whose URL pattern, optional path glob, and
/// optional source regex all match; kept + suppressed is exactly the input.
pub fn apply_suppressions(
    preds: &[ViolationPrediction],
    source: &str,
    path: &str,
    rules: &[SuppressionRule],
) -> (Vec<ViolationPrediction>, Vec<Suppressed>) {
    let mut kept = Vec::new();
    let mut suppressed = Vec::new();
    for pred in preds {
        match rules.iter().find(|r| r.matches(pred, source, path)) {
            Some(rule) => suppressed.push(Suppressed {
                prediction: pred.clone(),
                reason: rule.spec.reason.clone(),
            }),
            None => kept.push(pred.clone()),
        }
    }
    (kept, suppressed)
}

/// The full line of `source` containing byte `offset` (newline excluded).
/// An offset at or past the final byte yields the last (possibly empty)
/// line.
fn line_containing(source: &str, offset: u64) -> &str {
    let offset = (offset as usize).min(source.len());
    let start = source[..offset].rfind('\n').map(|p| p + 1).unwrap_or(0);
    let end = source[offset..]
        .find('\n')
        .map(|p| offset + p)
        .unwrap_or(source.len());
    &source[start..end]
}

/// Concise human-readable descriptions of each best practice, keyed by URL.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    summaries: BTreeMap<String, String>,
}

/// Summary used when a URL has no table entry; the gap is counted so
/// operators notice.
pub const PLACEHOLDER_SUMMARY: &str = "See linked guidance.";

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    url: String,
    summary: String,
}

impl SummaryTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        SummaryTable {
            summaries: pairs.into_iter().collect(),
        }
    }

    /// Parses a newline-delimited JSON file of `{url, summary}` rows. Empty
    /// summaries are configuration mistakes and rejected.
    pub fn parse(reader: impl std::io::BufRead) -> Result<Self, ConfigError> {
        let rows: Vec<SummaryRow> = jsonl::read_all(reader)?;
        let mut summaries = BTreeMap::new();
        for row in rows {
            if row.summary.trim().is_empty() {
                return Err(ConfigError::EmptySummary { url: row.url });
            }
            summaries.insert(row.url, row.summary);
        }
        Ok(SummaryTable { summaries })
    }

    pub fn get(&self, url: &str) -> Option<&str> {
        self.summaries.get(url).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }
}

/// A comment ready to post: anchored to the full line containing the
/// prediction offset, with the best-practice URL and its summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostedComment {
    pub path: String,
    pub start: LineCol,
    pub end: LineCol,
    pub url: String,
    pub summary: String,
    pub score: f64,
    pub offset: u64,
}

/// Renders predictions into comments, sorted by line. Returns the comments
/// plus the number that fell back to the placeholder summary.
///
/// Callers must have range-checked offsets against `source` (the pipeline
/// does); an out-of-range offset here is a logic error upstream.
pub fn render_comments(
    preds: &[ViolationPrediction],
    source: &str,
    path: &str,
    summaries: &SummaryTable,
) -> (Vec<PostedComment>, u64) {
    let mut missing = 0u64;
    let mut comments: Vec<PostedComment> = preds
        .iter()
        .map(|p| {
            let anchor = anchor_offset(source.as_bytes(), p.offset)
                .expect("pipeline range-checks offsets before rendering");
            let line_len = line_containing(source, p.offset).len() as u64;
            let summary = match summaries.get(&p.url) {
                Some(s) => s.to_string(),
                None => {
                    missing += 1;
                    PLACEHOLDER_SUMMARY.to_string()
                }
            };
            PostedComment {
                path: path.to_string(),
                start: LineCol {
                    line: anchor.line,
                    col: 1,
                },
                end: LineCol {
                    line: anchor.line,
                    col: line_len.max(1),
                },
                url: p.url.clone(),
                summary,
                score: p.score,
                offset: p.offset,
            }
        })
        .collect();
    comments.sort_by(|a, b| {
        a.start
            .line
            .cmp(&b.start.line)
            .then(a.offset.cmp(&b.offset))
            .then(a.url.cmp(&b.url))
    });
    (comments, missing)
}

/// Per-stage counts for one analysis, so "why didn't this post?" is always
/// answerable. Counters add across files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub candidates: u64,
    pub dropped_candidates: u64,
    pub merged_predictions: u64,
    pub out_of_range: u64,
    pub below_threshold: u64,
    pub off_changed_lines: u64,
    pub suppressed: u64,
    pub missing_summary: u64,
    pub posted: u64,
}

impl StageStats {
    pub fn absorb(&mut self, other: &StageStats) {
        self.candidates += other.candidates;
        self.dropped_candidates += other.dropped_candidates;
        self.merged_predictions += other.merged_predictions;
        self.out_of_range += other.out_of_range;
        self.below_threshold += other.below_threshold;
        self.off_changed_lines += other.off_changed_lines;
        self.suppressed += other.suppressed;
        self.missing_summary += other.missing_summary;
        self.posted += other.posted;
    }
}

/// Everything analyze_snapshot needs besides the snapshot itself.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub prompts: PromptTable,
    pub budget: usize,
    pub decode: DecodeConfig,
    pub thresholds: ThresholdTable,
    pub rules: Vec<SuppressionRule>,
    pub summaries: SummaryTable,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            prompts: PromptTable::default(),
            budget: DEFAULT_INPUT_BUDGET,
            decode: DecodeConfig::greedy(),
            thresholds: ThresholdTable::default(),
            rules: Vec::new(),
            summaries: SummaryTable::default(),
        }
    }
}

/// The result of analyzing one snapshot: what would post, what suppression
/// withheld, and the per-stage accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub comments: Vec<PostedComment>,
    pub suppressed: Vec<Suppressed>,
    pub stats: StageStats,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Backend(#[from] crate::backend::BackendError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("thresholds line {line}: expected `default <t>` or `<url> <t>`")]
    MalformedThresholdLine { line: usize },
    #[error("thresholds line {line}: {value} is outside [0, 1]")]
    ThresholdOutOfRange { line: usize, value: f64 },
    #[error("thresholds line {line}: duplicate entry for `{key}`")]
    DuplicateThresholdKey { line: usize, key: String },
    #[error("suppression rule for `{url_pattern}`: bad source_pattern: {source}")]
    BadSourcePattern {
        url_pattern: String,
        #[source]
        source: regex::Error,
    },
    #[error("suppression rule for `{url_pattern}`: bad path_glob: {source}")]
    BadPathGlob {
        url_pattern: String,
        #[source]
        source: globset::Error,
    },
    #[error("suppression rule has an empty url_pattern")]
    EmptyUrlPattern,
    #[error("summary for `{url}` is empty")]
    EmptySummary { url: String },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

/// Runs the full pipeline on one file snapshot.
///
/// Stages, in order: build the prompt-prefixed model input, query the
/// backend, drop unparseable or out-of-[0,1]-score candidates, merge the
/// rest into per-pair predictions, drop offsets outside the source, apply
/// thresholds, restrict to changed lines when a diff was provided, apply
/// suppression rules, render. Deterministic for a deterministic backend.
///
/// Backend transport failures and config gaps (unsupported language, budget
/// too small) are errors; everything downstream of the backend is total.
pub fn analyze_snapshot(
    backend: &dyn Backend,
    snapshot: &FileSnapshot,
    changed: Option<&ChangedLineSet>,
    cfg: &PipelineConfig,
) -> Result<AnalysisOutcome, PipelineError> {
    let mut stats = StageStats::default();
    let input = build_model_input(snapshot, &cfg.prompts, cfg.budget)?;
    let candidates = backend.analyze_raw(&input, &cfg.decode)?;
    stats.candidates = candidates.len() as u64;

    let mut parsed = Vec::with_capacity(candidates.len());
    for cand in &candidates {
        let score_ok = cand.score.is_finite() && (0.0..=1.0).contains(&cand.score);
        match (parse_target(&cand.target), score_ok) {
            (Ok(targets), true) => parsed.push((targets, cand.score)),
            _ => stats.dropped_candidates += 1,
        }
    }

    let merged = merge_parsed(parsed);
    stats.merged_predictions = merged.len() as u64;

    let source_len = snapshot.content.len() as u64;
    let in_range: Vec<ViolationPrediction> = merged
        .into_iter()
        .filter(|p| p.offset <= source_len)
        .collect();
    stats.out_of_range = stats.merged_predictions - in_range.len() as u64;

    let above = apply_thresholds(&in_range, &cfg.thresholds);
    stats.below_threshold = in_range.len() as u64 - above.len() as u64;

    let on_changed = match changed {
        Some(set) => {
            let kept = filter_changed_lines(&above, &snapshot.content, set, &snapshot.path);
            stats.off_changed_lines = above.len() as u64 - kept.len() as u64;
            kept
        }
        None => above,
    };

    let (kept, suppressed) =
        apply_suppressions(&on_changed, &snapshot.content, &snapshot.path, &cfg.rules);
    stats.suppressed = suppressed.len() as u64;

    let (comments, missing) =
        render_comments(&kept, &snapshot.content, &snapshot.path, &cfg.summaries);
    stats.missing_summary = missing;
    stats.posted = comments.len() as u64;

    Ok(AnalysisOutcome {
        comments,
        suppressed,
        stats,
    })
}
