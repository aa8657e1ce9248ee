//! Replay over historical reviews and the metrics built on it.
//!
//! Replay re-runs the analysis pipeline over an archived corpus of review
//! snapshots and diffs, logging every comment that would have posted —
//! without touching any review system — and aggregating posting frequency,
//! per-URL volume, and filter-stage counts. On top of the same machinery sit
//! URL-distribution rankings, coverage of historical human comments,
//! diff-based comment-resolution estimation, and the useful ratio computed
//! from reviewer feedback.

pub mod linemap;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::Backend;
use crate::corpus::{FileSnapshot, RelevantComment, SkipReport};
use crate::jsonl;
use crate::pipeline::diff::changed_lines_from_diff;
use crate::pipeline::{analyze_snapshot, PipelineConfig, PipelineError, PostedComment, StageStats};

/// One record of a replay corpus: a file snapshot, or the unified diff of a
/// review (one per review, describing what the change touched).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplayRecord {
    Snapshot(FileSnapshot),
    Diff { review_id: String, diff: String },
}

/// One would-have-posted comment, as persisted to the results log. Keyed by
/// `(review_id, path, snapshot_id, offset, url)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub review_id: String,
    pub path: String,
    pub snapshot_id: u64,
    pub offset: u64,
    pub url: String,
    pub score: f64,
    pub line: u64,
}

/// Aggregate counts from one replay run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub reviews_total: u64,
    pub reviews_with_comments: u64,
    pub files_total: u64,
    /// Files with at least one changed line (all files when a review has no
    /// diff). Only these are analyzed.
    pub files_changed: u64,
    pub files_with_comments: u64,
    pub files_errored: u64,
    pub comments_total: u64,
    pub url_histogram: BTreeMap<String, u64>,
    pub stats: StageStats,
    pub skips: SkipReport,
}

impl ReplayReport {
    /// Fraction of changed files that received at least one comment.
    pub fn file_posting_frequency(&self) -> Option<f64> {
        (self.files_changed > 0)
            .then(|| self.files_with_comments as f64 / self.files_changed as f64)
    }

    /// Fraction of reviews that received at least one comment.
    pub fn review_posting_frequency(&self) -> Option<f64> {
        (self.reviews_total > 0)
            .then(|| self.reviews_with_comments as f64 / self.reviews_total as f64)
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("failed writing results log: {0}")]
    Log(#[from] jsonl::JsonlError),
}

/// Replays a corpus through the pipeline.
///
/// Snapshots are grouped by review; a review's diff (when present) restricts
/// analysis to changed files and changed lines. Per-file failures — backend
/// errors, unsupported languages, malformed diffs — are counted and skipped,
/// never fatal. Every comment that would have posted is appended to
/// `results_log` when one is given; only log I/O failures abort the replay.
pub fn replay_reviews(
    records: Vec<ReplayRecord>,
    backend: &dyn Backend,
    cfg: &PipelineConfig,
    mut results_log: Option<&mut dyn Write>,
) -> Result<ReplayReport, ReplayError> {
    struct Bucket {
        snapshots: Vec<FileSnapshot>,
        diff: Option<String>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut buckets: HashMap<String, Bucket> = HashMap::new();
    let mut report = ReplayReport::default();

    for record in records {
        let review_id = match &record {
            ReplayRecord::Snapshot(s) => s.review_id.clone(),
            ReplayRecord::Diff { review_id, .. } => review_id.clone(),
        };
        let bucket = buckets.entry(review_id.clone()).or_insert_with(|| {
            order.push(review_id);
            Bucket {
                snapshots: Vec::new(),
                diff: None,
            }
        });
        match record {
            ReplayRecord::Snapshot(s) => bucket.snapshots.push(s),
            ReplayRecord::Diff { diff, .. } => {
                if bucket.diff.replace(diff).is_some() {
                    report.skips.bump("duplicate_diff");
                }
            }
        }
    }

    for review_id in order {
        let bucket = buckets.remove(&review_id).expect("bucketed above");
        report.reviews_total += 1;
        let changed = match &bucket.diff {
            Some(text) => match changed_lines_from_diff(text) {
                Ok(set) => Some(set),
                Err(_) => {
                    // Without a trustworthy diff the review cannot be scoped;
                    // skip its files rather than over-posting.
                    report.skips.bump("malformed_diff");
                    report.files_total += bucket.snapshots.len() as u64;
                    report.files_errored += bucket.snapshots.len() as u64;
                    continue;
                }
            },
            None => None,
        };

        let mut review_commented = false;
        for snapshot in &bucket.snapshots {
            report.files_total += 1;
            let file_changed = match &changed {
                Some(set) => set
                    .lines_for(&snapshot.path)
                    .map(|lines| !lines.is_empty())
                    .unwrap_or(false),
                None => true,
            };
            if !file_changed {
                continue;
            }
            report.files_changed += 1;

            let outcome = match analyze_snapshot(backend, snapshot, changed.as_ref(), cfg) {
                Ok(o) => o,
                Err(err) => {
                    report.files_errored += 1;
                    report.skips.bump(match err {
                        PipelineError::Corpus(_) => "unsupported_file",
                        PipelineError::Backend(_) => "backend_error",
                    });
                    continue;
                }
            };
            report.stats.absorb(&outcome.stats);
            if outcome.comments.is_empty() {
                continue;
            }
            report.files_with_comments += 1;
            review_commented = true;
            for comment in &outcome.comments {
                report.comments_total += 1;
                *report.url_histogram.entry(comment.url.clone()).or_insert(0) += 1;
                if let Some(mut log) = results_log.as_deref_mut() {
                    jsonl::write_one(
                        &mut log,
                        &ResultRecord {
                            review_id: snapshot.review_id.clone(),
                            path: snapshot.path.clone(),
                            snapshot_id: snapshot.snapshot_id,
                            offset: comment.offset,
                            url: comment.url.clone(),
                            score: comment.score,
                            line: comment.start.line,
                        },
                    )?;
                }
            }
        }
        if review_commented {
            report.reviews_with_comments += 1;
        }
    }
    Ok(report)
}

/// One row of the URL volume ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlShare {
    pub rank: u64,
    pub url: String,
    pub count: u64,
    pub share: f64,
    pub cumulative_share: f64,
}

/// Ranks URLs by comment count (descending, ties lexicographic) with each
/// URL's share of the total and the running cumulative share, which ends at
/// 1.0. Zero-count entries are dropped; an all-zero histogram ranks nothing.
pub fn url_distribution(histogram: &BTreeMap<String, u64>) -> Vec<UrlShare> {
    let total: u64 = histogram.values().sum();
    if total == 0 {
        return Vec::new();
    }
    let mut entries: Vec<(&String, &u64)> = histogram.iter().filter(|(_, &c)| c > 0).collect();
    entries.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    let mut cumulative = 0u64;
    entries
        .into_iter()
        .enumerate()
        .map(|(idx, (url, &count))| {
            cumulative += count;
            UrlShare {
                rank: idx as u64 + 1,
                url: url.clone(),
                count,
                share: count as f64 / total as f64,
                cumulative_share: cumulative as f64 / total as f64,
            }
        })
        .collect()
}

/// Fraction of human comments citing at least one URL the automated system
/// also posts. `None` when there are no human comments to cover.
pub fn human_coverage(
    auto_urls: &BTreeSet<String>,
    human_comments: &[RelevantComment],
) -> Option<f64> {
    coverage_over_url_sets(auto_urls, human_comments.iter().map(|rc| rc.urls.as_slice()))
}

/// [`human_coverage`] over bare URL lists, for callers that only have the
/// cited URLs (e.g. reading a curated log rather than full comments).
pub fn coverage_over_url_sets<'a>(
    auto_urls: &BTreeSet<String>,
    url_sets: impl IntoIterator<Item = &'a [String]>,
) -> Option<f64> {
    let mut total = 0u64;
    let mut covered = 0u64;
    for urls in url_sets {
        total += 1;
        if urls.iter().any(|u| auto_urls.contains(u)) {
            covered += 1;
        }
    }
    (total > 0).then(|| covered as f64 / total as f64)
}

/// A comment's journey from posting to merge: the snapshot it was posted on,
/// the snapshot that merged, and the comments posted on the former.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPair {
    pub initial: FileSnapshot,
    pub merged: FileSnapshot,
    pub comments_on_initial: Vec<PostedComment>,
}

/// Knobs for resolution estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionConfig {
    /// Fraction of absences attributable to genuine fixes, applied to the
    /// absent fraction. 1.0 unless a manual sample says otherwise.
    pub confirmation_factor: f64,
    /// When true, a comment counts as still present if its URL is predicted
    /// anywhere in the merged file, not just at the mapped line. The default
    /// is the stricter same-line rule.
    pub match_anywhere: bool,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            confirmation_factor: 1.0,
            match_anywhere: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlResolution {
    pub examined: u64,
    pub absent: u64,
}

/// How many posted comments no longer reproduce on the merged snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub pairs_total: u64,
    pub pairs_skipped: SkipReport,
    pub comments_examined: u64,
    pub comment_absent_on_merged: u64,
    pub absent_fraction: Option<f64>,
    pub confirmation_factor: f64,
    pub resolution_rate_estimate: Option<f64>,
    pub per_url: BTreeMap<String, UrlResolution>,
    /// How old lines were located in the merged file.
    pub mapping_method: String,
}

/// Estimates how often posted comments were resolved by merge time.
///
/// For each pair, the merged snapshot is re-analyzed (unscoped — no diff)
/// and each original comment is looked up at its mapped line: if the line is
/// gone or no same-URL prediction sits there (or anywhere in the file, under
/// `match_anywhere`), the comment is absent. The resolution estimate is the
/// absent fraction times the confirmation factor. Pairs that are internally
/// inconsistent or fail re-analysis are skipped and counted.
pub fn estimate_resolution(
    pairs: &[SnapshotPair],
    backend: &dyn Backend,
    cfg: &PipelineConfig,
    rcfg: &ResolutionConfig,
) -> ResolutionReport {
    let mut report = ResolutionReport {
        confirmation_factor: rcfg.confirmation_factor,
        mapping_method: linemap::MAPPING_METHOD.to_string(),
        ..ResolutionReport::default()
    };
    for pair in pairs {
        report.pairs_total += 1;
        let consistent = pair.initial.review_id == pair.merged.review_id
            && pair.initial.path == pair.merged.path
            && pair.initial.snapshot_id < pair.merged.snapshot_id;
        if !consistent {
            report.pairs_skipped.bump("inconsistent_pair");
            continue;
        }
        let merged_outcome = match analyze_snapshot(backend, &pair.merged, None, cfg) {
            Ok(o) => o,
            Err(_) => {
                report.pairs_skipped.bump("reanalysis_error");
                continue;
            }
        };
        let alignment = linemap::line_alignment(&pair.initial.content, &pair.merged.content);
        for comment in &pair.comments_on_initial {
            report.comments_examined += 1;
            let mapped = (comment.start.line >= 1)
                .then(|| alignment.get(comment.start.line as usize - 1).copied().flatten())
                .flatten();
            let present = if rcfg.match_anywhere {
                merged_outcome.comments.iter().any(|c| c.url == comment.url)
            } else {
                mapped.is_some_and(|new_line| {
                    merged_outcome
                        .comments
                        .iter()
                        .any(|c| c.url == comment.url && c.start.line == new_line)
                })
            };
            let slot = report.per_url.entry(comment.url.clone()).or_default();
            slot.examined += 1;
            if !present {
                report.comment_absent_on_merged += 1;
                slot.absent += 1;
            }
        }
    }
    if report.comments_examined > 0 {
        let absent = report.comment_absent_on_merged as f64 / report.comments_examined as f64;
        report.absent_fraction = Some(absent);
        report.resolution_rate_estimate = Some((absent * rcfg.confirmation_factor).min(1.0));
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    ThumbsUp,
    ThumbsDown,
    PleaseFix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSurface {
    Review,
    Ide,
}

/// One reviewer reaction to a posted comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub comment_id: String,
    pub kind: FeedbackKind,
    pub surface: FeedbackSurface,
    pub created_at: i64,
}

/// The useful ratio: positive comments over all comments with feedback.
///
/// A comment is positive when it got at least one thumbs-up or please-fix
/// and no thumbs-down; any thumbs-down makes it negative (mixed feedback is
/// counted conservatively). `None` when no comment has feedback.
pub fn useful_ratio(events: &[FeedbackEvent]) -> Option<f64> {
    let mut per_comment: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for event in events {
        let entry = per_comment.entry(&event.comment_id).or_insert((false, false));
        match event.kind {
            FeedbackKind::ThumbsUp | FeedbackKind::PleaseFix => entry.0 = true,
            FeedbackKind::ThumbsDown => entry.1 = true,
        }
    }
    let total = per_comment.len() as u64;
    if total == 0 {
        return None;
    }
    let positive = per_comment.values().filter(|(up, down)| *up && !down).count() as u64;
    Some(positive as f64 / total as f64)
}

/// Appends one event to the feedback log and flushes it; the write must
/// complete before the event is acknowledged.
pub fn record_feedback(event: &FeedbackEvent, log: &mut impl Write) -> std::io::Result<()> {
    let line = serde_json::to_string(event).map_err(std::io::Error::other)?;
    log.write_all(line.as_bytes())?;
    log.write_all(b"\n")?;
    log.flush()
}
