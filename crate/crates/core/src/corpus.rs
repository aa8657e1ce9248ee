//! Review-archive ingestion and training-example curation.
//!
//! A code-review archive is a stream of file snapshots and review comments.
//! This module extracts the comments worth learning from — human-authored
//! comments citing a best-practice URL from a configured allowlist — and
//! turns each into a `(model input, target)` training example, with temporal
//! splitting for honest evaluation.
//!
//! The batch operations never abort on one bad record: problems are counted
//! per reason in a [`SkipReport`] and processing continues.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::target::{serialize_target, TargetList, ViolationTarget};

/// A lowercase language tag, e.g. `go` or `python`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Language(String);

impl Language {
    pub fn new(tag: impl AsRef<str>) -> Self {
        Language(tag.as_ref().to_ascii_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The contents of one file at one point in a review.
///
/// `snapshot_id` increases as the review progresses; `created_at` is epoch
/// seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSnapshot {
    pub review_id: String,
    pub snapshot_id: u64,
    pub path: String,
    pub language: Language,
    pub content: String,
    pub created_at: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorKind {
    Human,
    Automated,
}

/// A comment left on a byte range of a specific file snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewComment {
    pub comment_id: String,
    pub review_id: String,
    pub snapshot_id: u64,
    pub path: String,
    pub start_offset: u64,
    pub end_offset: u64,
    pub text: String,
    pub author_kind: AuthorKind,
    pub created_at: i64,
}

/// One record of a review archive, as stored on disk (one JSON object per
/// line, discriminated by `kind`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchiveRecord {
    Snapshot(FileSnapshot),
    Comment(ReviewComment),
}

/// A human comment that cites at least one allowlisted best-practice URL,
/// joined to the snapshot it was left on. `urls` keeps only the allowlisted
/// URLs, in order of appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevantComment {
    pub comment: ReviewComment,
    pub urls: Vec<String>,
    pub snapshot: FileSnapshot,
}

/// A curated `(input, target)` pair ready for model training or evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub input: String,
    pub target: String,
    pub language: Language,
    pub created_at: i64,
    pub review_id: String,
}

/// Examples partitioned by time so evaluation never sees the training era.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<TrainingExample>,
    pub validation: Vec<TrainingExample>,
    pub test: Vec<TrainingExample>,
    pub cut_train_val: i64,
    pub cut_val_test: i64,
}

/// Per-reason counts of records a batch operation could not use.
///
/// Counters are commutative: reports from parallel shards can be merged in
/// any order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipReport {
    pub counts: BTreeMap<String, u64>,
}

impl SkipReport {
    pub fn bump(&mut self, reason: &str) {
        *self.counts.entry(reason.to_string()).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &SkipReport) {
        for (reason, n) in &other.counts {
            *self.counts.entry(reason.clone()).or_insert(0) += n;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

impl fmt::Display for SkipReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.counts.is_empty() {
            return write!(f, "no records skipped");
        }
        let mut first = true;
        for (reason, n) in &self.counts {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{reason}: {n}")?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unsupported language `{0}`: no prompt configured")]
    UnsupportedLanguage(Language),
    #[error("input budget of {budget} bytes cannot fit the {prompt_len}-byte prompt line plus source")]
    BudgetTooSmall { budget: usize, prompt_len: usize },
    #[error("URL allowlist is empty")]
    EmptyAllowlist,
    #[error("split cuts must satisfy cut1 < cut2, got {cut1} and {cut2}")]
    InvalidCuts { cut1: i64, cut2: i64 },
    #[error("malformed prompt table line {line}: expected `language<TAB>prompt`")]
    MalformedPromptLine { line: usize },
}

/// URL prefixes identifying best-practice documents. A URL is relevant when
/// it starts with any configured prefix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UrlAllowlist {
    prefixes: Vec<String>,
}

impl UrlAllowlist {
    pub fn new(prefixes: Vec<String>) -> Self {
        UrlAllowlist { prefixes }
    }

    /// Parses one URL prefix per line; blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Self {
        let prefixes = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        UrlAllowlist { prefixes }
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }

    pub fn matches(&self, url: &str) -> bool {
        self.prefixes.iter().any(|p| url.starts_with(p.as_str()))
    }
}

/// The fixed task-prompt line prepended to model inputs, per language.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTable {
    prompts: BTreeMap<Language, String>,
}

const TASK_SENTENCE: &str = "[*] Task: Check language best practices.";

impl Default for PromptTable {
    /// Prompts for the languages supported out of the box, phrased as a code
    /// comment in each language's style.
    fn default() -> Self {
        let mut prompts = BTreeMap::new();
        for lang in ["go", "java", "cpp", "c", "javascript", "typescript"] {
            prompts.insert(Language::new(lang), format!("// {TASK_SENTENCE}"));
        }
        prompts.insert(Language::new("python"), format!("# {TASK_SENTENCE}"));
        PromptTable { prompts }
    }
}

impl PromptTable {
    pub fn empty() -> Self {
        PromptTable {
            prompts: BTreeMap::new(),
        }
    }

    /// Parses `language<TAB>prompt` lines; blank lines and `#` comments
    /// skipped.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut prompts = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (lang, prompt) = line
                .split_once('\t')
                .ok_or(CorpusError::MalformedPromptLine { line: idx + 1 })?;
            if lang.trim().is_empty() || prompt.trim().is_empty() {
                return Err(CorpusError::MalformedPromptLine { line: idx + 1 });
            }
            prompts.insert(Language::new(lang.trim()), prompt.trim().to_string());
        }
        Ok(PromptTable { prompts })
    }

    pub fn insert(&mut self, language: Language, prompt: String) {
        self.prompts.insert(language, prompt);
    }

    pub fn get(&self, language: &Language) -> Option<&str> {
        self.prompts.get(language).map(String::as_str)
    }

    pub fn supports(&self, language: &Language) -> bool {
        self.prompts.contains_key(language)
    }

    pub fn languages(&self) -> impl Iterator<Item = &Language> {
        self.prompts.keys()
    }
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"[A-Za-z][A-Za-z0-9+.-]*://[^\s<>"'\)\]]+"#).expect("static regex compiles")
    })
}

/// Extracts absolute URLs from free text, in order of appearance, trimming
/// trailing punctuation that typically belongs to the sentence rather than
/// the URL.
pub fn extract_urls(text: &str) -> Vec<String> {
    url_regex()
        .find_iter(text)
        .map(|m| {
            m.as_str()
                .trim_end_matches(['.', ',', ';', ':', '!', '?'])
                .to_string()
        })
        .filter(|u| !u.is_empty())
        .collect()
}

/// Filters an archive down to the human comments citing allowlisted URLs,
/// each joined to its snapshot.
///
/// Comments referencing a missing snapshot or carrying an out-of-range byte
/// anchor are skipped and counted; comments that are merely not relevant
/// (automated author, no allowlisted URL) are silently excluded. Re-running
/// on the same archive yields the same output.
pub fn extract_relevant_comments(
    records: impl IntoIterator<Item = ArchiveRecord>,
    allowlist: &UrlAllowlist,
) -> Result<(Vec<RelevantComment>, SkipReport), CorpusError> {
    if allowlist.is_empty() {
        return Err(CorpusError::EmptyAllowlist);
    }
    let mut snapshots: HashMap<(String, u64, String), FileSnapshot> = HashMap::new();
    let mut comments: Vec<ReviewComment> = Vec::new();
    for record in records {
        match record {
            ArchiveRecord::Snapshot(s) => {
                snapshots.insert((s.review_id.clone(), s.snapshot_id, s.path.clone()), s);
            }
            ArchiveRecord::Comment(c) => comments.push(c),
        }
    }

    let mut out = Vec::new();
    let mut skips = SkipReport::default();
    for comment in comments {
        if comment.author_kind != AuthorKind::Human {
            continue;
        }
        let urls: Vec<String> = extract_urls(&comment.text)
            .into_iter()
            .filter(|u| allowlist.matches(u))
            .collect();
        if urls.is_empty() {
            continue;
        }
        let key = (
            comment.review_id.clone(),
            comment.snapshot_id,
            comment.path.clone(),
        );
        let Some(snapshot) = snapshots.get(&key) else {
            skips.bump("missing_snapshot");
            continue;
        };
        let len = snapshot.content.len() as u64;
        if comment.start_offset > comment.end_offset || comment.end_offset > len {
            skips.bump("offset_out_of_range");
            continue;
        }
        out.push(RelevantComment {
            comment,
            urls,
            snapshot: snapshot.clone(),
        });
    }
    Ok((out, skips))
}

/// Default input budget in bytes: roughly a 2,048-token context window at
/// ~4 bytes per token.
pub const DEFAULT_INPUT_BUDGET: usize = 8192;

/// Builds the model input for a snapshot: the language's task-prompt line, a
/// newline, then the file content, truncated at the end to fit `budget`
/// bytes.
///
/// The prompt is never truncated. Truncation backs off to a UTF-8 character
/// boundary, so for ASCII content the result is exactly `budget` bytes.
pub fn build_model_input(
    snapshot: &FileSnapshot,
    prompts: &PromptTable,
    budget: usize,
) -> Result<String, CorpusError> {
    let prompt = prompts
        .get(&snapshot.language)
        .ok_or_else(|| CorpusError::UnsupportedLanguage(snapshot.language.clone()))?;
    if budget <= prompt.len() + 1 {
        return Err(CorpusError::BudgetTooSmall {
            budget,
            prompt_len: prompt.len(),
        });
    }
    let mut input = String::with_capacity(budget.min(prompt.len() + 1 + snapshot.content.len()));
    input.push_str(prompt);
    input.push('\n');
    input.push_str(&snapshot.content);
    if input.len() > budget {
        let mut cut = budget;
        while !input.is_char_boundary(cut) {
            cut -= 1;
        }
        input.truncate(cut);
    }
    Ok(input)
}

/// Outcome of curating one relevant comment.
#[derive(Debug, Clone, PartialEq)]
pub enum Curated {
    Example(TrainingExample),
    Skip(&'static str),
}

/// Turns a relevant comment into a training example: the snapshot's model
/// input paired with a target of `(comment start offset, url)` clauses, one
/// per cited URL.
///
/// Offsets are relative to the original source (not the prompt-prefixed
/// input). If truncation cut the region a target offset points into, the
/// example is skipped rather than emitted with an unlearnable anchor.
pub fn curate_example(
    rc: &RelevantComment,
    prompts: &PromptTable,
    budget: usize,
) -> Result<Curated, CorpusError> {
    let input = build_model_input(&rc.snapshot, prompts, budget)?;
    let prompt_len = prompts
        .get(&rc.snapshot.language)
        .expect("checked by build_model_input")
        .len();
    let kept_source_bytes = (input.len() - prompt_len - 1) as u64;
    let truncated = (rc.snapshot.content.len() as u64) > kept_source_bytes;

    let offset = rc.comment.start_offset;
    if truncated && offset >= kept_source_bytes {
        return Ok(Curated::Skip("target truncated"));
    }
    let mut pairs = Vec::with_capacity(rc.urls.len());
    for url in &rc.urls {
        match ViolationTarget::new(offset, url.clone()) {
            Ok(t) => pairs.push(t),
            Err(_) => return Ok(Curated::Skip("unrepresentable url")),
        }
    }
    let target = serialize_target(&TargetList::new(pairs)).expect("targets validated above");
    Ok(Curated::Example(TrainingExample {
        input,
        target,
        language: rc.snapshot.language.clone(),
        created_at: rc.comment.created_at,
        review_id: rc.comment.review_id.clone(),
    }))
}

/// Curates a batch, folding per-comment skips into one report.
pub fn curate_examples(
    rcs: &[RelevantComment],
    prompts: &PromptTable,
    budget: usize,
) -> (Vec<TrainingExample>, SkipReport) {
    let mut out = Vec::new();
    let mut skips = SkipReport::default();
    for rc in rcs {
        match curate_example(rc, prompts, budget) {
            Ok(Curated::Example(ex)) => out.push(ex),
            Ok(Curated::Skip(reason)) => skips.bump(reason),
            Err(CorpusError::UnsupportedLanguage(_)) => skips.bump("unsupported_language"),
            Err(_) => skips.bump("curation_error"),
        }
    }
    (out, skips)
}

/// Partitions examples by `created_at`: before `cut1` → train, `[cut1,
/// cut2)` → validation, at or after `cut2` → test.
///
/// Examples always carry a timestamp by construction, so the only failure
/// mode is misordered cuts.
pub fn temporal_split(
    examples: Vec<TrainingExample>,
    cut1: i64,
    cut2: i64,
) -> Result<DatasetSplit, CorpusError> {
    if cut1 >= cut2 {
        return Err(CorpusError::InvalidCuts { cut1, cut2 });
    }
    let mut split = DatasetSplit {
        cut_train_val: cut1,
        cut_val_test: cut2,
        ..DatasetSplit::default()
    };
    for ex in examples {
        if ex.created_at < cut1 {
            split.train.push(ex);
        } else if ex.created_at < cut2 {
            split.validation.push(ex);
        } else {
            split.test.push(ex);
        }
    }
    Ok(split)
}

/// Histogram of relevant-comment multiplicity per file: key = number of
/// relevant comments on one `(review, path)` file, value = how many files
/// have that count.
pub fn file_multiplicity_histogram(rcs: &[RelevantComment]) -> BTreeMap<u64, u64> {
    let mut per_file: BTreeMap<(String, String), u64> = BTreeMap::new();
    for rc in rcs {
        *per_file
            .entry((rc.comment.review_id.clone(), rc.comment.path.clone()))
            .or_insert(0) += 1;
    }
    let mut histogram = BTreeMap::new();
    for count in per_file.values() {
        *histogram.entry(*count).or_insert(0) += 1;
    }
    histogram
}
