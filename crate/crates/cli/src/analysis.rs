//! Multi-file analysis shared by the `analyze` command and the HTTP
//! service: validate the request, parse the diff once, run the pipeline per
//! file, and pool results. One file's failure never hides another file's
//! comments; failures are reported per file with enough classification to
//! pick a sensible exit or status code.

use std::collections::BTreeSet;

use precept_core::backend::{Backend, BackendError};
use precept_core::corpus::{FileSnapshot, Language};
use precept_core::pipeline::diff::changed_lines_from_diff;
use precept_core::pipeline::{analyze_snapshot, PipelineConfig, PipelineError, Suppressed};
use precept_core::{PostedComment, StageStats};
use serde::{Deserialize, Serialize};

/// One file to analyze, as supplied by a request or the command line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileInput {
    pub path: String,
    pub language: Language,
    pub content: String,
}

/// Whether a per-file failure was the caller's fault (bad language, bad
/// input) or the backend's (transport, malformed model output).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    Client,
    Backend,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileFailure {
    pub path: String,
    pub error: String,
    pub class: FailureClass,
}

/// Pooled outcome over all files in one request.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MultiFileOutcome {
    /// Sorted by (path, line, offset, url).
    pub comments: Vec<PostedComment>,
    pub suppressed: Vec<Suppressed>,
    pub failures: Vec<FileFailure>,
    pub stats: StageStats,
}

impl MultiFileOutcome {
    /// True when nothing succeeded: files were given and every one failed.
    pub fn all_failed(&self, file_count: usize) -> bool {
        file_count > 0 && self.failures.len() == file_count
    }

    pub fn any_backend_failure(&self) -> bool {
        self.failures
            .iter()
            .any(|f| f.class == FailureClass::Backend)
    }
}

/// A request-level problem that invalidates the whole request, as opposed to
/// a per-file failure.
#[derive(Debug)]
pub enum RequestError {
    DuplicatePath(String),
    BadDiff(String),
}

impl std::fmt::Display for RequestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RequestError::DuplicatePath(path) => write!(f, "duplicate path in request: {path}"),
            RequestError::BadDiff(message) => write!(f, "malformed diff: {message}"),
        }
    }
}

impl std::error::Error for RequestError {}

/// Analyzes every file, restricted to the diff's changed lines when a diff
/// is supplied. An empty file list is a valid request with an empty outcome.
pub fn analyze_files(
    backend: &dyn Backend,
    files: &[FileInput],
    diff: Option<&str>,
    cfg: &PipelineConfig,
) -> Result<MultiFileOutcome, RequestError> {
    let mut seen = BTreeSet::new();
    for file in files {
        if !seen.insert(file.path.as_str()) {
            return Err(RequestError::DuplicatePath(file.path.clone()));
        }
    }
    let changed = diff
        .map(changed_lines_from_diff)
        .transpose()
        .map_err(|err| RequestError::BadDiff(err.to_string()))?;

    let mut outcome = MultiFileOutcome::default();
    for file in files {
        let snapshot = FileSnapshot {
            review_id: "request".to_string(),
            snapshot_id: 0,
            path: file.path.clone(),
            language: file.language.clone(),
            content: file.content.clone(),
            created_at: 0,
        };
        match analyze_snapshot(backend, &snapshot, changed.as_ref(), cfg) {
            Ok(one) => {
                outcome.comments.extend(one.comments);
                outcome.suppressed.extend(one.suppressed);
                outcome.stats.absorb(&one.stats);
            }
            Err(err) => {
                let class = match &err {
                    PipelineError::Corpus(_) => FailureClass::Client,
                    PipelineError::Backend(BackendError::EmptyInput) => FailureClass::Client,
                    PipelineError::Backend(_) => FailureClass::Backend,
                };
                outcome.failures.push(FileFailure {
                    path: file.path.clone(),
                    error: err.to_string(),
                    class,
                });
            }
        }
    }
    outcome.comments.sort_by(|a, b| {
        a.path
            .cmp(&b.path)
            .then(a.start.line.cmp(&b.start.line))
            .then(a.offset.cmp(&b.offset))
            .then(a.url.cmp(&b.url))
    });
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use precept_core::backend::reference::ReferenceBackend;

    fn go_file(path: &str) -> FileInput {
        FileInput {
            path: path.to_string(),
            language: Language::new("go"),
            content: "// Render paints the widget.\nfunc Render() {}\n".to_string(),
        }
    }

    fn undocumented(path: &str) -> FileInput {
        FileInput {
            path: path.to_string(),
            language: Language::new("go"),
            content: "// wrong name for this.\nfunc Render() {}\n".to_string(),
        }
    }

    fn zero_threshold_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.thresholds.default_t = 0.0;
        cfg
    }

    #[test]
    fn pools_comments_across_files_sorted_by_path_then_line() {
        let backend = ReferenceBackend::default();
        let cfg = zero_threshold_config();
        let files = vec![undocumented("b.go"), undocumented("a.go")];
        let outcome = analyze_files(&backend, &files, None, &cfg).unwrap();
        assert!(outcome.failures.is_empty());
        assert!(!outcome.comments.is_empty());
        let paths: Vec<&str> = outcome.comments.iter().map(|c| c.path.as_str()).collect();
        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted);
        assert_eq!(paths[0], "a.go");
    }

    #[test]
    fn duplicate_paths_invalidate_the_request() {
        let backend = ReferenceBackend::default();
        let cfg = PipelineConfig::default();
        let files = vec![go_file("same.go"), go_file("same.go")];
        let err = analyze_files(&backend, &files, None, &cfg).unwrap_err();
        assert!(matches!(err, RequestError::DuplicatePath(p) if p == "same.go"));
    }

    #[test]
    fn malformed_diff_invalidates_the_request() {
        let backend = ReferenceBackend::default();
        let cfg = PipelineConfig::default();
        let err = analyze_files(
            &backend,
            &[go_file("a.go")],
            Some("+++ b/a.go\n@@ bogus @@\n"),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, RequestError::BadDiff(_)));
    }

    #[test]
    fn unsupported_language_is_a_client_class_per_file_failure() {
        let backend = ReferenceBackend::default();
        let cfg = zero_threshold_config();
        let mut odd = go_file("weird.bf");
        odd.language = Language::new("brainfork");
        let files = vec![odd, undocumented("fine.go")];
        let outcome = analyze_files(&backend, &files, None, &cfg).unwrap();
        assert_eq!(outcome.failures.len(), 1);
        assert_eq!(outcome.failures[0].class, FailureClass::Client);
        assert!(outcome.failures[0].error.contains("brainfork"));
        assert!(!outcome.comments.is_empty(), "healthy file still analyzed");
        assert!(!outcome.all_failed(2));
    }

    #[test]
    fn empty_file_list_yields_an_empty_outcome() {
        let backend = ReferenceBackend::default();
        let cfg = PipelineConfig::default();
        let outcome = analyze_files(&backend, &[], None, &cfg).unwrap();
        assert!(outcome.comments.is_empty());
        assert_eq!(outcome.stats, StageStats::default());
        assert!(!outcome.all_failed(0));
    }

    #[test]
    fn empty_diff_filters_every_prediction() {
        let backend = ReferenceBackend::default();
        let cfg = zero_threshold_config();
        let outcome =
            analyze_files(&backend, &[undocumented("a.go")], Some(""), &cfg).unwrap();
        assert!(outcome.comments.is_empty());
        assert!(outcome.stats.off_changed_lines > 0);
    }
}
