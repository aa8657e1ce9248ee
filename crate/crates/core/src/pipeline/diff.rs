//! Unified-diff parsing for changed-line filtering.
//!
//! Review comments should only land on lines the author actually touched, so
//! the pipeline needs to know, per file, which new-file line numbers were
//! added or modified. This parser extracts exactly that: the line numbers of
//! `+` lines, keyed by the `+++` path.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Added/modified line numbers (1-based, new-file numbering) per file path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangedLineSet {
    files: BTreeMap<String, BTreeSet<u64>>,
}

impl ChangedLineSet {
    pub fn insert(&mut self, path: impl Into<String>, line: u64) {
        debug_assert!(line >= 1, "line numbers are 1-based");
        self.files.entry(path.into()).or_default().insert(line);
    }

    pub fn lines_for(&self, path: &str) -> Option<&BTreeSet<u64>> {
        self.files.get(path)
    }

    pub fn contains(&self, path: &str, line: u64) -> bool {
        self.files.get(path).is_some_and(|s| s.contains(&line))
    }

    pub fn files(&self) -> impl Iterator<Item = (&str, &BTreeSet<u64>)> {
        self.files.iter().map(|(p, s)| (p.as_str(), s))
    }

    pub fn is_empty(&self) -> bool {
        self.files.values().all(BTreeSet::is_empty)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("diff line {line}: malformed hunk header `{text}`")]
    MalformedHunkHeader { line: usize, text: String },
    #[error("diff line {line}: hunk appears before any `+++` file header")]
    HunkBeforeFileHeader { line: usize },
    #[error("diff line {line}: unexpected content inside hunk: `{text}`")]
    UnexpectedHunkLine { line: usize, text: String },
    #[error("diff line {line}: hunk shorter than its header declares")]
    TruncatedHunk { line: usize },
}

/// Extracts the changed (added) new-file lines from a unified diff.
///
/// Only `+++` file headers and `@@` hunks drive the state machine; `diff`,
/// `index`, `---`, and mode lines between files are ignored. A `+++
/// /dev/null` target (file deletion) contributes no lines. Hunk bodies are
/// validated against the lengths their header declares, so a truncated or
/// corrupted diff fails loudly with a line number instead of producing a
/// silently wrong line set.
pub fn changed_lines_from_diff(diff_text: &str) -> Result<ChangedLineSet, DiffError> {
    let mut out = ChangedLineSet::default();
    // `Some(None)` means the current file is /dev/null; `None` means no
    // `+++` header has been seen yet.
    let mut current: Option<Option<String>> = None;
    let mut old_left: u64 = 0;
    let mut new_left: u64 = 0;
    let mut new_cursor: u64 = 0;
    let mut last_line = 0usize;

    for (idx, line) in diff_text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let in_hunk = old_left > 0 || new_left > 0;

        if in_hunk {
            match line.as_bytes().first() {
                Some(b'+') => {
                    if new_left == 0 {
                        return Err(DiffError::UnexpectedHunkLine {
                            line: lineno,
                            text: line.to_string(),
                        });
                    }
                    if let Some(Some(path)) = &current {
                        out.insert(path.clone(), new_cursor);
                    }
                    new_cursor += 1;
                    new_left -= 1;
                }
                Some(b'-') => {
                    if old_left == 0 {
                        return Err(DiffError::UnexpectedHunkLine {
                            line: lineno,
                            text: line.to_string(),
                        });
                    }
                    old_left -= 1;
                }
                // Git always prefixes context with a space, but hand-written
                // diffs sometimes drop it on empty lines; treat both as
                // context.
                Some(b' ') | None => {
                    if old_left == 0 || new_left == 0 {
                        return Err(DiffError::UnexpectedHunkLine {
                            line: lineno,
                            text: line.to_string(),
                        });
                    }
                    new_cursor += 1;
                    new_left -= 1;
                    old_left -= 1;
                }
                // "\ No newline at end of file" markers carry no line.
                Some(b'\\') => {}
                Some(_) => {
                    return Err(DiffError::UnexpectedHunkLine {
                        line: lineno,
                        text: line.to_string(),
                    });
                }
            }
            continue;
        }

        if let Some(rest) = line.strip_prefix("+++ ") {
            current = Some(parse_target_path(rest));
        } else if let Some(header) = line.strip_prefix("@@ ") {
            if current.is_none() {
                return Err(DiffError::HunkBeforeFileHeader { line: lineno });
            }
            let (new_start, old_len, new_len) =
                parse_hunk_header(header).ok_or_else(|| DiffError::MalformedHunkHeader {
                    line: lineno,
                    text: line.to_string(),
                })?;
            old_left = old_len;
            new_left = new_len;
            new_cursor = new_start;
        }
        // Everything else between hunks (diff/index/---/mode lines, prose)
        // is ignored.
    }

    if old_left > 0 || new_left > 0 {
        return Err(DiffError::TruncatedHunk { line: last_line });
    }
    Ok(out)
}

/// The new-file path from a `+++ ` header: strips one `b/` prefix and any
/// tab-separated timestamp; `/dev/null` means the file was deleted.
fn parse_target_path(rest: &str) -> Option<String> {
    let path = rest.split('\t').next().unwrap_or(rest).trim_end();
    if path == "/dev/null" {
        return None;
    }
    Some(path.strip_prefix("b/").unwrap_or(path).to_string())
}

/// Parses `-a[,b] +c[,d] @@...` and returns `(c, b, d)` with the unified-diff
/// convention that omitted lengths default to 1.
fn parse_hunk_header(header: &str) -> Option<(u64, u64, u64)> {
    let rest = header.strip_prefix('-')?;
    let (old_part, rest) = rest.split_once(' ')?;
    let rest = rest.strip_prefix('+')?;
    let end = rest.find(" @@")?;
    let new_part = &rest[..end];
    let (_, old_len) = parse_range(old_part)?;
    let (new_start, new_len) = parse_range(new_part)?;
    Some((new_start, old_len, new_len))
}

fn parse_range(part: &str) -> Option<(u64, u64)> {
    let (start, len) = match part.split_once(',') {
        Some((s, l)) => (s, l.parse().ok()?),
        None => (part, 1),
    };
    if start.is_empty() || !start.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((start.parse().ok()?, len))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_added_lines_from_single_hunk() {
        let diff = "\
--- a/src/x.go
+++ b/src/x.go
@@ -1,2 +1,3 @@
 package x
+// new line
 func f() {}
";
        let set = changed_lines_from_diff(diff).unwrap();
        let lines: Vec<u64> = set.lines_for("src/x.go").unwrap().iter().copied().collect();
        assert_eq!(lines, vec![2]);
    }

    #[test]
    fn empty_diff_yields_empty_map() {
        let set = changed_lines_from_diff("").unwrap();
        assert!(set.is_empty());
        assert_eq!(set.lines_for("anything"), None);
    }

    #[test]
    fn handles_multiple_files_and_hunks() {
        let diff = "\
diff --git a/a.go b/a.go
index 000..111 100644
--- a/a.go
+++ b/a.go
@@ -1,3 +1,4 @@
 l1
+added a2
 l2
 l3
@@ -10,2 +11,3 @@
 l10
+added a12
 l11
diff --git a/b.go b/b.go
--- a/b.go
+++ b/b.go
@@ -0,0 +1,2 @@
+b1
+b2
";
        let set = changed_lines_from_diff(diff).unwrap();
        let a: Vec<u64> = set.lines_for("a.go").unwrap().iter().copied().collect();
        let b: Vec<u64> = set.lines_for("b.go").unwrap().iter().copied().collect();
        assert_eq!(a, vec![2, 12]);
        assert_eq!(b, vec![1, 2]);
    }

    #[test]
    fn modified_lines_count_as_added() {
        let diff = "\
--- a/m.go
+++ b/m.go
@@ -1,3 +1,3 @@
 keep
-old version
+new version
 keep
";
        let set = changed_lines_from_diff(diff).unwrap();
        let lines: Vec<u64> = set.lines_for("m.go").unwrap().iter().copied().collect();
        assert_eq!(lines, vec![2]);
    }

    #[test]
    fn deleted_files_contribute_nothing() {
        let diff = "\
--- a/gone.go
+++ /dev/null
@@ -1,2 +0,0 @@
-line one
-line two
";
        let set = changed_lines_from_diff(diff).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn strips_timestamps_and_prefixes() {
        let diff = "\
--- a/t.go\t2026-01-01 00:00:00
+++ b/t.go\t2026-01-02 00:00:00
@@ -1 +1 @@
-x
+y
";
        let set = changed_lines_from_diff(diff).unwrap();
        assert!(set.contains("t.go", 1));
    }

    #[test]
    fn rejects_malformed_hunk_headers() {
        let diff = "+++ b/x.go\n@@ not a header @@\n";
        let err = changed_lines_from_diff(diff).unwrap_err();
        assert_eq!(
            err,
            DiffError::MalformedHunkHeader {
                line: 2,
                text: "@@ not a header @@".to_string()
            }
        );

        let diff = "@@ -1 +1 @@\n-x\n+y\n";
        assert_eq!(
            changed_lines_from_diff(diff).unwrap_err(),
            DiffError::HunkBeforeFileHeader { line: 1 }
        );
    }

    #[test]
    fn rejects_truncated_and_corrupted_hunks() {
        let diff = "+++ b/x.go\n@@ -1,2 +1,2 @@\n x\n";
        assert!(matches!(
            changed_lines_from_diff(diff).unwrap_err(),
            DiffError::TruncatedHunk { .. }
        ));

        let diff = "+++ b/x.go\n@@ -1,1 +1,1 @@\n?what\n";
        assert!(matches!(
            changed_lines_from_diff(diff).unwrap_err(),
            DiffError::UnexpectedHunkLine { line: 3, .. }
        ));

        // More added lines than the header declares.
        let diff = "+++ b/x.go\n@@ -1,1 +1,1 @@\n+a\n+b\n";
        assert!(matches!(
            changed_lines_from_diff(diff).unwrap_err(),
            DiffError::UnexpectedHunkLine { line: 4, .. }
        ));
    }

    #[test]
    fn no_newline_markers_are_ignored() {
        let diff = "\
--- a/x.go
+++ b/x.go
@@ -1 +1 @@
-old
\\ No newline at end of file
+new
\\ No newline at end of file
";
        let set = changed_lines_from_diff(diff).unwrap();
        assert!(set.contains("x.go", 1));
    }

    #[test]
    fn new_file_marks_every_line() {
        let diff = "\
--- /dev/null
+++ b/new.go
@@ -0,0 +1,3 @@
+one
+two
+three
";
        let set = changed_lines_from_diff(diff).unwrap();
        let lines: Vec<u64> = set.lines_for("new.go").unwrap().iter().copied().collect();
        assert_eq!(lines, vec![1, 2, 3]);
    }
}
