//! The violation-target wire format.
//!
//! A target describes where a source file violates documented best practices:
//! an ordered list of `(byte offset, best-practice URL)` pairs, or nothing.
//! The textual form is what model backends emit and what training examples
//! store, so parsing and serialization must agree bit for bit:
//!
//! ```text
//! INSERT 153 COMMENT https://go.dev/doc/comment#func
//! ```
//!
//! Clauses are separated by single spaces, keywords are ASCII, offsets are
//! decimal byte offsets, and the empty target is the literal `EMPTY` (an
//! empty string is also accepted on input). URLs may be any non-empty
//! absolute URL without whitespace.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Literal used for a target with no violations.
pub const EMPTY_TOKEN: &str = "EMPTY";

const INSERT_KEYWORD: &str = "INSERT";
const COMMENT_KEYWORD: &str = "COMMENT";

/// One violation: the byte offset where a comment should anchor and the URL
/// of the best practice being violated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViolationTarget {
    pub offset: u64,
    pub url: String,
}

impl ViolationTarget {
    /// Builds a target, rejecting URLs that could not survive a round trip
    /// through the wire format.
    pub fn new(offset: u64, url: impl Into<String>) -> Result<Self, TargetValidateError> {
        let url = url.into();
        validate_url(&url)?;
        Ok(ViolationTarget { offset, url })
    }
}

impl fmt::Display for ViolationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{INSERT_KEYWORD} {} {COMMENT_KEYWORD} {}",
            self.offset, self.url
        )
    }
}

/// A parsed target: zero or more violations in their original order, with
/// duplicate `(offset, url)` pairs removed (first occurrence wins).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TargetList {
    targets: Vec<ViolationTarget>,
}

impl TargetList {
    /// Canonicalizes a list of violations by dropping exact duplicates while
    /// preserving the order of first occurrences.
    pub fn new(targets: Vec<ViolationTarget>) -> Self {
        let mut seen = HashSet::new();
        let targets = targets
            .into_iter()
            .filter(|t| seen.insert((t.offset, t.url.clone())))
            .collect();
        TargetList { targets }
    }

    pub fn targets(&self) -> &[ViolationTarget] {
        &self.targets
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ViolationTarget> {
        self.targets.iter()
    }
}

impl IntoIterator for TargetList {
    type Item = ViolationTarget;
    type IntoIter = std::vec::IntoIter<ViolationTarget>;

    fn into_iter(self) -> Self::IntoIter {
        self.targets.into_iter()
    }
}

impl<'a> IntoIterator for &'a TargetList {
    type Item = &'a ViolationTarget;
    type IntoIter = std::slice::Iter<'a, ViolationTarget>;

    fn into_iter(self) -> Self::IntoIter {
        self.targets.iter()
    }
}

/// A parse failure, locating the byte in the input where parsing stopped.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {position}")]
pub struct TargetParseError {
    pub position: usize,
    pub kind: TargetParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TargetParseErrorKind {
    #[error("expected `{INSERT_KEYWORD}` keyword, found `{0}`")]
    ExpectedInsert(String),
    #[error("expected `{COMMENT_KEYWORD}` keyword, found `{0}`")]
    ExpectedComment(String),
    #[error("expected decimal byte offset, found `{0}`")]
    InvalidOffset(String),
    #[error("offset `{0}` does not fit in 64 bits")]
    OffsetOverflow(String),
    #[error("expected URL, found end of input")]
    MissingUrl,
    #[error("invalid URL `{0}`")]
    InvalidUrl(String),
    #[error("expected single space separator")]
    ExpectedSeparator,
}

/// A value that cannot be represented in the wire format.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TargetValidateError {
    #[error("URL must not be empty")]
    EmptyUrl,
    #[error("URL `{0}` contains whitespace")]
    UrlContainsWhitespace(String),
    #[error("URL `{0}` is not an absolute URL")]
    UrlNotAbsolute(String),
}

fn validate_url(url: &str) -> Result<(), TargetValidateError> {
    if url.is_empty() {
        return Err(TargetValidateError::EmptyUrl);
    }
    if url.chars().any(char::is_whitespace) {
        return Err(TargetValidateError::UrlContainsWhitespace(url.to_string()));
    }
    if url::Url::parse(url).is_err() {
        return Err(TargetValidateError::UrlNotAbsolute(url.to_string()));
    }
    Ok(())
}

/// Parses the textual form of a target.
///
/// Accepts the canonical output of [`serialize_target`] plus the empty
/// string. Anything else — wrong keywords, signed or non-decimal offsets,
/// missing or relative URLs, stray separators — is an error identifying the
/// byte position of the failure.
pub fn parse_target(text: &str) -> Result<TargetList, TargetParseError> {
    if text.is_empty() || text == EMPTY_TOKEN {
        return Ok(TargetList::default());
    }

    let mut targets = Vec::new();
    let mut pos = 0usize;
    loop {
        let (word, next) = take_word(text, pos);
        if word != INSERT_KEYWORD {
            return Err(TargetParseError {
                position: pos,
                kind: TargetParseErrorKind::ExpectedInsert(word.to_string()),
            });
        }
        pos = expect_space(text, next)?;

        let (word, next) = take_word(text, pos);
        if word.is_empty() || !word.bytes().all(|b| b.is_ascii_digit()) {
            return Err(TargetParseError {
                position: pos,
                kind: TargetParseErrorKind::InvalidOffset(word.to_string()),
            });
        }
        let offset: u64 = word.parse().map_err(|_| TargetParseError {
            position: pos,
            kind: TargetParseErrorKind::OffsetOverflow(word.to_string()),
        })?;
        pos = expect_space(text, next)?;

        let (word, next) = take_word(text, pos);
        if word != COMMENT_KEYWORD {
            return Err(TargetParseError {
                position: pos,
                kind: TargetParseErrorKind::ExpectedComment(word.to_string()),
            });
        }
        pos = expect_space(text, next)?;

        let (url, next) = take_word(text, pos);
        if url.is_empty() {
            return Err(TargetParseError {
                position: pos,
                kind: TargetParseErrorKind::MissingUrl,
            });
        }
        if validate_url(url).is_err() {
            return Err(TargetParseError {
                position: pos,
                kind: TargetParseErrorKind::InvalidUrl(url.to_string()),
            });
        }
        targets.push(ViolationTarget {
            offset,
            url: url.to_string(),
        });

        if next == text.len() {
            return Ok(TargetList::new(targets));
        }
        pos = expect_space(text, next)?;
    }
}

/// Returns the word starting at `pos` (up to the next space or end of input)
/// and the position just past it.
fn take_word(text: &str, pos: usize) -> (&str, usize) {
    let rest = &text[pos..];
    let end = rest.find(' ').unwrap_or(rest.len());
    (&rest[..end], pos + end)
}

/// Consumes exactly one space at `pos`, failing at end of input or on any
/// other byte (double spaces show up here as an empty following word).
fn expect_space(text: &str, pos: usize) -> Result<usize, TargetParseError> {
    if text[pos..].starts_with(' ') {
        Ok(pos + 1)
    } else {
        Err(TargetParseError {
            position: pos,
            kind: TargetParseErrorKind::ExpectedSeparator,
        })
    }
}

/// Serializes a target back to its canonical textual form.
///
/// The empty list becomes `EMPTY`. Fails if any URL is empty, contains
/// whitespace, or is not absolute — such a value would not round-trip.
pub fn serialize_target(targets: &TargetList) -> Result<String, TargetValidateError> {
    if targets.is_empty() {
        return Ok(EMPTY_TOKEN.to_string());
    }
    let mut clauses = Vec::with_capacity(targets.len());
    for t in targets {
        validate_url(&t.url)?;
        clauses.push(t.to_string());
    }
    Ok(clauses.join(" "))
}

/// One-based line/column coordinates inside a source file. Columns count
/// bytes from the start of the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineCol {
    pub line: u64,
    pub col: u64,
}

/// An offset past the end of the source it was anchored against.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("offset {offset} out of range for source of {source_len} bytes")]
pub struct OffsetOutOfRange {
    pub offset: u64,
    pub source_len: u64,
}

/// Converts a byte offset into one-based line/column coordinates.
///
/// Line `n` starts just past the `n-1`-th newline; an offset equal to the
/// source length is allowed and anchors just past the final byte. Offsets
/// beyond that are errors.
pub fn anchor_offset(source: &[u8], offset: u64) -> Result<LineCol, OffsetOutOfRange> {
    if offset > source.len() as u64 {
        return Err(OffsetOutOfRange {
            offset,
            source_len: source.len() as u64,
        });
    }
    let prefix = &source[..offset as usize];
    let line = prefix.iter().filter(|&&b| b == b'\n').count() as u64 + 1;
    let line_start = prefix
        .iter()
        .rposition(|&b| b == b'\n')
        .map(|p| p + 1)
        .unwrap_or(0) as u64;
    Ok(LineCol {
        line,
        col: offset - line_start + 1,
    })
}
