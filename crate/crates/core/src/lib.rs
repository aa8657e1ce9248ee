//! Core library for precept, an automated code-review assistant that flags
//! violations of documented best practices.
//!
//! The crate is organized around the life cycle of a review comment:
//!
//! * [`target`] — the wire format tying a byte offset in a source file to the
//!   URL of the best practice it violates, plus offset-to-line anchoring.
//! * [`corpus`] — turning archived human reviews into training examples and
//!   temporally split datasets.
//! * [`backend`] — the model-backend contract, a deterministic rule-based
//!   reference backend, and merging of scored candidates into predictions.
//! * [`pipeline`] — everything between raw predictions and postable comments:
//!   confidence thresholds, changed-line filtering from unified diffs,
//!   suppression rules, and rendering.
//! * [`calibration`] — precision/recall scoring against expected comments and
//!   per-URL threshold fitting.
//! * [`replay`] — batch replay over historical reviews and the deployment
//!   metrics built on top of it (URL distribution, coverage, resolution
//!   estimation, feedback aggregation).
//!
//! [`jsonl`] holds the newline-delimited JSON helpers shared by the corpus,
//! calibration, and replay code paths.

pub mod backend;
pub mod calibration;
pub mod corpus;
pub mod jsonl;
pub mod pipeline;
pub mod replay;
pub mod target;

pub use backend::{Backend, Candidate, DecodeConfig, Strategy, ViolationPrediction};
pub use corpus::{FileSnapshot, Language, ReviewComment, TrainingExample};
pub use pipeline::{AnalysisOutcome, PipelineConfig, PostedComment, StageStats};
pub use target::{LineCol, TargetList, ViolationTarget};
