//! `analyze`: run the pipeline over local files and print what would post.
//!
//! Human output puts one comment per line on standard output
//! (`path:line:col url (score) summary`) with failures and stage counts on
//! standard error; `--json` emits the full machine-readable outcome instead.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use precept_core::backend::Backend;
use precept_core::corpus::Language;
use precept_core::pipeline::{PipelineConfig, Suppressed};
use precept_core::{PostedComment, StageStats};
use serde::Serialize;

use crate::analysis::{analyze_files, FileFailure, FileInput};
use crate::config::language_for_path;

pub struct AnalyzeArgs<'a> {
    pub files: &'a [PathBuf],
    /// Forces one language for every file instead of inferring from
    /// extensions.
    pub language: Option<&'a str>,
    pub diff: Option<&'a Path>,
    pub json: bool,
    pub out: Option<&'a Path>,
}

#[derive(Serialize)]
struct JsonOutput<'a> {
    comments: &'a [PostedComment],
    suppressed: &'a [Suppressed],
    file_errors: &'a [FileFailure],
    stats: &'a StageStats,
}

pub fn run(args: AnalyzeArgs<'_>, backend: &dyn Backend, cfg: &PipelineConfig) -> Result<()> {
    let mut inputs = Vec::with_capacity(args.files.len());
    for path in args.files {
        let content = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let language = match args.language {
            Some(name) => Language::new(name),
            None => language_for_path(path).ok_or_else(|| {
                anyhow!(
                    "cannot infer a language for {}; pass --language",
                    path.display()
                )
            })?,
        };
        inputs.push(FileInput {
            path: path.to_string_lossy().into_owned(),
            language,
            content,
        });
    }
    let diff_text = args
        .diff
        .map(|path| {
            fs::read_to_string(path).with_context(|| format!("reading diff {}", path.display()))
        })
        .transpose()?;

    let outcome = analyze_files(backend, &inputs, diff_text.as_deref(), cfg)?;

    let mut out = crate::commands::output_writer(args.out)?;
    if args.json {
        serde_json::to_writer_pretty(
            &mut out,
            &JsonOutput {
                comments: &outcome.comments,
                suppressed: &outcome.suppressed,
                file_errors: &outcome.failures,
                stats: &outcome.stats,
            },
        )?;
        out.write_all(b"\n")?;
    } else {
        for comment in &outcome.comments {
            writeln!(
                out,
                "{}:{}:{} {} (score {:.2}) {}",
                comment.path,
                comment.start.line,
                comment.start.col,
                comment.url,
                comment.score,
                comment.summary
            )?;
        }
        for sup in &outcome.suppressed {
            eprintln!(
                "suppressed at offset {}: {} ({})",
                sup.prediction.offset, sup.prediction.url, sup.reason
            );
        }
        let s = &outcome.stats;
        eprintln!(
            "candidates {} (dropped {}), merged {}, out-of-range {}, below-threshold {}, \
             off-changed-lines {}, suppressed {}, posted {}",
            s.candidates,
            s.dropped_candidates,
            s.merged_predictions,
            s.out_of_range,
            s.below_threshold,
            s.off_changed_lines,
            s.suppressed,
            s.posted
        );
    }
    out.flush()?;

    if !outcome.failures.is_empty() {
        for failure in &outcome.failures {
            eprintln!("{}: {}", failure.path, failure.error);
        }
        bail!("{} of {} files failed", outcome.failures.len(), inputs.len());
    }
    Ok(())
}
