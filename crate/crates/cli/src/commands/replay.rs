//! `replay`: re-run the pipeline over a historical review stream.
//!
//! Input is a newline-delimited stream of file snapshots and per-review
//! diffs. Every comment the pipeline would have posted is appended to the
//! results log for later analysis; the report summarizes posting frequency,
//! stage counts, and the URL histogram. Per-file failures are counted, never
//! fatal — one broken review must not sink a corpus-wide measurement.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use precept_core::backend::Backend;
use precept_core::pipeline::PipelineConfig;
use precept_core::replay::{replay_reviews, url_distribution, ReplayRecord, ReplayReport};
use precept_core::jsonl;

use crate::commands::metric;

pub struct ReplayArgs<'a> {
    pub records: &'a Path,
    /// Append every would-post comment here, newline-delimited.
    pub results_log: Option<&'a Path>,
    pub json: bool,
    pub out: Option<&'a Path>,
}

pub fn run(args: ReplayArgs<'_>, backend: &dyn Backend, cfg: &PipelineConfig) -> Result<()> {
    let records: Vec<ReplayRecord> = jsonl::read_all(crate::commands::input_reader(args.records)?)
        .with_context(|| format!("reading replay records {}", args.records.display()))?;

    let mut log_file = args
        .results_log
        .map(|path| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening results log {}", path.display()))
        })
        .transpose()?;
    let log: Option<&mut dyn Write> = log_file.as_mut().map(|f| f as &mut dyn Write);

    let report = replay_reviews(records, backend, cfg, log)?;
    if let Some(file) = log_file.as_mut() {
        file.flush()?;
    }

    let mut out = crate::commands::output_writer(args.out)?;
    if args.json {
        serde_json::to_writer_pretty(&mut out, &report)?;
        out.write_all(b"\n")?;
    } else {
        render(&mut out, &report)?;
    }
    out.flush()?;
    Ok(())
}

fn render(out: &mut dyn Write, report: &ReplayReport) -> Result<()> {
    writeln!(
        out,
        "reviews: {} total, {} with comments (frequency {})",
        report.reviews_total,
        report.reviews_with_comments,
        metric(report.review_posting_frequency())
    )?;
    writeln!(
        out,
        "files: {} total, {} changed, {} with comments (frequency {}), {} errored",
        report.files_total,
        report.files_changed,
        report.files_with_comments,
        metric(report.file_posting_frequency()),
        report.files_errored
    )?;
    writeln!(out, "comments: {}", report.comments_total)?;
    let s = &report.stats;
    writeln!(
        out,
        "stages: candidates {} (dropped {}), merged {}, out-of-range {}, below-threshold {}, \
         off-changed-lines {}, suppressed {}, posted {}",
        s.candidates,
        s.dropped_candidates,
        s.merged_predictions,
        s.out_of_range,
        s.below_threshold,
        s.off_changed_lines,
        s.suppressed,
        s.posted
    )?;
    if !report.skips.is_empty() {
        writeln!(out, "skips:")?;
        write!(out, "{}", report.skips)?;
    }
    let shares = url_distribution(&report.url_histogram);
    if !shares.is_empty() {
        writeln!(out, "{:<5} {:>7} {:>7} {:>11} url", "rank", "count", "share", "cumulative")?;
        for share in shares {
            writeln!(
                out,
                "{:<5} {:>7} {:>7.3} {:>11.3} {}",
                share.rank, share.count, share.share, share.cumulative_share, share.url
            )?;
        }
    }
    Ok(())
}
