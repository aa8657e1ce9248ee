//! `resolution`: estimate how many posted comments the merged code fixed.
//!
//! Input is newline-delimited pairs of (initial snapshot with its comments,
//! merged snapshot). A comment counts as resolved when re-analysis of the
//! merged file no longer predicts its URL at the line the comment's line
//! maps to — or anywhere in the file, with `--match-anywhere`.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use precept_core::backend::Backend;
use precept_core::jsonl;
use precept_core::pipeline::PipelineConfig;
use precept_core::replay::{estimate_resolution, ResolutionConfig, ResolutionReport, SnapshotPair};

use crate::commands::metric;

pub struct ResolutionArgs<'a> {
    pub pairs: &'a Path,
    pub confirmation_factor: f64,
    pub match_anywhere: bool,
    pub json: bool,
    pub out: Option<&'a Path>,
}

pub fn run(args: ResolutionArgs<'_>, backend: &dyn Backend, cfg: &PipelineConfig) -> Result<()> {
    let pairs: Vec<SnapshotPair> = jsonl::read_all(crate::commands::input_reader(args.pairs)?)
        .with_context(|| format!("reading snapshot pairs {}", args.pairs.display()))?;
    let rcfg = ResolutionConfig {
        confirmation_factor: args.confirmation_factor,
        match_anywhere: args.match_anywhere,
    };
    let report = estimate_resolution(&pairs, backend, cfg, &rcfg);

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

fn render(out: &mut dyn Write, report: &ResolutionReport) -> Result<()> {
    writeln!(out, "pairs: {} total", report.pairs_total)?;
    if !report.pairs_skipped.is_empty() {
        writeln!(out, "skipped pairs:")?;
        write!(out, "{}", report.pairs_skipped)?;
    }
    writeln!(
        out,
        "comments: {} examined, {} absent on merged (fraction {})",
        report.comments_examined,
        report.comment_absent_on_merged,
        metric(report.absent_fraction)
    )?;
    writeln!(
        out,
        "resolution rate estimate: {} (confirmation factor {}, mapping {})",
        metric(report.resolution_rate_estimate),
        report.confirmation_factor,
        report.mapping_method
    )?;
    if !report.per_url.is_empty() {
        writeln!(out, "{:>9} {:>7} url", "examined", "absent")?;
        for (url, counts) in &report.per_url {
            writeln!(out, "{:>9} {:>7} {}", counts.examined, counts.absent, url)?;
        }
    }
    Ok(())
}
