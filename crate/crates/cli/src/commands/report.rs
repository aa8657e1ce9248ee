//! `report`: summarize the logs other commands produce.
//!
//! From a results log: the URL histogram as a ranked cumulative-share table.
//! From a feedback log: the useful ratio (positive feedback over all
//! feedback-bearing comments). From a list of human comments' cited URLs:
//! how many of them the automated URL set covers. Any subset of inputs may
//! be given; each section appears only when its input does.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use precept_core::jsonl;
use precept_core::replay::{
    coverage_over_url_sets, url_distribution, useful_ratio, FeedbackEvent, ResultRecord, UrlShare,
};
use serde::{Deserialize, Serialize};

use crate::commands::metric;

pub struct ReportArgs<'a> {
    pub results_log: Option<&'a Path>,
    pub feedback: Option<&'a Path>,
    pub human_comments: Option<&'a Path>,
    pub json: bool,
    pub out: Option<&'a Path>,
}

/// One human review comment reduced to the URLs it cited.
#[derive(Debug, Deserialize)]
struct HumanCommentRecord {
    urls: Vec<String>,
}

#[derive(Serialize)]
struct JsonOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    comments_total: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    url_distribution: Option<Vec<UrlShare>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    useful_ratio: Option<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    human_coverage: Option<Option<f64>>,
}

pub fn run(args: ReportArgs<'_>) -> Result<()> {
    if args.results_log.is_none() && args.feedback.is_none() && args.human_comments.is_none() {
        bail!("nothing to report: pass --results-log, --feedback, or --human-comments");
    }
    if args.human_comments.is_some() && args.results_log.is_none() {
        bail!("--human-comments needs --results-log to supply the automated URL set");
    }

    let results: Option<Vec<ResultRecord>> = args
        .results_log
        .map(|path| {
            jsonl::read_all(crate::commands::input_reader(path)?)
                .with_context(|| format!("reading results log {}", path.display()))
        })
        .transpose()?;
    let events: Option<Vec<FeedbackEvent>> = args
        .feedback
        .map(|path| {
            jsonl::read_all(crate::commands::input_reader(path)?)
                .with_context(|| format!("reading feedback log {}", path.display()))
        })
        .transpose()?;
    let humans: Option<Vec<HumanCommentRecord>> = args
        .human_comments
        .map(|path| {
            jsonl::read_all(crate::commands::input_reader(path)?)
                .with_context(|| format!("reading human comments {}", path.display()))
        })
        .transpose()?;

    let distribution = results.as_ref().map(|records| {
        let mut histogram: BTreeMap<String, u64> = BTreeMap::new();
        for record in records {
            *histogram.entry(record.url.clone()).or_insert(0) += 1;
        }
        (records.len() as u64, url_distribution(&histogram))
    });
    let ratio = events.as_ref().map(|events| useful_ratio(events));
    let coverage = humans.as_ref().map(|humans| {
        let auto_urls: BTreeSet<String> = results
            .iter()
            .flatten()
            .map(|r| r.url.clone())
            .collect();
        coverage_over_url_sets(&auto_urls, humans.iter().map(|h| h.urls.as_slice()))
    });

    let mut out = crate::commands::output_writer(args.out)?;
    if args.json {
        let payload = JsonOutput {
            comments_total: distribution.as_ref().map(|(total, _)| *total),
            url_distribution: distribution.map(|(_, shares)| shares),
            useful_ratio: ratio,
            human_coverage: coverage,
        };
        serde_json::to_writer_pretty(&mut out, &payload)?;
        out.write_all(b"\n")?;
    } else {
        if let Some((total, shares)) = &distribution {
            writeln!(out, "logged comments: {total}")?;
            writeln!(out, "{:<5} {:>7} {:>7} {:>11} url", "rank", "count", "share", "cumulative")?;
            for share in shares {
                writeln!(
                    out,
                    "{:<5} {:>7} {:>7.3} {:>11.3} {}",
                    share.rank, share.count, share.share, share.cumulative_share, share.url
                )?;
            }
        }
        if let Some(ratio) = ratio {
            writeln!(out, "useful ratio: {}", metric(ratio))?;
        }
        if let Some(coverage) = coverage {
            writeln!(out, "human comment coverage: {}", metric(coverage))?;
        }
    }
    out.flush()?;
    Ok(())
}
