//! `curate`: turn a review archive into training examples.
//!
//! Input is a newline-delimited archive of file snapshots and review
//! comments. Human comments citing an allowlisted best-practice URL are
//! joined to their snapshots and rendered as (model input, target) pairs;
//! everything unusable is counted per reason on standard error so corpus
//! regressions are visible, not silent.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use precept_core::corpus::{
    curate_examples, extract_relevant_comments, ArchiveRecord, UrlAllowlist,
};
use precept_core::jsonl;

use crate::config::LoadedConfig;

pub struct CurateArgs<'a> {
    pub archive: &'a Path,
    /// Overrides the config directory's allowlist.
    pub allowlist: Option<&'a Path>,
    pub budget: usize,
    pub out: Option<&'a Path>,
}

pub fn run(args: CurateArgs<'_>, loaded: &LoadedConfig) -> Result<()> {
    let records: Vec<ArchiveRecord> = jsonl::read_all(crate::commands::input_reader(args.archive)?)
        .with_context(|| format!("reading archive {}", args.archive.display()))?;

    let allowlist = match args.allowlist {
        Some(path) => UrlAllowlist::parse(
            &fs::read_to_string(path)
                .with_context(|| format!("reading allowlist {}", path.display()))?,
        ),
        None => match &loaded.allowlist {
            Some(list) => list.clone(),
            None => bail!(
                "no URL allowlist configured; pass --allowlist or put {} in the config directory",
                crate::config::ALLOWLIST_FILE
            ),
        },
    };

    let (relevant, mut skips) = extract_relevant_comments(records, &allowlist)?;
    let (examples, curate_skips) = curate_examples(&relevant, &loaded.prompts, args.budget);
    skips.merge(&curate_skips);

    let mut out = crate::commands::output_writer(args.out)?;
    jsonl::write_all(&mut out, examples.iter())?;
    out.flush()?;

    eprintln!("curated {} examples from {} relevant comments", examples.len(), relevant.len());
    if !skips.is_empty() {
        eprintln!("skipped records:\n{skips}");
    }
    Ok(())
}
