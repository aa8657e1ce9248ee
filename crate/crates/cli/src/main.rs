//! `precept` — a code-review assistant that flags best-practice violations.
//!
//! The pipeline predicts (byte offset, best-practice URL) pairs for a source
//! file, then filters them through confidence thresholds, changed-line
//! restriction, and suppression rules before anything posts. This binary
//! wraps that pipeline as a CLI (corpus curation, threshold calibration,
//! ad-hoc analysis, historical replay, resolution estimation, log reports)
//! and as an HTTP service.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use precept_core::backend::Strategy;
use precept_core::corpus::DEFAULT_INPUT_BUDGET;

mod analysis;
mod commands;
mod config;
mod http;
mod remote;

use config::{build_backend, decode_config, ConfigSources};

#[derive(Parser)]
#[command(
    name = "precept",
    version,
    about = "Flags best-practice violations in code reviews: analyze files, \
             calibrate thresholds, replay history, serve over HTTP"
)]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Config directory (thresholds.cfg, rules.jsonl, summaries.jsonl,
    /// prompts.cfg, allowlist.cfg); PRECEPT_CONFIG_DIR works as a fallback
    #[arg(long, global = true, value_name = "DIR")]
    config: Option<PathBuf>,
    /// Model backend: `reference` or `remote:URL`
    #[arg(long, global = true, value_name = "SPEC", default_value = "reference")]
    backend: String,
    /// Decode strategy: greedy or beam (default depends on the subcommand)
    #[arg(long, global = true, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Candidates to request when decoding with beam
    #[arg(long, global = true, value_name = "N")]
    beam_width: Option<u32>,
    /// Threshold table file (overrides the config directory's)
    #[arg(long, global = true, value_name = "FILE")]
    thresholds: Option<PathBuf>,
    /// Suppression rules file (overrides the config directory's)
    #[arg(long, global = true, value_name = "FILE")]
    rules: Option<PathBuf>,
    /// URL summaries file (overrides the config directory's)
    #[arg(long, global = true, value_name = "FILE")]
    summaries: Option<PathBuf>,
    /// Write primary output here instead of standard output
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Build training examples from a review archive
    Curate {
        /// Newline-delimited archive of snapshots and review comments
        #[arg(long, value_name = "FILE")]
        archive: PathBuf,
        /// Best-practice URL allowlist (overrides the config directory's)
        #[arg(long, value_name = "FILE")]
        allowlist: Option<PathBuf>,
        /// Model input size budget in bytes
        #[arg(long, value_name = "BYTES", default_value_t = DEFAULT_INPUT_BUDGET)]
        budget: usize,
    },
    /// Split curated examples into train/validation/test by timestamp
    Split {
        #[arg(long, value_name = "FILE")]
        examples: PathBuf,
        /// Examples before this timestamp train
        #[arg(long, value_name = "EPOCH_SECONDS")]
        train_until: i64,
        /// Examples before this timestamp (and not training) validate
        #[arg(long, value_name = "EPOCH_SECONDS")]
        val_until: i64,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Fit per-URL confidence thresholds from evaluation cases
    Calibrate {
        /// Newline-delimited cases: {example_id, expected, predicted}
        #[arg(long, value_name = "FILE")]
        cases: PathBuf,
        /// Precision every per-URL threshold must reach
        #[arg(long, default_value_t = 0.9)]
        target_precision: f64,
        /// Minimum predictions a URL needs for its own threshold
        #[arg(long, default_value_t = 5)]
        min_support: u64,
        /// Offset slack (bytes) when matching predictions to expectations
        #[arg(long, default_value_t = 0)]
        tolerance: u64,
        /// Write the precision/recall curve here (newline-delimited JSON)
        #[arg(long, value_name = "FILE")]
        curve: Option<PathBuf>,
        /// Write per-URL fit records here (newline-delimited JSON)
        #[arg(long, value_name = "FILE")]
        records: Option<PathBuf>,
    },
    /// Analyze source files and print the comments that would post
    Analyze {
        /// Source file to analyze (repeatable)
        #[arg(long = "file", value_name = "PATH", required = true)]
        files: Vec<PathBuf>,
        /// Language for all files, instead of inferring from extensions
        #[arg(long)]
        language: Option<String>,
        /// Unified diff; comments are restricted to its added lines
        #[arg(long, value_name = "FILE")]
        diff: Option<PathBuf>,
        /// Emit machine-readable JSON instead of one comment per line
        #[arg(long)]
        json: bool,
    },
    /// Re-run analysis over a historical review stream and report metrics
    Replay {
        /// Newline-delimited stream of snapshots and per-review diffs
        #[arg(long, value_name = "FILE")]
        records: PathBuf,
        /// Append every would-post comment here
        #[arg(long, value_name = "FILE")]
        results_log: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Estimate how many posted comments the merged code resolved
    Resolution {
        /// Newline-delimited snapshot pairs with their posted comments
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        /// Fraction of absences credited as genuine fixes
        #[arg(long, default_value_t = 1.0)]
        confirmation_factor: f64,
        /// Count a comment present if its URL fires anywhere in the merged
        /// file, not only at the mapped line
        #[arg(long)]
        match_anywhere: bool,
        #[arg(long)]
        json: bool,
    },
    /// Summarize results and feedback logs
    Report {
        #[arg(long, value_name = "FILE")]
        results_log: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        feedback: Option<PathBuf>,
        /// Newline-delimited {urls: [...]} records of human review comments
        #[arg(long, value_name = "FILE")]
        human_comments: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Serve the analysis API over HTTP
    Serve {
        /// Port on 127.0.0.1; 0 picks a free port (printed on startup)
        #[arg(long, default_value_t = 8077)]
        port: u16,
        /// Feedback events are appended here
        #[arg(long, value_name = "FILE", default_value = "feedback.jsonl")]
        feedback_log: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let sources = ConfigSources::resolve(
        common.config.as_deref(),
        common.thresholds.clone(),
        common.rules.clone(),
        common.summaries.clone(),
    );

    match cli.command {
        Command::Curate {
            archive,
            allowlist,
            budget,
        } => {
            let loaded = sources.load()?;
            commands::curate::run(
                commands::curate::CurateArgs {
                    archive: &archive,
                    allowlist: allowlist.as_deref(),
                    budget,
                    out: common.out.as_deref(),
                },
                &loaded,
            )
        }
        Command::Split {
            examples,
            train_until,
            val_until,
            out_dir,
        } => commands::split::run(&examples, train_until, val_until, &out_dir),
        Command::Calibrate {
            cases,
            target_precision,
            min_support,
            tolerance,
            curve,
            records,
        } => commands::calibrate::run(commands::calibrate::CalibrateArgs {
            cases: &cases,
            target_precision,
            min_support,
            tolerance,
            out: common.out.as_deref(),
            curve: curve.as_deref(),
            records: records.as_deref(),
        }),
        Command::Analyze {
            files,
            language,
            diff,
            json,
        } => {
            let loaded = sources.load()?;
            let backend = build_backend(&common.backend)?;
            let decode = decode_config(common.strategy, common.beam_width, Strategy::Greedy);
            commands::analyze::run(
                commands::analyze::AnalyzeArgs {
                    files: &files,
                    language: language.as_deref(),
                    diff: diff.as_deref(),
                    json,
                    out: common.out.as_deref(),
                },
                backend.as_ref(),
                &loaded.pipeline(decode),
            )
        }
        Command::Replay {
            records,
            results_log,
            json,
        } => {
            let loaded = sources.load()?;
            let backend = build_backend(&common.backend)?;
            let decode = decode_config(common.strategy, common.beam_width, Strategy::Beam);
            commands::replay::run(
                commands::replay::ReplayArgs {
                    records: &records,
                    results_log: results_log.as_deref(),
                    json,
                    out: common.out.as_deref(),
                },
                backend.as_ref(),
                &loaded.pipeline(decode),
            )
        }
        Command::Resolution {
            pairs,
            confirmation_factor,
            match_anywhere,
            json,
        } => {
            let loaded = sources.load()?;
            let backend = build_backend(&common.backend)?;
            let decode = decode_config(common.strategy, common.beam_width, Strategy::Beam);
            commands::resolution::run(
                commands::resolution::ResolutionArgs {
                    pairs: &pairs,
                    confirmation_factor,
                    match_anywhere,
                    json,
                    out: common.out.as_deref(),
                },
                backend.as_ref(),
                &loaded.pipeline(decode),
            )
        }
        Command::Report {
            results_log,
            feedback,
            human_comments,
            json,
        } => commands::report::run(commands::report::ReportArgs {
            results_log: results_log.as_deref(),
            feedback: feedback.as_deref(),
            human_comments: human_comments.as_deref(),
            json,
            out: common.out.as_deref(),
        }),
        Command::Serve { port, feedback_log } => {
            let backend = build_backend(&common.backend)?;
            let decode = decode_config(common.strategy, common.beam_width, Strategy::Greedy);
            http::run_serve(http::ServeOptions {
                port,
                feedback_log,
                backend,
                sources,
                default_decode: decode,
                override_beam_width: common
                    .beam_width
                    .unwrap_or(precept_core::backend::DEFAULT_BEAM_WIDTH),
            })
        }
    }
}
