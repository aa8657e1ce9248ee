//! `calibrate`: fit per-URL confidence thresholds from evaluation cases.
//!
//! Input is newline-delimited cases of expected targets and scored
//! predictions. Output is a threshold table ready for `--thresholds`, a
//! human-readable fitting report, and (optionally) the full
//! precision/recall curve and per-URL fit records as newline-delimited JSON.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use precept_core::calibration::{
    default_grid, fit_per_url_thresholds, pr_curve_with_tolerance, CalibrationConfig, EvalCase,
};
use precept_core::jsonl;

pub struct CalibrateArgs<'a> {
    pub cases: &'a Path,
    pub target_precision: f64,
    pub min_support: u64,
    pub tolerance: u64,
    /// Where the fitted threshold table goes; standard output when absent.
    pub out: Option<&'a Path>,
    /// Optional newline-delimited precision/recall curve.
    pub curve: Option<&'a Path>,
    /// Optional newline-delimited per-URL fit records.
    pub records: Option<&'a Path>,
}

pub fn run(args: CalibrateArgs<'_>) -> Result<()> {
    let cases: Vec<EvalCase> = jsonl::read_all(crate::commands::input_reader(args.cases)?)
        .with_context(|| format!("reading cases {}", args.cases.display()))?;
    if cases.is_empty() {
        bail!("no evaluation cases");
    }

    let cfg = CalibrationConfig {
        target_precision: args.target_precision,
        min_support: args.min_support,
        threshold_grid: default_grid(),
        match_tolerance: args.tolerance,
    };
    let (table, report) = fit_per_url_thresholds(&cases, &cfg)?;
    print!("{report}");

    if let Some(path) = args.curve {
        let curve = pr_curve_with_tolerance(&cases, &cfg.threshold_grid, cfg.match_tolerance);
        let mut writer = crate::commands::output_writer(Some(path))?;
        jsonl::write_all(&mut writer, curve.iter())?;
        writer.flush()?;
    }
    if let Some(path) = args.records {
        let mut writer = crate::commands::output_writer(Some(path))?;
        jsonl::write_all(&mut writer, report.fits.iter())?;
        writer.flush()?;
    }

    match args.out {
        Some(path) => {
            fs::write(path, table.to_text())
                .with_context(|| format!("writing thresholds to {}", path.display()))?;
            println!("thresholds written to {}", path.display());
        }
        None => {
            println!("fitted thresholds:");
            print!("{}", table.to_text());
        }
    }
    Ok(())
}
