//! Scoring predictions against expected comments and fitting thresholds.
//!
//! Evaluation is offset-and-URL exact: a predicted pair is correct when the
//! expected set contains the same `(offset, url)`, regardless of order. On
//! top of that sit precision/recall curves over a threshold grid, per-URL
//! threshold fitting to a target precision, and deterministic ranking of
//! backend configurations.
//!
//! Precision at a threshold is undefined (not 0 or 1) when nothing is kept;
//! recall is undefined when nothing is expected. Reports carry two standing
//! caveats: recall's denominator is the total number of expected comments,
//! and the expected sets come from historical human comments, which are an
//! incomplete ground truth (humans skip violations for many reasons).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{merge_candidates, Backend, DecodeConfig, ViolationPrediction};
use crate::corpus::{SkipReport, TrainingExample};
use crate::pipeline::ThresholdTable;
use crate::target::{parse_target, ViolationTarget};

/// One evaluation unit: what the model said about a file versus what the
/// human reviewers said. `expected` and `predicted` are treated as sets of
/// `(offset, url)` pairs; keep `predicted` free of duplicate pairs (merged
/// backend output always is).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub example_id: String,
    pub expected: Vec<ViolationTarget>,
    pub predicted: Vec<ViolationPrediction>,
}

/// Counts from scoring one case at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CaseScore {
    pub correct_kept: u64,
    pub kept: u64,
    pub expected_count: u64,
}

/// One point of a precision/recall curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub t: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub kept_predictions: u64,
    pub correct_kept: u64,
}

/// Knobs for threshold fitting and scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    /// Per-URL precision every fitted threshold must reach.
    pub target_precision: f64,
    /// Minimum number of predictions a URL needs before it gets its own
    /// threshold; rarer URLs fall back to the fitted default.
    pub min_support: u64,
    /// Candidate thresholds, ascending within [0, 1].
    pub threshold_grid: Vec<f64>,
    /// Offset slack (± bytes) when matching predictions to expected pairs.
    /// Zero — exact matching — is right for deterministic backends; a small
    /// window helps when evaluating remote models that anchor imprecisely.
    pub match_tolerance: u64,
}

/// The standard grid: 0.00 to 1.00 in steps of 0.01.
pub fn default_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            target_precision: 0.9,
            min_support: 5,
            threshold_grid: default_grid(),
            match_tolerance: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.threshold_grid.is_empty() {
            return Err(CalibrationError::EmptyGrid);
        }
        if !self
            .threshold_grid
            .windows(2)
            .all(|w| w[0] <= w[1])
        {
            return Err(CalibrationError::UnsortedGrid);
        }
        if self
            .threshold_grid
            .iter()
            .any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(CalibrationError::GridOutOfRange);
        }
        if self.min_support == 0 {
            return Err(CalibrationError::ZeroMinSupport);
        }
        if !(0.0..=1.0).contains(&self.target_precision) {
            return Err(CalibrationError::TargetOutOfRange(self.target_precision));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid is not sorted ascending")]
    UnsortedGrid,
    #[error("threshold grid contains values outside [0, 1]")]
    GridOutOfRange,
    #[error("min_support must be at least 1")]
    ZeroMinSupport,
    #[error("target precision {0} is outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("no runs to compare")]
    NoRuns,
}

/// Marks each prediction correct or not by matching it against the expected
/// pairs. With zero tolerance a prediction is correct iff its exact pair is
/// expected. With tolerance k, predictions (highest score first) greedily
/// claim the nearest unclaimed expected pair with the same URL within ±k
/// bytes, so at most one prediction is credited per expected pair.
fn correctness_flags(
    expected: &[ViolationTarget],
    predicted: &[ViolationPrediction],
    tolerance: u64,
) -> Vec<bool> {
    let expected_set: BTreeSet<(u64, &str)> = expected
        .iter()
        .map(|e| (e.offset, e.url.as_str()))
        .collect();
    if tolerance == 0 {
        return predicted
            .iter()
            .map(|p| expected_set.contains(&(p.offset, p.url.as_str())))
            .collect();
    }

    let mut order: Vec<usize> = (0..predicted.len()).collect();
    order.sort_by(|&a, &b| {
        predicted[b]
            .score
            .partial_cmp(&predicted[a].score)
            .expect("scores are finite")
            .then(predicted[a].offset.cmp(&predicted[b].offset))
            .then(predicted[a].url.cmp(&predicted[b].url))
    });
    let mut unclaimed: BTreeSet<(u64, &str)> = expected_set;
    let mut flags = vec![false; predicted.len()];
    for idx in order {
        let p = &predicted[idx];
        let lo = p.offset.saturating_sub(tolerance);
        let hi = p.offset.saturating_add(tolerance);
        let best = unclaimed
            .iter()
            .filter(|(off, url)| *url == p.url && (lo..=hi).contains(off))
            .min_by_key(|(off, _)| (off.abs_diff(p.offset), *off))
            .copied();
        if let Some(found) = best {
            unclaimed.remove(&found);
            flags[idx] = true;
        }
    }
    flags
}

fn threshold_of(table: Option<&ThresholdTable>, t: f64, url: &str) -> f64 {
    match table {
        Some(tab) => tab.threshold_for(url),
        None => t,
    }
}

/// Scores one case at threshold `t` (or per-URL thresholds when `table` is
/// given): how many predictions were kept (score strictly above threshold),
/// how many distinct expected pairs those cover, and how many pairs were
/// expected in total.
pub fn score_case(case: &EvalCase, t: f64, table: Option<&ThresholdTable>) -> CaseScore {
    score_case_with_tolerance(case, t, table, 0)
}

/// [`score_case`] with an offset tolerance; see
/// [`CalibrationConfig::match_tolerance`].
pub fn score_case_with_tolerance(
    case: &EvalCase,
    t: f64,
    table: Option<&ThresholdTable>,
    tolerance: u64,
) -> CaseScore {
    let kept: Vec<ViolationPrediction> = case
        .predicted
        .iter()
        .filter(|p| p.score > threshold_of(table, t, &p.url))
        .cloned()
        .collect();
    let expected_unique: Vec<ViolationTarget> = {
        let mut seen = BTreeSet::new();
        case.expected
            .iter()
            .filter(|e| seen.insert((e.offset, e.url.clone())))
            .cloned()
            .collect()
    };
    let correct_kept = if tolerance == 0 {
        // Set semantics: distinct kept pairs that are expected.
        let kept_pairs: BTreeSet<(u64, &str)> =
            kept.iter().map(|p| (p.offset, p.url.as_str())).collect();
        expected_unique
            .iter()
            .filter(|e| kept_pairs.contains(&(e.offset, e.url.as_str())))
            .count() as u64
    } else {
        correctness_flags(&expected_unique, &kept, tolerance)
            .iter()
            .filter(|&&f| f)
            .count() as u64
    };
    CaseScore {
        correct_kept,
        kept: kept.len() as u64,
        expected_count: expected_unique.len() as u64,
    }
}

/// Precision/recall at each grid threshold, totals pooled over all cases.
pub fn pr_curve(cases: &[EvalCase], grid: &[f64]) -> Vec<PRPoint> {
    pr_curve_with_tolerance(cases, grid, 0)
}

pub fn pr_curve_with_tolerance(cases: &[EvalCase], grid: &[f64], tolerance: u64) -> Vec<PRPoint> {
    grid.iter()
        .map(|&t| {
            let mut correct = 0u64;
            let mut kept = 0u64;
            let mut expected = 0u64;
            for case in cases {
                let s = score_case_with_tolerance(case, t, None, tolerance);
                correct += s.correct_kept;
                kept += s.kept;
                expected += s.expected_count;
            }
            PRPoint {
                t,
                precision: (kept > 0).then(|| correct as f64 / kept as f64),
                recall: (expected > 0).then(|| correct as f64 / expected as f64),
                kept_predictions: kept,
                correct_kept: correct,
            }
        })
        .collect()
}

/// The fitting result for one URL that met `min_support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlFit {
    pub url: String,
    /// Number of predictions for this URL in the validation cases.
    pub support: u64,
    pub threshold: f64,
    /// Precision among predictions kept at `threshold`; absent when the
    /// threshold keeps nothing (the suppression-recommendation case).
    pub precision_at_threshold: Option<f64>,
    pub kept_at_threshold: u64,
    /// True when no grid threshold reached the target precision; such URLs
    /// get threshold 1.0 (never posts under strict >) and should be
    /// considered for a suppression rule instead.
    pub recommend_suppression: bool,
}

/// What [`fit_per_url_thresholds`] decided and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub target_precision: f64,
    pub min_support: u64,
    pub match_tolerance: u64,
    pub default_t: f64,
    /// Precision over all predictions at `default_t`; absent when the
    /// default keeps nothing.
    pub default_precision: Option<f64>,
    pub fits: Vec<UrlFit>,
    /// URLs seen fewer than `min_support` times, with their counts; they use
    /// the default threshold.
    pub under_support: Vec<(String, u64)>,
    /// Standing methodology caveats, included in every report.
    pub notes: Vec<String>,
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "calibration: target precision {:.3}, min support {}, tolerance ±{} bytes",
            self.target_precision, self.min_support, self.match_tolerance
        )?;
        match self.default_precision {
            Some(p) => writeln!(f, "default threshold {:.4} (precision {:.3})", self.default_t, p)?,
            None => writeln!(f, "default threshold {:.4} (keeps nothing)", self.default_t)?,
        }
        for fit in &self.fits {
            let precision = fit
                .precision_at_threshold
                .map(|p| format!("{p:.3}"))
                .unwrap_or_else(|| "undefined".to_string());
            let flag = if fit.recommend_suppression {
                "  [recommend suppression]"
            } else {
                ""
            };
            writeln!(
                f,
                "  {}  t={:.4}  support={}  kept={}  precision={}{}",
                fit.url, fit.threshold, fit.support, fit.kept_at_threshold, precision, flag
            )?;
        }
        for (url, support) in &self.under_support {
            writeln!(f, "  {url}  support={support} (below minimum, uses default)")?;
        }
        for note in &self.notes {
            writeln!(f, "note: {note}")?;
        }
        Ok(())
    }
}

fn standing_notes() -> Vec<String> {
    vec![
        "recall denominator is the total number of expected comments (not correct predictions at t=0)".to_string(),
        "expected sets come from historical human comments, an incomplete ground truth; precision/recall are estimates".to_string(),
    ]
}

/// Fits a per-URL threshold table to the validation cases.
///
/// For every URL with at least `min_support` predictions, picks the smallest
/// grid threshold whose per-URL precision reaches `target_precision`. URLs
/// where no threshold suffices get 1.0 — which never posts under the strict
/// inequality — plus a suppression recommendation. The default threshold is
/// fitted the same way over all predictions pooled.
pub fn fit_per_url_thresholds(
    cases: &[EvalCase],
    cfg: &CalibrationConfig,
) -> Result<(ThresholdTable, CalibrationReport), CalibrationError> {
    cfg.validate()?;

    // Flatten to (url, score, correct) with correctness fixed up front;
    // thresholding then just filters by score.
    let mut scored: Vec<(String, f64, bool)> = Vec::new();
    for case in cases {
        let expected_unique: Vec<ViolationTarget> = {
            let mut seen = BTreeSet::new();
            case.expected
                .iter()
                .filter(|e| seen.insert((e.offset, e.url.clone())))
                .cloned()
                .collect()
        };
        let flags = correctness_flags(&expected_unique, &case.predicted, cfg.match_tolerance);
        for (pred, correct) in case.predicted.iter().zip(flags) {
            scored.push((pred.url.clone(), pred.score, correct));
        }
    }

    let mut by_url: BTreeMap<&str, Vec<(f64, bool)>> = BTreeMap::new();
    for (url, score, correct) in &scored {
        by_url.entry(url).or_default().push((*score, *correct));
    }

    let fit_on = |preds: &[(f64, bool)]| -> Option<(f64, Option<f64>, u64)> {
        for &t in &cfg.threshold_grid {
            let kept = preds.iter().filter(|(s, _)| *s > t).count() as u64;
            let correct = preds.iter().filter(|(s, c)| *s > t && *c).count() as u64;
            if kept > 0 && correct as f64 / kept as f64 >= cfg.target_precision {
                return Some((t, Some(correct as f64 / kept as f64), kept));
            }
        }
        None
    };

    let all: Vec<(f64, bool)> = scored.iter().map(|(_, s, c)| (*s, *c)).collect();
    let (default_t, default_precision) = match fit_on(&all) {
        Some((t, p, _)) => (t, p),
        None => (1.0, None),
    };

    let mut table = ThresholdTable {
        default_t,
        per_url: BTreeMap::new(),
    };
    let mut fits = Vec::new();
    let mut under_support = Vec::new();
    for (url, preds) in &by_url {
        let support = preds.len() as u64;
        if support < cfg.min_support {
            under_support.push((url.to_string(), support));
            continue;
        }
        let fit = match fit_on(preds) {
            Some((t, precision, kept)) => UrlFit {
                url: url.to_string(),
                support,
                threshold: t,
                precision_at_threshold: precision,
                kept_at_threshold: kept,
                recommend_suppression: false,
            },
            None => UrlFit {
                url: url.to_string(),
                support,
                threshold: 1.0,
                precision_at_threshold: None,
                kept_at_threshold: 0,
                recommend_suppression: true,
            },
        };
        table.per_url.insert(url.to_string(), fit.threshold);
        fits.push(fit);
    }

    let report = CalibrationReport {
        target_precision: cfg.target_precision,
        min_support: cfg.min_support,
        match_tolerance: cfg.match_tolerance,
        default_t,
        default_precision,
        fits,
        under_support,
        notes: standing_notes(),
    };
    Ok((table, report))
}

/// One run's metrics at the reference threshold, with its full curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub curve: Vec<PRPoint>,
}

/// Ranks runs by precision at `reference_t` (undefined precision ranks
/// last), tie-breaking by recall then label, so rankings are deterministic.
pub fn compare_runs(
    runs: &[(String, Vec<EvalCase>)],
    grid: &[f64],
    reference_t: f64,
) -> Result<Vec<RunSummary>, CalibrationError> {
    if runs.is_empty() {
        return Err(CalibrationError::NoRuns);
    }
    let mut summaries: Vec<RunSummary> = runs
        .iter()
        .map(|(label, cases)| {
            let at_ref = pr_curve(cases, &[reference_t]);
            let point = &at_ref[0];
            RunSummary {
                label: label.clone(),
                precision: point.precision,
                recall: point.recall,
                curve: pr_curve(cases, grid),
            }
        })
        .collect();
    let key = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    summaries.sort_by(|a, b| {
        key(b.precision)
            .partial_cmp(&key(a.precision))
            .expect("metrics are finite")
            .then(
                key(b.recall)
                    .partial_cmp(&key(a.recall))
                    .expect("metrics are finite"),
            )
            .then(a.label.cmp(&b.label))
    });
    Ok(summaries)
}

/// Builds evaluation cases by running a backend over curated examples: the
/// example's own target is the expected set, the backend's merged output the
/// prediction set. Examples whose targets fail to parse or whose analysis
/// fails are skipped and counted.
pub fn cases_from_examples(
    examples: &[TrainingExample],
    backend: &dyn Backend,
    decode: &DecodeConfig,
) -> (Vec<EvalCase>, SkipReport) {
    let mut cases = Vec::new();
    let mut skips = SkipReport::default();
    for (idx, ex) in examples.iter().enumerate() {
        let expected = match parse_target(&ex.target) {
            Ok(t) => t.targets().to_vec(),
            Err(_) => {
                skips.bump("unparseable_target");
                continue;
            }
        };
        let candidates = match backend.analyze_raw(&ex.input, decode) {
            Ok(c) => c,
            Err(_) => {
                skips.bump("backend_error");
                continue;
            }
        };
        let predicted = match merge_candidates(&candidates) {
            Ok(p) => p,
            Err(_) => {
                skips.bump("unparseable_candidate");
                continue;
            }
        };
        cases.push(EvalCase {
            example_id: format!("{}#{idx}", ex.review_id),
            expected,
            predicted,
        });
    }
    (cases, skips)
}
