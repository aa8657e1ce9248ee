//! Property-based checks of structural invariants: the target notation
//! round-trips and never panics, merging is order-insensitive, every filter
//! stage only removes predictions, partitions are exact, and report
//! arithmetic stays consistent under arbitrary inputs.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use precept_core::backend::reference::ReferenceBackend;
use precept_core::backend::{merge_candidates, Backend, Candidate, DecodeConfig};
use precept_core::calibration::{pr_curve, score_case, EvalCase};
use precept_core::corpus::Language;
use precept_core::pipeline::diff::{changed_lines_from_diff, ChangedLineSet};
use precept_core::pipeline::{
    analyze_snapshot, apply_suppressions, apply_thresholds, PipelineConfig, SuppressionRule,
    SuppressionRuleSpec, ThresholdTable,
};
use precept_core::replay::linemap::{line_alignment, map_line};
use precept_core::replay::url_distribution;
use precept_core::target::{parse_target, serialize_target, TargetList, ViolationTarget};
use precept_core::{FileSnapshot, ViolationPrediction};

const EPS: f64 = 1e-9;

fn url_strategy() -> impl Strategy<Value = String> {
    ("[a-z][a-z0-9]{0,5}", "[a-z0-9._~/-]{1,20}")
        .prop_map(|(scheme, rest)| format!("{scheme}://{rest}"))
}

fn target_strategy() -> impl Strategy<Value = ViolationTarget> {
    (any::<u64>(), url_strategy()).prop_map(|(offset, url)| {
        ViolationTarget::new(offset, url).expect("generated URLs are valid")
    })
}

fn target_list_strategy() -> impl Strategy<Value = TargetList> {
    prop::collection::vec(target_strategy(), 0..8).prop_map(TargetList::new)
}

/// A deterministic Fisher-Yates so order-insensitivity can be tested without
/// a second RNG dependency.
fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut state = seed | 1;
    for i in (1..items.len()).rev() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        items.swap(i, (state % (i as u64 + 1)) as usize);
    }
}

proptest! {
    #[test]
    fn serialized_target_lists_parse_back_unchanged(list in target_list_strategy()) {
        let text = serialize_target(&list).expect("validated targets serialize");
        let reparsed = parse_target(&text).expect("serializer output parses");
        prop_assert_eq!(reparsed, list);
    }

    #[test]
    fn parser_is_total_and_canonical(text in any::<String>()) {
        match parse_target(&text) {
            Ok(list) => {
                // Whatever parsed is already canonical: serializing and
                // reparsing reproduces it exactly and no pair repeats.
                let pairs: BTreeSet<(u64, &str)> = list
                    .iter()
                    .map(|t| (t.offset, t.url.as_str()))
                    .collect();
                prop_assert_eq!(pairs.len(), list.len());
                let round = parse_target(&serialize_target(&list).unwrap()).unwrap();
                prop_assert_eq!(round, list);
            }
            Err(err) => prop_assert!(err.position <= text.len()),
        }
    }

    #[test]
    fn merging_is_order_insensitive_and_keeps_max_scores(
        raw in prop::collection::vec(
            (
                prop::collection::vec((0u64..12, 0usize..3), 0..4),
                0.0f64..=1.0,
            ),
            0..12,
        ),
        seed in any::<u64>(),
    ) {
        let urls = ["u://a", "u://b", "u://c"];
        let candidates: Vec<Candidate> = raw
            .iter()
            .map(|(pairs, score)| {
                let text = if pairs.is_empty() {
                    "EMPTY".to_string()
                } else {
                    pairs
                        .iter()
                        .map(|(off, u)| format!("INSERT {off} COMMENT {}", urls[*u]))
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                Candidate::new(text, *score)
            })
            .collect();

        let merged = merge_candidates(&candidates).expect("all candidates parse");

        // Independent oracle: max score per distinct (offset, url) pair. A
        // candidate listing a pair twice still contributes it once.
        let mut oracle: BTreeMap<(u64, String), f64> = BTreeMap::new();
        for (pairs, score) in &raw {
            for (off, u) in pairs {
                let entry = oracle.entry((*off, urls[*u].to_string())).or_insert(*score);
                if *score > *entry {
                    *entry = *score;
                }
            }
        }
        let expected: Vec<ViolationPrediction> = oracle
            .into_iter()
            .map(|((offset, url), score)| ViolationPrediction { offset, url, score })
            .collect();
        prop_assert_eq!(&merged, &expected);

        let mut reordered = candidates.clone();
        shuffle(&mut reordered, seed);
        prop_assert_eq!(merge_candidates(&reordered).unwrap(), merged.clone());

        // Idempotence: re-merging the merged predictions changes nothing.
        let singletons: Vec<Candidate> = merged
            .iter()
            .map(|p| Candidate::new(format!("INSERT {} COMMENT {}", p.offset, p.url), p.score))
            .collect();
        prop_assert_eq!(merge_candidates(&singletons).unwrap(), merged);
    }

    #[test]
    fn raising_thresholds_only_removes_predictions(
        preds in prop::collection::vec((0u64..50, 0usize..3, 0.0f64..=1.0), 0..20),
        t_a in 0.0f64..=1.0,
        t_b in 0.0f64..=1.0,
        per_url in prop::collection::btree_map(0usize..3, 0.0f64..=1.0, 0..3),
    ) {
        let urls = ["u://a", "u://b", "u://c"];
        let preds: Vec<ViolationPrediction> = preds
            .into_iter()
            .map(|(offset, u, score)| ViolationPrediction {
                offset,
                url: urls[u].to_string(),
                score,
            })
            .collect();
        let (lo, hi) = if t_a <= t_b { (t_a, t_b) } else { (t_b, t_a) };

        let table_at = |default_t: f64| ThresholdTable {
            default_t,
            per_url: BTreeMap::new(),
        };
        let kept_lo = apply_thresholds(&preds, &table_at(lo));
        let kept_hi = apply_thresholds(&preds, &table_at(hi));

        // Strict inequality against the exact default.
        let manual: Vec<&ViolationPrediction> =
            preds.iter().filter(|p| p.score > lo).collect();
        prop_assert_eq!(kept_lo.len(), manual.len());
        for (got, want) in kept_lo.iter().zip(manual) {
            prop_assert_eq!(got, want);
        }

        // Higher threshold keeps a subsequence of the lower one.
        let mut cursor = kept_lo.iter();
        for p in &kept_hi {
            prop_assert!(cursor.any(|q| q == p));
        }

        // Per-URL overrides decide each prediction independently.
        let table = ThresholdTable {
            default_t: lo,
            per_url: per_url
                .iter()
                .map(|(u, t)| (urls[*u].to_string(), *t))
                .collect(),
        };
        let kept = apply_thresholds(&preds, &table);
        let manual: Vec<&ViolationPrediction> = preds
            .iter()
            .filter(|p| p.score > *table.per_url.get(&p.url).unwrap_or(&lo))
            .collect();
        prop_assert_eq!(kept.len(), manual.len());
        for (got, want) in kept.iter().zip(manual) {
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn suppression_partitions_predictions_exactly(
        source_lines in prop::collection::vec("[ a-zA-Z0-9/]{0,30}", 1..12),
        offsets in prop::collection::vec(any::<prop::sample::Index>(), 0..12),
        scores in prop::collection::vec(0.0f64..=1.0, 12),
        url_picks in prop::collection::vec(0usize..3, 12),
        rule_specs in prop::collection::vec(
            (0usize..4, prop::option::of(0usize..3), prop::option::of(0usize..3), any::<bool>(), any::<bool>()),
            0..5,
        ),
        path_pick in 0usize..2,
    ) {
        let urls = ["u://a/x", "u://a/y", "v://b"];
        let url_patterns = ["u://", "u://a/x", "v://", "w://"];
        let source_patterns = ["[a-z]", "^/", "TODO"];
        let path_globs = ["*.go", "src/**", "*.rs"];
        let paths = ["src/pkg/a.go", "b.rs"];

        let source = source_lines.join("\n");
        let path = paths[path_pick];
        let preds: Vec<ViolationPrediction> = offsets
            .iter()
            .enumerate()
            .map(|(i, idx)| ViolationPrediction {
                offset: idx.index(source.len() + 1) as u64,
                url: urls[url_picks[i]].to_string(),
                score: scores[i],
            })
            .collect();

        let rules: Vec<SuppressionRule> = rule_specs
            .iter()
            .enumerate()
            .map(|(i, (up, sp, pg, whole_file, active))| {
                SuppressionRuleSpec {
                    url_pattern: url_patterns[*up].to_string(),
                    source_pattern: sp.map(|s| source_patterns[s].to_string()),
                    path_glob: pg.map(|g| path_globs[g].to_string()),
                    whole_file: *whole_file,
                    reason: format!("reason-{i}"),
                    active: *active,
                }
                .compile()
                .expect("fixed patterns compile")
            })
            .collect();

        let (kept, suppressed) = apply_suppressions(&preds, &source, path, &rules);
        prop_assert_eq!(kept.len() + suppressed.len(), preds.len());

        // Walking the input reproduces both partitions in order, and each
        // prediction lands on the side its first matching rule dictates.
        let mut kept_iter = kept.iter();
        let mut supp_iter = suppressed.iter();
        for pred in &preds {
            match rules.iter().find(|r| r.matches(pred, &source, path)) {
                Some(rule) => {
                    let entry = supp_iter.next().expect("suppressed entry present");
                    prop_assert_eq!(&entry.prediction, pred);
                    prop_assert_eq!(&entry.reason, &rule.spec().reason);
                }
                None => prop_assert_eq!(kept_iter.next().expect("kept entry present"), pred),
            }
        }
        prop_assert!(kept_iter.next().is_none());
        prop_assert!(supp_iter.next().is_none());
    }

    #[test]
    fn line_alignment_is_injective_ordered_and_content_preserving(
        old in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "aa"]), 0..25),
        new in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "aa"]), 0..25),
    ) {
        let old_text = old.join("\n");
        let new_text = new.join("\n");
        let map = line_alignment(&old_text, &new_text);
        prop_assert_eq!(map.len(), old_text.lines().count());

        let mut last = 0u64;
        for (i, slot) in map.iter().enumerate() {
            if let Some(n) = slot {
                prop_assert!(*n >= 1 && *n <= new.len() as u64);
                prop_assert!(*n > last, "mapped lines must stay ordered");
                last = *n;
                prop_assert_eq!(old[i], new[*n as usize - 1]);
                prop_assert_eq!(map_line(&old_text, &new_text, i as u64 + 1), Some(*n));
            }
        }
        prop_assert_eq!(map_line(&old_text, &new_text, 0), None);
        prop_assert_eq!(map_line(&old_text, &new_text, old.len() as u64 + 1), None);
    }

    #[test]
    fn url_share_table_is_ranked_and_sums_to_one(
        counts in prop::collection::btree_map("[a-c]{1,2}", 0u64..100, 0..10),
    ) {
        let shares = url_distribution(&counts);
        let total: u64 = counts.values().sum();
        let nonzero = counts.values().filter(|&&c| c > 0).count();
        prop_assert_eq!(shares.len(), nonzero);

        let mut seen_total = 0u64;
        let mut cumulative = 0.0f64;
        for (i, share) in shares.iter().enumerate() {
            prop_assert_eq!(share.rank, i as u64 + 1);
            prop_assert_eq!(share.count, counts[&share.url]);
            prop_assert!(share.count > 0);
            if i > 0 {
                let prev = &shares[i - 1];
                prop_assert!(
                    prev.count > share.count
                        || (prev.count == share.count && prev.url < share.url)
                );
            }
            prop_assert!((share.share - share.count as f64 / total as f64).abs() < EPS);
            cumulative += share.share;
            prop_assert!((share.cumulative_share - cumulative).abs() < EPS);
            seen_total += share.count;
        }
        prop_assert_eq!(seen_total, total);
        if nonzero > 0 {
            prop_assert!((shares.last().unwrap().cumulative_share - 1.0).abs() < EPS);
        }
    }

    #[test]
    fn case_scores_match_set_arithmetic_and_pool_into_the_curve(
        cases in prop::collection::vec(
            (
                prop::collection::vec((0u64..20, 0usize..2), 0..5),
                prop::collection::vec((0u64..20, 0usize..2, 0.0f64..=1.0), 0..6),
            ),
            0..8,
        ),
        grid in prop::collection::vec(0.0f64..=1.0, 1..6),
    ) {
        let urls = ["u://a", "u://b"];
        let cases: Vec<EvalCase> = cases
            .into_iter()
            .enumerate()
            .map(|(i, (expected, predicted))| EvalCase {
                example_id: format!("case-{i}"),
                expected: expected
                    .into_iter()
                    .map(|(off, u)| ViolationTarget::new(off, urls[u]).unwrap())
                    .collect(),
                predicted: predicted
                    .into_iter()
                    .map(|(offset, u, score)| ViolationPrediction {
                        offset,
                        url: urls[u].to_string(),
                        score,
                    })
                    .collect(),
            })
            .collect();
        let mut grid = grid;
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();

        for case in &cases {
            for &t in &grid {
                let score = score_case(case, t, None);
                let kept: Vec<&ViolationPrediction> =
                    case.predicted.iter().filter(|p| p.score > t).collect();
                let kept_pairs: BTreeSet<(u64, &str)> =
                    kept.iter().map(|p| (p.offset, p.url.as_str())).collect();
                let expected_pairs: BTreeSet<(u64, &str)> = case
                    .expected
                    .iter()
                    .map(|e| (e.offset, e.url.as_str()))
                    .collect();
                prop_assert_eq!(score.kept, kept.len() as u64);
                prop_assert_eq!(score.expected_count, expected_pairs.len() as u64);
                prop_assert_eq!(
                    score.correct_kept,
                    kept_pairs.intersection(&expected_pairs).count() as u64
                );
            }
        }

        let curve = pr_curve(&cases, &grid);
        prop_assert_eq!(curve.len(), grid.len());
        let total_expected: u64 = cases
            .iter()
            .map(|c| score_case(c, 0.0, None).expected_count)
            .sum();
        for window in curve.windows(2) {
            // The grid is ascending, so kept and correct counts only shrink.
            prop_assert!(window[0].kept_predictions >= window[1].kept_predictions);
            prop_assert!(window[0].correct_kept >= window[1].correct_kept);
        }
        for point in &curve {
            prop_assert!(point.correct_kept <= point.kept_predictions);
            match point.precision {
                Some(p) => {
                    prop_assert!(point.kept_predictions > 0);
                    let expect = point.correct_kept as f64 / point.kept_predictions as f64;
                    prop_assert!((p - expect).abs() < EPS);
                }
                None => prop_assert_eq!(point.kept_predictions, 0),
            }
            match point.recall {
                Some(r) => {
                    prop_assert!(total_expected > 0);
                    let expect = point.correct_kept as f64 / total_expected as f64;
                    prop_assert!((r - expect).abs() < EPS);
                }
                None => prop_assert_eq!(total_expected, 0),
            }
        }
    }
}

/// Generates file content the built-in analyzer finds interesting: comment
/// blocks with and without terminal punctuation, exported functions with
/// mismatched doc comments, and over-long lines.
fn content_strategy() -> impl Strategy<Value = String> {
    let line = prop::sample::select(vec![
        "// Documented returns a value.".to_string(),
        "// no terminal punctuation".to_string(),
        "// Wrong name for what follows.".to_string(),
        "func Documented() {}".to_string(),
        "func Exported(x int) int {".to_string(),
        "\treturn x".to_string(),
        "}".to_string(),
        "var total = 1".to_string(),
        String::new(),
        "x".repeat(120),
    ]);
    prop::collection::vec(line, 0..30).prop_map(|lines| {
        let mut text = lines.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        text
    })
}

fn snapshot(content: String) -> FileSnapshot {
    FileSnapshot {
        review_id: "review-1".to_string(),
        snapshot_id: 1,
        path: "pkg/sample.go".to_string(),
        language: Language::new("go"),
        content,
        created_at: 0,
    }
}

proptest! {
    #[test]
    fn stage_counters_account_for_every_merged_prediction(
        content in content_strategy(),
        default_t in prop::sample::select(vec![0.0, 0.5, 0.69, 0.7, 0.84, 0.98, 1.0]),
        beam_width in prop::option::of(1u32..6),
        changed in prop::option::of(prop::collection::btree_set(1u64..40, 0..15)),
        suppress_comments in any::<bool>(),
    ) {
        let backend = ReferenceBackend::default();
        let mut cfg = PipelineConfig::default();
        cfg.thresholds.default_t = default_t;
        cfg.decode = match beam_width {
            Some(w) => DecodeConfig::beam(w),
            None => DecodeConfig::greedy(),
        };
        if suppress_comments {
            cfg.rules = vec![SuppressionRuleSpec {
                url_pattern: "https://google.github.io/styleguide/".to_string(),
                source_pattern: None,
                path_glob: None,
                whole_file: false,
                reason: "style comments are paused".to_string(),
                active: true,
            }
            .compile()
            .unwrap()];
        }
        let snap = snapshot(content);
        let changed_set = changed.map(|lines| {
            let mut set = ChangedLineSet::default();
            for line in lines {
                set.insert(&snap.path, line);
            }
            set
        });

        let outcome = analyze_snapshot(&backend, &snap, changed_set.as_ref(), &cfg).unwrap();
        let stats = &outcome.stats;

        prop_assert_eq!(
            stats.merged_predictions,
            stats.out_of_range
                + stats.below_threshold
                + stats.off_changed_lines
                + stats.suppressed
                + stats.posted
        );
        prop_assert!(stats.dropped_candidates <= stats.candidates);
        prop_assert_eq!(stats.posted, outcome.comments.len() as u64);
        prop_assert_eq!(stats.suppressed, outcome.suppressed.len() as u64);
        prop_assert!(stats.missing_summary <= stats.posted);
        if changed_set.is_none() {
            prop_assert_eq!(stats.off_changed_lines, 0);
        }
        for pair in outcome.comments.windows(2) {
            prop_assert!(pair[0].start.line <= pair[1].start.line);
        }

        // Same inputs, same outcome.
        let again = analyze_snapshot(&backend, &snap, changed_set.as_ref(), &cfg).unwrap();
        prop_assert_eq!(outcome, again);
    }

    #[test]
    fn widening_the_beam_never_loses_greedy_predictions(
        content in content_strategy(),
        width in 1u32..6,
    ) {
        let backend = ReferenceBackend::default();
        let input = format!("task\n{content}");
        let greedy = merge_candidates(
            &backend.analyze_raw(&input, &DecodeConfig::greedy()).unwrap(),
        )
        .unwrap();
        let beam = merge_candidates(
            &backend.analyze_raw(&input, &DecodeConfig::beam(width)).unwrap(),
        )
        .unwrap();

        let beam_scores: BTreeMap<(u64, &str), f64> = beam
            .iter()
            .map(|p| ((p.offset, p.url.as_str()), p.score))
            .collect();
        for p in &greedy {
            match beam_scores.get(&(p.offset, p.url.as_str())) {
                Some(score) => prop_assert!((score - p.score).abs() < EPS),
                None => prop_assert!(false, "beam lost a greedy prediction"),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HunkOp {
    Context,
    Add,
    Delete,
}

/// One synthesized hunk: a gap of unchanged lines before it and the body
/// operations in order.
type HunkPlan = (u64, Vec<HunkOp>);

fn hunk_op_strategy() -> impl Strategy<Value = HunkOp> {
    prop_oneof![
        2 => Just(HunkOp::Context),
        2 => Just(HunkOp::Add),
        1 => Just(HunkOp::Delete),
    ]
}

fn file_plan_strategy() -> impl Strategy<Value = Vec<HunkPlan>> {
    prop::collection::vec(
        (0u64..5, prop::collection::vec(hunk_op_strategy(), 1..12)),
        1..4,
    )
}

/// Writes a unified diff for the planned hunks and returns the new-file line
/// numbers of every added line, computed while writing — an independent
/// account the parser must reproduce.
fn write_diff(
    files: &[(String, Vec<HunkPlan>)],
    omit_unit_lengths: bool,
    with_noise: bool,
) -> (String, ChangedLineSet) {
    let mut text = String::new();
    let mut expected = ChangedLineSet::default();
    for (path, hunks) in files {
        if with_noise {
            text.push_str(&format!("diff --git a/{path} b/{path}\n"));
            text.push_str("index 0123abc..456def0 100644\n");
        }
        text.push_str(&format!("--- a/{path}\n"));
        text.push_str(&format!("+++ b/{path}\n"));
        let mut old_cursor = 1u64;
        let mut new_cursor = 1u64;
        for (i, (gap, ops)) in hunks.iter().enumerate() {
            // Adjacent hunks would really be one hunk; keep them separated.
            let gap = gap + u64::from(i > 0);
            old_cursor += gap;
            new_cursor += gap;
            let old_len = ops
                .iter()
                .filter(|op| matches!(op, HunkOp::Context | HunkOp::Delete))
                .count() as u64;
            let new_len = ops
                .iter()
                .filter(|op| matches!(op, HunkOp::Context | HunkOp::Add))
                .count() as u64;
            let old_start = if old_len == 0 { old_cursor - 1 } else { old_cursor };
            let new_start = if new_len == 0 { new_cursor - 1 } else { new_cursor };
            let range = |start: u64, len: u64| {
                if len == 1 && omit_unit_lengths {
                    format!("{start}")
                } else {
                    format!("{start},{len}")
                }
            };
            text.push_str(&format!(
                "@@ -{} +{} @@ trailing note\n",
                range(old_start, old_len),
                range(new_start, new_len)
            ));
            let mut line_no = new_start;
            for op in ops {
                match op {
                    HunkOp::Context => {
                        text.push_str(" unchanged\n");
                        line_no += 1;
                    }
                    HunkOp::Add => {
                        text.push_str("+added\n");
                        expected.insert(path.clone(), line_no);
                        line_no += 1;
                    }
                    HunkOp::Delete => text.push_str("-removed\n"),
                }
            }
            old_cursor += old_len;
            new_cursor += new_len;
        }
        if with_noise {
            text.push_str("\\ No newline at end of file\n");
        }
    }
    (text, expected)
}

proptest! {
    #[test]
    fn synthesized_diffs_parse_to_the_planted_line_set(
        plans in prop::collection::vec(file_plan_strategy(), 1..4),
        omit_unit_lengths in any::<bool>(),
        with_noise in any::<bool>(),
    ) {
        let files: Vec<(String, Vec<HunkPlan>)> = plans
            .into_iter()
            .enumerate()
            .map(|(i, hunks)| (format!("dir/file{i}.go"), hunks))
            .collect();
        let (text, expected) = write_diff(&files, omit_unit_lengths, with_noise);
        let parsed = changed_lines_from_diff(&text).expect("synthesized diff is well-formed");
        prop_assert_eq!(parsed, expected);
    }
}
