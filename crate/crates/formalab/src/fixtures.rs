//! Synthetic data builders: planted run stores, step multisets with exact
//! means and medians, and Bernoulli outcome tables. Used by the desk-scale
//! smoke mode, the test suites, and the guide examples.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ToolConfig;
use crate::judge::JudgeVerdict;
use crate::stats::table::{MetricId, OutcomeTable};
use crate::store::RunRecord;

/// A judged run with verdicts from two judges. `grades` are the
/// (primary, secondary) judge grades; faithful flags are derived.
pub fn judged_run(
    theorem_id: &str,
    config: ToolConfig,
    orchestrator_id: &str,
    compile_pass: bool,
    grades: (u8, u8),
    steps_used: u32,
    judges: (&str, &str),
) -> RunRecord {
    let verdict = |judge_id: &str, grade: u8| JudgeVerdict {
        judge_id: judge_id.to_string(),
        faithful: compile_pass && grade >= crate::judge::FAITHFUL_GRADE_THRESHOLD,
        grade,
        thought: "### BEGIN THOUGHT\nplanted\n### END THOUGHT".into(),
    };
    let (primary_id, secondary_id) = judges;
    let (primary_grade, secondary_grade) = grades;
    let faithful_primary =
        compile_pass && primary_grade >= crate::judge::FAITHFUL_GRADE_THRESHOLD;
    let faithful_secondary =
        compile_pass && secondary_grade >= crate::judge::FAITHFUL_GRADE_THRESHOLD;
    let mut verdicts = BTreeMap::new();
    verdicts.insert(primary_id.to_string(), verdict(primary_id, primary_grade));
    verdicts.insert(secondary_id.to_string(), verdict(secondary_id, secondary_grade));
    RunRecord {
        theorem_id: theorem_id.to_string(),
        config,
        orchestrator_id: orchestrator_id.to_string(),
        steps_used,
        final_code: compile_pass
            .then(|| format!("import Mathlib\n\ntheorem {theorem_id} : 1 + 1 = 2 := by sorry\n")),
        compile_pass,
        verdicts,
        faithful_primary,
        faithful_consensus: faithful_primary && faithful_secondary,
        transcript_ref: format!("planted-{theorem_id}-{config}"),
        wall_time_ms: 1,
        judge_invalid: Vec::new(),
    }
}

/// Planted verdict-set sizes for one system of `n` runs: `consensus` runs
/// faithful under both judges, `primary_only` under the primary alone,
/// `secondary_only` under the secondary alone, the rest under neither.
pub fn system_runs(
    n: usize,
    orchestrator_id: &str,
    config: ToolConfig,
    consensus: usize,
    primary_only: usize,
    secondary_only: usize,
    judges: (&str, &str),
) -> Vec<RunRecord> {
    assert!(consensus + primary_only + secondary_only <= n);
    (0..n)
        .map(|i| {
            let grades = if i < consensus {
                (10, 10)
            } else if i < consensus + primary_only {
                (9, 8)
            } else if i < consensus + primary_only + secondary_only {
                (8, 9)
            } else {
                (5, 5)
            };
            judged_run(
                &format!("{orchestrator_id}_{}_t{i:03}", config.code()),
                config,
                orchestrator_id,
                true,
                grades,
                1,
                judges,
            )
        })
        .collect()
}

/// A multiset of `n` step counts in `[1, cap]` with an exact sum and exact
/// central order statistics: the sorted multiset has `x[n/2 - 1] = med_lo`
/// and `x[n/2] = med_hi` (so the midpoint median is `(med_lo + med_hi)/2`).
pub fn steps_multiset(n: usize, total: u32, med_lo: u32, med_hi: u32, cap: u32) -> Vec<u32> {
    assert!(n >= 2 && n % 2 == 0, "even n keeps the construction simple");
    assert!(med_lo <= med_hi && med_hi <= cap && med_lo >= 1);
    let half = n / 2;
    let mut values = Vec::with_capacity(n);
    values.extend(std::iter::repeat(med_lo).take(half));
    values.extend(std::iter::repeat(med_hi).take(half));
    let base: u32 = values.iter().sum();
    let mut deficit = total
        .checked_sub(base)
        .expect("total must be at least the base sum");
    // Raise entries strictly above the upper-median slot; the two central
    // order statistics stay pinned.
    let headroom = (cap - med_hi) as u64 * (half as u64 - 1);
    assert!(deficit as u64 <= headroom, "total {total} unreachable under cap {cap}");
    for value in values.iter_mut().skip(half + 1) {
        if deficit == 0 {
            break;
        }
        let add = deficit.min(cap - med_hi);
        *value += add;
        deficit -= add;
    }
    values.sort_unstable();
    debug_assert_eq!(values.iter().sum::<u32>(), total);
    debug_assert_eq!(values[half - 1], med_lo);
    debug_assert_eq!(values[half], med_hi);
    values
}

/// Per-theorem table with independent Bernoulli outcomes per configuration.
/// Column `i` of every row is 1 with probability `probs[i]`.
pub fn bernoulli_table(seed: u64, n: usize, probs: &[f64; 8]) -> OutcomeTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = [None; 8];
        for (col, p) in probs.iter().enumerate() {
            row[col] = Some(rng.gen_bool(*p));
        }
        rows.push(row);
    }
    OutcomeTable::from_rows(
        (0..n).map(|i| format!("t{i:04}")).collect(),
        rows,
        MetricId::FaithfulConsensus,
    )
    .expect("non-empty synthetic table")
}

/// True main effect for Bernoulli column probabilities, in percentage points.
pub fn bernoulli_true_effect(probs: &[f64; 8], factor: crate::config::Factor) -> f64 {
    let mut high = 0.0;
    let mut low = 0.0;
    for (col, config) in ToolConfig::ALL.iter().enumerate() {
        if config.level(factor) {
            high += probs[col] / 4.0;
        } else {
            low += probs[col] / 4.0;
        }
    }
    100.0 * (high - low)
}
