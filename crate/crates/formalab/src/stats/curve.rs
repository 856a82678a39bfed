//! Cumulative success against the step budget.

use num_rational::Ratio;

use crate::store::RunRecord;

/// Faithful rate as a function of the step budget: at budget `T`, the
/// fraction of runs that are faithful and finished within `T` steps.
/// Non-decreasing in `T` by construction.
pub fn efficiency_curve(
    entries: &[(u32, bool)],
    budgets: &[u32],
) -> Vec<(u32, Ratio<u64>)> {
    let n = entries.len() as u64;
    budgets
        .iter()
        .map(|&budget| {
            if n == 0 {
                return (budget, Ratio::new(0, 1));
            }
            let hits = entries
                .iter()
                .filter(|(steps, faithful)| *faithful && *steps <= budget)
                .count() as u64;
            (budget, Ratio::new(hits, n))
        })
        .collect()
}

/// Curve over stored runs using the consensus-faithful flag.
pub fn efficiency_curve_from_runs(runs: &[RunRecord], budgets: &[u32]) -> Vec<(u32, Ratio<u64>)> {
    let entries: Vec<(u32, bool)> = runs
        .iter()
        .map(|r| (r.steps_used, r.faithful_consensus))
        .collect();
    efficiency_curve(&entries, budgets)
}
