//! Per-domain breakdowns and domain-level factor effects.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::Serialize;

use crate::config::Factor;
use crate::corpus::Domain;
use crate::store::RunRecord;

use super::effects::{main_effect_exact, simple_effect_exact};
use super::table::{MetricId, OutcomeTable, StatsError};

/// One domain's row in the per-configuration metrics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainRow {
    pub domain: Domain,
    pub n: usize,
    pub compile_rate: Ratio<i64>,
    pub faithful_rate: Ratio<i64>,
    /// faithful / compile; `None` when nothing compiled.
    pub conditional_faithful: Option<Ratio<i64>>,
    pub mean_steps: Ratio<i64>,
    /// Midpoint of the two central values for even counts.
    pub median_steps: Ratio<i64>,
    /// Set when the domain has no runs; the numeric fields are then zero.
    pub empty: bool,
}

/// Median with the midpoint convention for even counts.
fn median(sorted: &[u32]) -> Ratio<i64> {
    let n = sorted.len();
    if n == 0 {
        return Ratio::new(0, 1);
    }
    if n % 2 == 1 {
        Ratio::new(sorted[n / 2] as i64, 1)
    } else {
        Ratio::new(sorted[n / 2 - 1] as i64 + sorted[n / 2] as i64, 2)
    }
}

/// Per-domain compile rate, faithful rate, conditional faithfulness, and
/// step statistics for one configuration's runs.
pub fn domain_breakdown(
    runs: &[RunRecord],
    domains: &BTreeMap<String, Domain>,
    metric: MetricId,
) -> Vec<DomainRow> {
    let mut grouped: BTreeMap<Domain, Vec<&RunRecord>> = BTreeMap::new();
    for run in runs {
        if let Some(domain) = domains.get(&run.theorem_id) {
            grouped.entry(*domain).or_default().push(run);
        }
    }
    Domain::ALL
        .iter()
        .map(|&domain| {
            let runs = grouped.get(&domain).map(Vec::as_slice).unwrap_or(&[]);
            let n = runs.len();
            if n == 0 {
                return DomainRow {
                    domain,
                    n: 0,
                    compile_rate: Ratio::new(0, 1),
                    faithful_rate: Ratio::new(0, 1),
                    conditional_faithful: None,
                    mean_steps: Ratio::new(0, 1),
                    median_steps: Ratio::new(0, 1),
                    empty: true,
                };
            }
            let compiled = runs.iter().filter(|r| r.compile_pass).count() as i64;
            let faithful = runs.iter().filter(|r| metric.of(r)).count() as i64;
            let steps_total: i64 = runs.iter().map(|r| r.steps_used as i64).sum();
            let mut steps: Vec<u32> = runs.iter().map(|r| r.steps_used).collect();
            steps.sort_unstable();
            DomainRow {
                domain,
                n,
                compile_rate: Ratio::new(compiled, n as i64),
                faithful_rate: Ratio::new(faithful, n as i64),
                conditional_faithful: (compiled > 0)
                    .then(|| Ratio::new(faithful, compiled)),
                mean_steps: Ratio::new(steps_total, n as i64),
                median_steps: median(&steps),
                empty: false,
            }
        })
        .collect()
}

/// One domain's factor contrast.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainEffectRow {
    pub domain: Option<Domain>,
    /// Mean outcome at the factor's low level (fraction, not pp).
    pub low_mean: Ratio<i64>,
    pub high_mean: Ratio<i64>,
    pub delta: Ratio<i64>,
}

/// Domain-wise effect of a factor, optionally conditioned on another
/// factor's level. Returns one row per domain plus an unweighted average
/// row (domain = `None`).
pub fn domain_effects(
    tables: &BTreeMap<Domain, OutcomeTable>,
    factor: Factor,
    conditioned_on: Option<(Factor, bool)>,
) -> Result<Vec<DomainEffectRow>, StatsError> {
    let mut rows = Vec::new();
    let mut sum_low = Ratio::new(0, 1);
    let mut sum_high = Ratio::new(0, 1);
    for (&domain, table) in tables {
        let means = table.complete_case_means()?;
        let select = |level: bool| {
            let mut total = Ratio::new(0i64, 1);
            let mut count = 0i64;
            for config in crate::config::ToolConfig::ALL {
                if config.level(factor) != level {
                    continue;
                }
                if let Some((cond, cond_level)) = conditioned_on {
                    if config.level(cond) != cond_level {
                        continue;
                    }
                }
                total += means[super::table::config_column(config)];
                count += 1;
            }
            total / Ratio::new(count, 1)
        };
        let low = select(false);
        let high = select(true);
        sum_low += low;
        sum_high += high;
        rows.push(DomainEffectRow { domain: Some(domain), low_mean: low, high_mean: high, delta: high - low });
    }
    if rows.is_empty() {
        return Err(StatsError::Empty);
    }
    let k = Ratio::new(rows.len() as i64, 1);
    let avg_low = sum_low / k;
    let avg_high = sum_high / k;
    rows.push(DomainEffectRow {
        domain: None,
        low_mean: avg_low,
        high_mean: avg_high,
        delta: avg_high - avg_low,
    });
    Ok(rows)
}

/// Sanity link between the two views: an unconditioned domain effect equals
/// the main effect computed on that domain's table.
pub fn domain_main_effect(table: &OutcomeTable, factor: Factor) -> Result<Ratio<i64>, StatsError> {
    main_effect_exact(table, factor)
}

/// Conditioned domain effect equals the simple effect on that table.
pub fn domain_simple_effect(
    table: &OutcomeTable,
    factor: Factor,
    conditioned: (Factor, bool),
) -> Result<Ratio<i64>, StatsError> {
    simple_effect_exact(table, factor, conditioned)
}
