//! Factorial effect estimators.
//!
//! With `Y(c)` the column mean of configuration `c`:
//!
//! * main effect of X: mean of Y over the four columns with X=1 minus the
//!   mean over the four with X=0;
//! * simple effect of X at W=w: the same contrast restricted to the columns
//!   with W=w, averaging over the remaining factor;
//! * interaction X×W: the simple effect of X at W=1 minus the simple effect
//!   of X at W=0 (no extra 1/2 factor), which is symmetric in X and W.
//!
//! All arithmetic is exact rational; points convert to percentage-point
//! floats only at the boundary.

use num_rational::Ratio;
use serde::Serialize;

use crate::config::{Factor, FactorPair, ToolConfig};

use super::table::{config_column, OutcomeTable, StatsError};

/// A point estimate in percentage points with an optional bootstrap CI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub factor_or_pair: String,
    /// Percentage points.
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Zero when no resampling was performed.
    pub resamples: u32,
}

impl EffectEstimate {
    fn point_only(label: String, point: Ratio<i64>) -> Self {
        let pp = ratio_to_pp(point);
        EffectEstimate { factor_or_pair: label, point: pp, ci_low: pp, ci_high: pp, resamples: 0 }
    }
}

/// Rational outcome fraction to percentage points.
pub fn ratio_to_pp(value: Ratio<i64>) -> f64 {
    100.0 * (*value.numer() as f64) / (*value.denom() as f64)
}

fn mean_where(
    means: &[Ratio<i64>; 8],
    predicate: impl Fn(ToolConfig) -> bool,
) -> Ratio<i64> {
    let mut total = Ratio::new(0, 1);
    let mut count = 0i64;
    for config in ToolConfig::ALL {
        if predicate(config) {
            total += means[config_column(config)];
            count += 1;
        }
    }
    debug_assert!(count > 0, "factor predicates always select columns");
    total / Ratio::new(count, 1)
}

/// Exact main effect as an outcome fraction (not yet percentage points).
pub fn main_effect_exact(table: &OutcomeTable, factor: Factor) -> Result<Ratio<i64>, StatsError> {
    let means = table.complete_case_means()?;
    Ok(mean_where(&means, |c| c.level(factor)) - mean_where(&means, |c| !c.level(factor)))
}

/// Factorial main effect in percentage points, averaged uniformly over the
/// other two factors.
pub fn main_effect(table: &OutcomeTable, factor: Factor) -> Result<EffectEstimate, StatsError> {
    let point = main_effect_exact(table, factor)?;
    Ok(EffectEstimate::point_only(factor.letter().to_string(), point))
}

/// Exact simple effect of `factor` with `conditioned.0` fixed at level
/// `conditioned.1`, averaging over the remaining factor.
pub fn simple_effect_exact(
    table: &OutcomeTable,
    factor: Factor,
    conditioned: (Factor, bool),
) -> Result<Ratio<i64>, StatsError> {
    let (cond_factor, cond_level) = conditioned;
    if cond_factor == factor {
        return Err(StatsError::Input(format!(
            "cannot condition the {factor} effect on {factor} itself"
        )));
    }
    let means = table.complete_case_means()?;
    let high = mean_where(&means, |c| {
        c.level(factor) && c.level(cond_factor) == cond_level
    });
    let low = mean_where(&means, |c| {
        !c.level(factor) && c.level(cond_factor) == cond_level
    });
    Ok(high - low)
}

/// Simple effect in percentage points.
pub fn simple_effect(
    table: &OutcomeTable,
    factor: Factor,
    conditioned: (Factor, bool),
) -> Result<EffectEstimate, StatsError> {
    let point = simple_effect_exact(table, factor, conditioned)?;
    let label = format!(
        "d{}({}={})",
        factor.letter(),
        conditioned.0.letter(),
        conditioned.1 as u8
    );
    Ok(EffectEstimate::point_only(label, point))
}

/// Exact interaction: difference in the first factor's simple effects
/// across the second factor's levels.
pub fn interaction_exact(table: &OutcomeTable, pair: FactorPair) -> Result<Ratio<i64>, StatsError> {
    let FactorPair(x, w) = pair;
    if x == w {
        return Err(StatsError::Input("interaction needs two distinct factors".into()));
    }
    let at_high = simple_effect_exact(table, x, (w, true))?;
    let at_low = simple_effect_exact(table, x, (w, false))?;
    Ok(at_high - at_low)
}

/// Interaction in percentage points.
pub fn interaction(table: &OutcomeTable, pair: FactorPair) -> Result<EffectEstimate, StatsError> {
    let point = interaction_exact(table, pair)?;
    Ok(EffectEstimate::point_only(pair.label(), point))
}

/// Gain of each non-baseline configuration over 000, in percentage points,
/// in ascending config-code order.
pub fn gain_vs_baseline(
    table: &OutcomeTable,
) -> Result<Vec<(ToolConfig, Ratio<i64>)>, StatsError> {
    let baseline = table.column_mean(ToolConfig::BASELINE)?;
    ToolConfig::ALL
        .iter()
        .filter(|c| !c.is_baseline())
        .map(|c| Ok((*c, table.column_mean(*c)? - baseline)))
        .collect()
}
