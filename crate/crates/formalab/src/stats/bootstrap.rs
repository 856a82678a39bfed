//! Percentile bootstrap over theorem rows.
//!
//! Theorems are the exchangeable unit: configurations share theorems, so a
//! resample draws whole rows with replacement, keeping each theorem's eight
//! outcomes together. Resamples derive their RNG seed from the master seed
//! and the resample index, so runs are deterministic and parallelize freely.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::Factor;

use super::effects::{main_effect_exact, ratio_to_pp, EffectEstimate};
use super::table::{config_column, OutcomeTable, StatsError, TableProvenance};
use crate::config::ToolConfig;

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub resamples: u32,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { resamples: 10_000, seed: 0 }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Seed for resample `index` derived from the master seed.
fn resample_seed(master: u64, index: u32) -> u64 {
    splitmix64(master ^ splitmix64(index as u64 + 1))
}

/// Main effect of one resampled row set, in percentage points.
fn resampled_effect(rows: &[[bool; 8]], factor: Factor, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rows.len();
    let mut col_ones = [0u32; 8];
    for _ in 0..n {
        let row = &rows[rng.gen_range(0..n)];
        for (col, ones) in col_ones.iter_mut().enumerate() {
            *ones += row[col] as u32;
        }
    }
    let mut high = 0.0;
    let mut low = 0.0;
    for config in ToolConfig::ALL {
        let mean = col_ones[config_column(config)] as f64 / n as f64;
        if config.level(factor) {
            high += mean / 4.0;
        } else {
            low += mean / 4.0;
        }
    }
    100.0 * (high - low)
}

/// Percentile-method quantile: interpolated order statistic on the (B+1)
/// basis, the convention that takes the floor((B+1)q)-th order statistic as
/// the bound. Slightly wider than the (B-1)-basis quantile in the tails.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    // 1-indexed position in [1, n], clamped at the extremes.
    let pos = (q * (n + 1) as f64).clamp(1.0, n as f64);
    let lo = pos.floor() as usize - 1;
    let hi = (pos.ceil() as usize - 1).min(n - 1);
    let frac = pos - pos.floor();
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// 95% percentile bootstrap CI for a factor's main effect.
///
/// The point estimate is the exact complete-case effect; the interval is
/// the 2.5/97.5 percentile of the resampled effects. Deterministic for a
/// fixed seed; constant columns yield a zero-width interval.
pub fn bootstrap_ci(
    table: &OutcomeTable,
    factor: Factor,
    options: BootstrapOptions,
) -> Result<EffectEstimate, StatsError> {
    if options.resamples < 1 {
        return Err(StatsError::ZeroResamples);
    }
    if table.provenance() == TableProvenance::ColumnSummary {
        return Err(StatsError::SummaryNotResamplable);
    }
    let point_exact = main_effect_exact(table, factor)?;
    let (rows, _) = table.complete_rows();

    let mut stats: Vec<f64> = (0..options.resamples)
        .into_par_iter()
        .map(|i| resampled_effect(&rows, factor, resample_seed(options.seed, i)))
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).expect("effects are finite"));

    Ok(EffectEstimate {
        factor_or_pair: factor.letter().to_string(),
        point: ratio_to_pp(point_exact),
        ci_low: quantile(&stats, 0.025),
        ci_high: quantile(&stats, 0.975),
        resamples: options.resamples,
    })
}
