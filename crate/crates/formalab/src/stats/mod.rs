//! Factorial analysis over per-theorem binary outcomes.

pub mod bootstrap;
pub mod curve;
pub mod domain;
pub mod effects;
pub mod table;
pub mod usage;

pub use bootstrap::{bootstrap_ci, BootstrapOptions};
pub use curve::efficiency_curve;
pub use domain::{domain_breakdown, domain_effects};
pub use effects::{gain_vs_baseline, interaction, main_effect, simple_effect, EffectEstimate};
pub use table::{MetricId, OutcomeTable, StatsError, TableProvenance};
pub use usage::{usage_summary, UsageCounts, UsageSummary};
