//! The outcome table: per-theorem binary outcomes across all eight tool
//! configurations. Percentages are carried as exact rationals internally
//! and only rendered to decimals at the edge, so reproduced tables cannot
//! drift from float rounding.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ToolConfig;
use crate::store::RunRecord;

/// Which binary outcome populates the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    FaithfulConsensus,
    FaithfulPrimary,
    Compile,
}

impl MetricId {
    pub fn label(self) -> &'static str {
        match self {
            MetricId::FaithfulConsensus => "faithful_consensus",
            MetricId::FaithfulPrimary => "faithful_primary",
            MetricId::Compile => "compile",
        }
    }

    pub fn of(self, run: &RunRecord) -> bool {
        match self {
            MetricId::FaithfulConsensus => run.faithful_consensus,
            MetricId::FaithfulPrimary => run.faithful_primary,
            MetricId::Compile => run.compile_pass,
        }
    }
}

/// Where a table's cells came from. Only tables built from real per-theorem
/// rows may be bootstrapped; synthesizing rows from column percentages
/// fabricates the pairing structure resampling relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableProvenance {
    PerTheoremRows,
    ColumnSummary,
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("duplicate cell for theorem {theorem:?} config {config}")]
    DuplicateCell { theorem: String, config: ToolConfig },
    #[error("config column {0} has no filled cells")]
    MissingColumn(ToolConfig),
    #[error("column counts exceed the table size: {count} > {n}")]
    CountOverflow { count: usize, n: usize },
    #[error("bootstrap requires per-theorem rows; this table is a column summary")]
    SummaryNotResamplable,
    #[error("resamples must be at least 1")]
    ZeroResamples,
    #[error("empty table")]
    Empty,
    #[error("{0}")]
    Input(String),
}

/// Binary outcomes per (theorem, config); cells may be missing.
#[derive(Debug, Clone)]
pub struct OutcomeTable {
    theorems: Vec<String>,
    metric: MetricId,
    /// Row-major cells in `ToolConfig::ALL` column order.
    cells: Vec<[Option<bool>; 8]>,
    provenance: TableProvenance,
}

/// Column index of a configuration in `ToolConfig::ALL` order.
pub(crate) fn config_column(config: ToolConfig) -> usize {
    ToolConfig::ALL
        .iter()
        .position(|c| *c == config)
        .expect("every config is a column")
}

impl OutcomeTable {
    /// Assemble from run records, at most one record per (theorem, config).
    pub fn from_runs(runs: &[RunRecord], metric: MetricId) -> Result<Self, StatsError> {
        let mut order: Vec<String> = Vec::new();
        let mut rows: BTreeMap<String, [Option<bool>; 8]> = BTreeMap::new();
        for run in runs {
            let row = rows.entry(run.theorem_id.clone()).or_insert_with(|| {
                order.push(run.theorem_id.clone());
                [None; 8]
            });
            let col = config_column(run.config);
            if row[col].is_some() {
                return Err(StatsError::DuplicateCell {
                    theorem: run.theorem_id.clone(),
                    config: run.config,
                });
            }
            row[col] = Some(metric.of(run));
        }
        if order.is_empty() {
            return Err(StatsError::Empty);
        }
        order.sort();
        let cells = order.iter().map(|id| rows[id]).collect();
        Ok(OutcomeTable {
            theorems: order,
            metric,
            cells,
            provenance: TableProvenance::PerTheoremRows,
        })
    }

    /// Build directly from per-theorem rows (test and fixture plumbing).
    pub fn from_rows(
        theorems: Vec<String>,
        cells: Vec<[Option<bool>; 8]>,
        metric: MetricId,
    ) -> Result<Self, StatsError> {
        if theorems.len() != cells.len() {
            return Err(StatsError::Input(format!(
                "{} theorem ids but {} rows",
                theorems.len(),
                cells.len()
            )));
        }
        if theorems.is_empty() {
            return Err(StatsError::Empty);
        }
        Ok(OutcomeTable {
            theorems,
            metric,
            cells,
            provenance: TableProvenance::PerTheoremRows,
        })
    }

    /// Synthesize a table whose column means equal `count/n` per config.
    /// The result is marked as a column summary: effects work, bootstrap
    /// refuses it.
    pub fn from_column_counts(
        n: usize,
        counts: &BTreeMap<ToolConfig, usize>,
        metric: MetricId,
    ) -> Result<Self, StatsError> {
        if n == 0 {
            return Err(StatsError::Empty);
        }
        for &count in counts.values() {
            if count > n {
                return Err(StatsError::CountOverflow { count, n });
            }
        }
        let theorems: Vec<String> = (0..n).map(|i| format!("row{i:04}")).collect();
        let mut cells = vec![[None; 8]; n];
        for (config, &count) in counts {
            let col = config_column(*config);
            for (i, row) in cells.iter_mut().enumerate() {
                row[col] = Some(i < count);
            }
        }
        Ok(OutcomeTable {
            theorems,
            metric,
            cells,
            provenance: TableProvenance::ColumnSummary,
        })
    }

    pub fn metric(&self) -> MetricId {
        self.metric
    }

    pub fn provenance(&self) -> TableProvenance {
        self.provenance
    }

    pub fn theorems(&self) -> &[String] {
        &self.theorems
    }

    pub fn len(&self) -> usize {
        self.theorems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theorems.is_empty()
    }

    pub fn cell(&self, row: usize, config: ToolConfig) -> Option<bool> {
        self.cells[row][config_column(config)]
    }

    /// Mean over the filled cells of one column, as an exact rational.
    pub fn column_mean(&self, config: ToolConfig) -> Result<Ratio<i64>, StatsError> {
        let col = config_column(config);
        let mut ones = 0i64;
        let mut filled = 0i64;
        for row in &self.cells {
            if let Some(v) = row[col] {
                filled += 1;
                ones += v as i64;
            }
        }
        if filled == 0 {
            return Err(StatsError::MissingColumn(config));
        }
        Ok(Ratio::new(ones, filled))
    }

    /// All (theorem, config) holes in the matrix.
    pub fn missing_cells(&self) -> Vec<(String, ToolConfig)> {
        let mut missing = Vec::new();
        for (row_idx, row) in self.cells.iter().enumerate() {
            for (col, cell) in row.iter().enumerate() {
                if cell.is_none() {
                    missing.push((self.theorems[row_idx].clone(), ToolConfig::ALL[col]));
                }
            }
        }
        missing
    }

    /// Rows with every column filled (complete-case analysis), plus the ids
    /// of excluded theorems. Effect estimators work on complete rows only.
    pub fn complete_rows(&self) -> (Vec<[bool; 8]>, Vec<String>) {
        let mut complete = Vec::with_capacity(self.cells.len());
        let mut excluded = Vec::new();
        for (idx, row) in self.cells.iter().enumerate() {
            if row.iter().all(Option::is_some) {
                let mut out = [false; 8];
                for (i, cell) in row.iter().enumerate() {
                    out[i] = cell.unwrap();
                }
                complete.push(out);
            } else {
                excluded.push(self.theorems[idx].clone());
            }
        }
        (complete, excluded)
    }

    /// Column means over complete rows only, in `ToolConfig::ALL` order.
    pub fn complete_case_means(&self) -> Result<[Ratio<i64>; 8], StatsError> {
        let (rows, excluded) = self.complete_rows();
        if rows.is_empty() {
            // Distinguish "a column has no data at all" from "no row is complete".
            for config in ToolConfig::ALL {
                self.column_mean(config)?;
            }
            return Err(StatsError::Input(format!(
                "no complete rows ({} theorems all have missing cells)",
                excluded.len()
            )));
        }
        if !excluded.is_empty() {
            log::warn!(
                "complete-case analysis excludes {} theorems with missing cells",
                excluded.len()
            );
        }
        let n = rows.len() as i64;
        let mut means = [Ratio::new(0, 1); 8];
        for (col, mean) in means.iter_mut().enumerate() {
            let ones = rows.iter().filter(|r| r[col]).count() as i64;
            *mean = Ratio::new(ones, n);
        }
        Ok(means)
    }
}

/// Render a rational (already in percentage points) to two decimals.
pub fn percent_2dp(value: Ratio<i64>) -> String {
    let scaled = value * Ratio::new(100, 1);
    let rounded = scaled.round().to_integer();
    let sign = if rounded < 0 { "-" } else { "" };
    let abs = rounded.abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(code: &str) -> ToolConfig {
        code.parse().unwrap()
    }

    #[test]
    fn column_counts_reproduce_requested_means() {
        let counts: BTreeMap<ToolConfig, usize> = ToolConfig::ALL
            .iter()
            .zip([79usize, 132, 245, 248, 98, 144, 235, 242])
            .map(|(c, n)| (*c, n))
            .collect();
        let table =
            OutcomeTable::from_column_counts(400, &counts, MetricId::FaithfulConsensus).unwrap();
        assert_eq!(table.len(), 400);
        assert_eq!(table.column_mean(cfg("000")).unwrap(), Ratio::new(79, 400));
        assert!(table.missing_cells().is_empty());
        assert_eq!(table.provenance(), TableProvenance::ColumnSummary);
    }

    #[test]
    fn missing_cells_are_listed() {
        let mut row = [None; 8];
        row[0] = Some(true);
        let table =
            OutcomeTable::from_rows(vec!["t1".into()], vec![row], MetricId::Compile).unwrap();
        assert_eq!(table.missing_cells().len(), 7);
        let (complete, excluded) = table.complete_rows();
        assert!(complete.is_empty());
        assert_eq!(excluded, vec!["t1".to_string()]);
    }

    #[test]
    fn duplicate_cell_is_named() {
        use crate::store::RunRecord;
        let run = |config: &str| RunRecord {
            theorem_id: "t1".into(),
            config: cfg(config),
            orchestrator_id: "o".into(),
            steps_used: 1,
            final_code: None,
            compile_pass: false,
            verdicts: Default::default(),
            faithful_primary: false,
            faithful_consensus: false,
            transcript_ref: "x".into(),
            wall_time_ms: 0,
            judge_invalid: vec![],
        };
        let err = OutcomeTable::from_runs(&[run("111"), run("111")], MetricId::Compile);
        match err {
            Err(StatsError::DuplicateCell { theorem, config }) => {
                assert_eq!(theorem, "t1");
                assert_eq!(config, cfg("111"));
            }
            other => panic!("expected duplicate cell, got {other:?}"),
        }
    }

    #[test]
    fn percent_rendering_is_exact_on_the_quarter_grid() {
        assert_eq!(percent_2dp(Ratio::new(79, 4)), "19.75");
        assert_eq!(percent_2dp(Ratio::new(485, 8)), "60.63"); // 60.625 rounds half away from zero
        assert_eq!(percent_2dp(Ratio::new(-2, 1)), "-2.00");
        assert_eq!(percent_2dp(Ratio::new(0, 1)), "0.00");
    }
}
