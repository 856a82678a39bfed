//! Analysis assembly and the self-contained report bundle.
//!
//! The bundle is a directory of machine-readable TSV tables, static SVG
//! plots, and a manifest hashing the input store, so every number in a
//! write-up traces back to stored runs. Table bytes are deterministic:
//! fixed orderings, rational arithmetic, fixed decimal rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::Serialize;

use crate::config::{Factor, FactorPair, ToolConfig};
use crate::corpus::{Corpus, Domain};
use crate::judge::{consensus_summary, containment_report, ContainmentReport};
use crate::stats::bootstrap::{bootstrap_ci, BootstrapOptions};
use crate::stats::curve::efficiency_curve_from_runs;
use crate::stats::domain::{domain_breakdown, domain_effects, DomainEffectRow, DomainRow};
use crate::stats::effects::{
    interaction, main_effect, ratio_to_pp, simple_effect, EffectEstimate,
};
use crate::stats::table::{percent_2dp, MetricId, OutcomeTable, StatsError, TableProvenance};
use crate::stats::usage::{usage_summary, UsageSummary};
use crate::store::{RunFilter, RunRecord, RunStore};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// One row of the eight-configuration factorial table.
#[derive(Debug, Clone, Serialize)]
pub struct FactorialRow {
    pub config: ToolConfig,
    pub n: usize,
    pub compile_rate: Ratio<i64>,
    pub faithful_rate: Ratio<i64>,
    /// Percentage points over the 000 baseline; `None` for the baseline row.
    pub gain_pp: Option<Ratio<i64>>,
}

/// Everything the analyze step computes, in one bundle-ready struct.
#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub experiment_id: String,
    pub orchestrator_id: String,
    pub metric: MetricId,
    pub factorial: Vec<FactorialRow>,
    pub main_effects: Vec<EffectEstimate>,
    pub simple_effects: Vec<EffectEstimate>,
    pub interactions: Vec<EffectEstimate>,
    pub consensus: Vec<ConsensusRow>,
    pub containment: Option<ContainmentReport>,
    /// Cumulative faithful rate (percent) per budget for the focus config.
    pub efficiency: Vec<(u32, f64)>,
    pub efficiency_config: ToolConfig,
    pub domain_metrics: Vec<DomainRow>,
    pub domain_effect_feedback: Vec<DomainEffectRow>,
    pub domain_search_low: Vec<DomainEffectRow>,
    pub domain_search_high: Vec<DomainEffectRow>,
    pub usage: UsageSummary,
    pub missing_cells: Vec<(String, ToolConfig)>,
    pub judge_invalid: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsensusRow {
    pub config: ToolConfig,
    pub pass_primary: usize,
    pub pass_secondary: usize,
    pub pass_consensus: usize,
    pub consensus_rate_pct: Option<f64>,
}

/// Options for the analyze step.
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub metric: MetricId,
    pub bootstrap: BootstrapOptions,
    pub primary_judge: String,
    pub secondary_judge: String,
    /// Config whose runs feed the efficiency curve and domain tables.
    pub focus_config: ToolConfig,
    pub t_max: u32,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            metric: MetricId::FaithfulConsensus,
            bootstrap: BootstrapOptions::default(),
            primary_judge: "primary".into(),
            secondary_judge: "secondary".into(),
            focus_config: "111".parse().expect("valid code"),
            t_max: crate::runner::DEFAULT_T_MAX,
        }
    }
}

/// Run the full analysis over one orchestrator's stored runs.
pub fn analyze(
    store: &RunStore,
    corpus: &Corpus,
    orchestrator_id: &str,
    options: &AnalyzeOptions,
) -> Result<Analysis, ReportError> {
    let all_runs = store.query_runs(&RunFilter {
        orchestrator_id: Some(orchestrator_id.to_string()),
        ..Default::default()
    });
    let table = OutcomeTable::from_runs(&all_runs, options.metric)?;
    let compile_table = OutcomeTable::from_runs(&all_runs, MetricId::Compile)?;
    let missing_cells = table.missing_cells();
    let complete = missing_cells.is_empty();

    // Factorial table rows.
    let mut factorial = Vec::new();
    let baseline_mean = table.column_mean(ToolConfig::BASELINE).ok();
    for config in ToolConfig::ALL {
        let runs_for = |cfg| {
            all_runs
                .iter()
                .filter(|r| r.config == cfg)
                .count()
        };
        let faithful_rate = match table.column_mean(config) {
            Ok(mean) => mean,
            Err(_) => continue, // column entirely missing: skip the row
        };
        let compile_rate = compile_table
            .column_mean(config)
            .unwrap_or_else(|_| Ratio::new(0, 1));
        let gain_pp = if config.is_baseline() {
            None
        } else {
            baseline_mean.map(|b| (faithful_rate - b) * Ratio::new(100, 1))
        };
        factorial.push(FactorialRow {
            config,
            n: runs_for(config),
            compile_rate,
            faithful_rate,
            gain_pp,
        });
    }

    // Effects need all eight columns; on partial stores leave them empty.
    let mut main_effects = Vec::new();
    let mut simple_effects = Vec::new();
    let mut interactions = Vec::new();
    if factorial.len() == 8 {
        for factor in [Factor::Feedback, Factor::Search, Factor::Translator] {
            let mut estimate =
                if complete && table.provenance() == TableProvenance::PerTheoremRows {
                    bootstrap_ci(&table, factor, options.bootstrap)?
                } else {
                    main_effect(&table, factor)?
                };
            estimate.factor_or_pair = factor.name().to_string();
            main_effects.push(estimate);
        }
        for (factor, level) in [
            (Factor::Search, false),
            (Factor::Search, true),
            (Factor::Translator, false),
            (Factor::Translator, true),
        ] {
            simple_effects.push(simple_effect(&table, factor, (Factor::Feedback, level))?);
        }
        for pair in FactorPair::ALL {
            interactions.push(interaction(&table, pair)?);
        }
    }

    // Judge agreement per configuration.
    let mut consensus = Vec::new();
    let mut judge_invalid = 0;
    for config in ToolConfig::ALL {
        let runs: Vec<RunRecord> = all_runs
            .iter()
            .filter(|r| r.config == config)
            .cloned()
            .collect();
        if runs.is_empty() {
            continue;
        }
        judge_invalid += runs.iter().filter(|r| !r.judge_invalid.is_empty()).count();
        let summary =
            consensus_summary(&runs, &options.primary_judge, &options.secondary_judge);
        consensus.push(ConsensusRow {
            config,
            pass_primary: summary.pass_primary,
            pass_secondary: summary.pass_secondary,
            pass_consensus: summary.pass_consensus,
            consensus_rate_pct: summary.consensus_rate_percent(),
        });
    }
    let containment = (!all_runs.is_empty()).then(|| {
        containment_report(
            &all_runs,
            corpus,
            &options.primary_judge,
            &options.secondary_judge,
        )
    });

    // Efficiency curve and domain tables over the focus configuration.
    let focus_runs: Vec<RunRecord> = all_runs
        .iter()
        .filter(|r| r.config == options.focus_config)
        .cloned()
        .collect();
    let budgets: Vec<u32> = (0..=options.t_max).collect();
    let efficiency = efficiency_curve_from_runs(&focus_runs, &budgets)
        .into_iter()
        .map(|(b, r)| (b, 100.0 * (*r.numer() as f64) / (*r.denom() as f64)))
        .collect();

    let domains: BTreeMap<String, Domain> = corpus
        .items()
        .iter()
        .map(|i| (i.id.clone(), i.domain))
        .collect();
    let domain_metrics = domain_breakdown(&focus_runs, &domains, options.metric);

    // Per-domain tables for factor effects.
    let mut per_domain_tables: BTreeMap<Domain, OutcomeTable> = BTreeMap::new();
    if complete {
        for domain in Domain::ALL {
            let runs: Vec<RunRecord> = all_runs
                .iter()
                .filter(|r| domains.get(&r.theorem_id) == Some(&domain))
                .cloned()
                .collect();
            if !runs.is_empty() {
                per_domain_tables.insert(domain, OutcomeTable::from_runs(&runs, options.metric)?);
            }
        }
    }
    let (domain_effect_feedback, domain_search_low, domain_search_high) =
        if per_domain_tables.is_empty() {
            (Vec::new(), Vec::new(), Vec::new())
        } else {
            (
                domain_effects(&per_domain_tables, Factor::Feedback, None)?,
                domain_effects(&per_domain_tables, Factor::Search, Some((Factor::Feedback, false)))?,
                domain_effects(&per_domain_tables, Factor::Search, Some((Factor::Feedback, true)))?,
            )
        };

    // Tool usage over every stored transcript.
    let mut transcripts = Vec::new();
    for run in &all_runs {
        if let Ok(t) = store.load_transcript(&run.transcript_ref) {
            transcripts.push((run.config, t));
        }
    }
    let usage = usage_summary(transcripts.iter().map(|(c, t)| (*c, t)));

    Ok(Analysis {
        experiment_id: store.meta().experiment_id.clone(),
        orchestrator_id: orchestrator_id.to_string(),
        metric: options.metric,
        factorial,
        main_effects,
        simple_effects,
        interactions,
        consensus,
        containment,
        efficiency,
        efficiency_config: options.focus_config,
        domain_metrics,
        domain_effect_feedback,
        domain_search_low,
        domain_search_high,
        usage,
        missing_cells,
        judge_invalid,
    })
}

fn fmt_pp(points: f64) -> String {
    format!("{points:+.1}")
}

fn fmt_rate(rate: Ratio<i64>) -> String {
    percent_2dp(rate * Ratio::new(100, 1))
}

impl Analysis {
    /// Plain-text tables for terminal output.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "experiment {} / orchestrator {} / metric {}",
            self.experiment_id,
            self.orchestrator_id,
            self.metric.label()
        );
        let _ = writeln!(out, "\nfactorial table (T F S | n | compile% | faithful% | gain pts)");
        for row in &self.factorial {
            let gain = row
                .gain_pp
                .map(|g| fmt_pp(ratio_f64(g)))
                .unwrap_or_else(|| "--".into());
            let code = row.config.code();
            let (t, f, s) = (&code[0..1], &code[1..2], &code[2..3]);
            let _ = writeln!(
                out,
                "  {t} {f} {s} | {:>4} | {:>6} | {:>6} | {gain}",
                row.n,
                fmt_rate(row.compile_rate),
                fmt_rate(row.faithful_rate),
            );
        }
        if !self.main_effects.is_empty() {
            let _ = writeln!(out, "\nmain effects (pts, 95% bootstrap CI)");
            for e in &self.main_effects {
                let _ = writeln!(
                    out,
                    "  {:<16} {:>6} [{:.1}, {:.1}] B={}",
                    e.factor_or_pair,
                    fmt_pp(e.point),
                    e.ci_low,
                    e.ci_high,
                    e.resamples
                );
            }
            let _ = writeln!(out, "\nsimple effects (pts)");
            for e in &self.simple_effects {
                let _ = writeln!(out, "  {:<10} {}", e.factor_or_pair, fmt_pp(e.point));
            }
            let _ = writeln!(out, "\ninteractions (pts)");
            for e in &self.interactions {
                let _ = writeln!(out, "  {:<6} {}", e.factor_or_pair, fmt_pp(e.point));
            }
        }
        if !self.consensus.is_empty() {
            let _ = writeln!(out, "\njudge consensus (config | primary | secondary | consensus | rate)");
            for row in &self.consensus {
                let rate = row
                    .consensus_rate_pct
                    .map(|r| format!("{r:.1}%"))
                    .unwrap_or_else(|| "undefined".into());
                let _ = writeln!(
                    out,
                    "  {} | {:>4} | {:>4} | {:>4} | {rate}",
                    row.config, row.pass_primary, row.pass_secondary, row.pass_consensus
                );
            }
        }
        if !self.missing_cells.is_empty() {
            let _ = writeln!(out, "\nWARNING: {} missing cells", self.missing_cells.len());
        }
        if self.judge_invalid > 0 {
            let _ = writeln!(out, "judge-invalid runs: {}", self.judge_invalid);
        }
        out
    }
}

/// Paths produced by `emit_report`.
#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub tables: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Write the bundle: TSV tables, SVG plots, and a manifest with the store
/// hash. Partial experiments produce explicit missing-cell annotations.
pub fn emit_report(
    analysis: &Analysis,
    store: &RunStore,
    out_dir: impl AsRef<Path>,
) -> Result<ReportBundle, ReportError> {
    let dir = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(dir.join("tables"))?;
    std::fs::create_dir_all(dir.join("plots"))?;
    let mut tables = Vec::new();
    let mut plots = Vec::new();

    let write_table = |name: &str, content: String| -> Result<PathBuf, ReportError> {
        let path = dir.join("tables").join(name);
        std::fs::write(&path, content)?;
        Ok(path)
    };

    // Factorial table.
    let mut tsv = String::from("config\tn\tcompile_pct\tfaithful_pct\tgain_pts\n");
    for row in &analysis.factorial {
        let gain = row
            .gain_pp
            .map(percent_2dp)
            .unwrap_or_else(|| "".into());
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}",
            row.config,
            row.n,
            fmt_rate(row.compile_rate),
            fmt_rate(row.faithful_rate),
            gain
        );
    }
    tables.push(write_table("factorial.tsv", tsv)?);

    // Effects.
    let mut tsv = String::from("effect\tpoint_pts\tci_low\tci_high\tresamples\n");
    for e in analysis
        .main_effects
        .iter()
        .chain(&analysis.simple_effects)
        .chain(&analysis.interactions)
    {
        let _ = writeln!(
            tsv,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{}",
            e.factor_or_pair, e.point, e.ci_low, e.ci_high, e.resamples
        );
    }
    tables.push(write_table("effects.tsv", tsv)?);

    // Judge consensus.
    let mut tsv = String::from("config\tpass_primary\tpass_secondary\tpass_consensus\trate_pct\n");
    for row in &analysis.consensus {
        let rate = row
            .consensus_rate_pct
            .map(|r| format!("{r:.2}"))
            .unwrap_or_else(|| "undefined".into());
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{rate}",
            row.config, row.pass_primary, row.pass_secondary, row.pass_consensus
        );
    }
    tables.push(write_table("judges.tsv", tsv)?);

    // Efficiency curve.
    let mut tsv = String::from("budget\tfaithful_pct\n");
    for (budget, rate) in &analysis.efficiency {
        let _ = writeln!(tsv, "{budget}\t{rate:.4}");
    }
    tables.push(write_table("efficiency.tsv", tsv)?);

    // Domain metrics.
    let mut tsv =
        String::from("domain\tn\tcompile\tfaithful\tfaithful_given_compile\tsteps_mean\tsteps_median\n");
    for row in &analysis.domain_metrics {
        let cond = row
            .conditional_faithful
            .map(|r| format!("{:.2}", ratio_f64(r)))
            .unwrap_or_else(|| "".into());
        let _ = writeln!(
            tsv,
            "{}\t{}\t{:.2}\t{:.2}\t{cond}\t{:.2}\t{}",
            row.domain.display_name(),
            row.n,
            ratio_f64(row.compile_rate),
            ratio_f64(row.faithful_rate),
            ratio_f64(row.mean_steps),
            trim_ratio(row.median_steps),
        );
    }
    tables.push(write_table("domain_metrics.tsv", tsv)?);

    // Domain effects.
    for (name, rows) in [
        ("domain_effect_feedback.tsv", &analysis.domain_effect_feedback),
        ("domain_search_f0.tsv", &analysis.domain_search_low),
        ("domain_search_f1.tsv", &analysis.domain_search_high),
    ] {
        let mut tsv = String::from("domain\tlow\thigh\tdelta_pts\n");
        for row in rows {
            let label = row
                .domain
                .map(|d| d.display_name().to_string())
                .unwrap_or_else(|| "average".into());
            let _ = writeln!(
                tsv,
                "{label}\t{:.4}\t{:.4}\t{:+.2}",
                ratio_f64(row.low_mean),
                ratio_f64(row.high_mean),
                ratio_to_pp(row.delta)
            );
        }
        tables.push(write_table(name, tsv)?);
    }

    // Tool usage.
    let mut tsv = String::from("config\ttranslator\trepl\ts_total\twrite_file\tother\ttranscripts\n");
    for (config, counts) in &analysis.usage.per_config {
        let _ = writeln!(
            tsv,
            "{config}\t{}\t{}\t{}\t{}\t{}\t{}",
            counts.translator,
            counts.repl,
            counts.s_total,
            counts.write_file,
            counts.other,
            analysis.usage.coverage.get(config).copied().unwrap_or(0)
        );
    }
    tables.push(write_table("usage.tsv", tsv)?);

    // Missing cells (explicit annotation for partial experiments).
    let mut tsv = String::from("theorem\tconfig\n");
    for (theorem, config) in &analysis.missing_cells {
        let _ = writeln!(tsv, "{theorem}\t{config}");
    }
    tables.push(write_table("missing_cells.tsv", tsv)?);

    // Plots.
    let curve_path = dir.join("plots").join("efficiency_curve.svg");
    std::fs::write(&curve_path, efficiency_svg(&analysis.efficiency, analysis.efficiency_config))?;
    plots.push(curve_path);
    let effects_path = dir.join("plots").join("main_effects.svg");
    std::fs::write(&effects_path, effects_svg(&analysis.main_effects))?;
    plots.push(effects_path);

    // Manifest: inputs hashed so numbers trace back to the store.
    let runs_bytes = std::fs::read(store.runs_path())?;
    let manifest = dir.join("manifest.json");
    let manifest_body = serde_json::json!({
        "experiment_id": analysis.experiment_id,
        "orchestrator_id": analysis.orchestrator_id,
        "metric": analysis.metric.label(),
        "store_file": store.runs_path().display().to_string(),
        "store_sha256": crate::net::sha256_hex(&runs_bytes),
        "records": store.len(),
        "missing_cells": analysis.missing_cells.len(),
        "judge_invalid": analysis.judge_invalid,
        "tables": tables.iter().map(|p| p.file_name().unwrap().to_string_lossy().to_string()).collect::<Vec<_>>(),
        "plots": plots.iter().map(|p| p.file_name().unwrap().to_string_lossy().to_string()).collect::<Vec<_>>(),
    });
    std::fs::write(&manifest, serde_json::to_string_pretty(&manifest_body).expect("manifest serializes"))?;

    Ok(ReportBundle { dir, tables, plots, manifest })
}

fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Render "5" or "7.5" style step medians.
fn trim_ratio(r: Ratio<i64>) -> String {
    if r.is_integer() {
        format!("{}", r.to_integer())
    } else {
        format!("{}", ratio_f64(r))
    }
}

/// Minimal line plot; hand-rolled SVG keeps bundles dependency-free and
/// byte-stable.
fn efficiency_svg(points: &[(u32, f64)], config: ToolConfig) -> String {
    let (w, h, ml, mb) = (640.0, 400.0, 60.0, 40.0);
    let plot_w = w - ml - 20.0;
    let plot_h = h - mb - 30.0;
    let max_x = points.last().map(|(b, _)| *b).unwrap_or(1).max(1) as f64;
    let mut path = String::new();
    for (i, (budget, rate)) in points.iter().enumerate() {
        let x = ml + (*budget as f64 / max_x) * plot_w;
        let y = 20.0 + plot_h - (rate / 100.0) * plot_h;
        let _ = write!(path, "{}{x:.1},{y:.1} ", if i == 0 { "M" } else { "L" });
    }
    format!(
        concat!(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"##,
            r##"<rect width="{w}" height="{h}" fill="white"/>"##,
            r##"<text x="{tx}" y="16" font-family="sans-serif" font-size="13">Cumulative faithful rate vs step budget (config {cfg})</text>"##,
            r##"<line x1="{ml}" y1="{y0}" x2="{xr}" y2="{y0}" stroke="black"/>"##,
            r##"<line x1="{ml}" y1="20" x2="{ml}" y2="{y0}" stroke="black"/>"##,
            r##"<path d="{path}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            r##"<text x="{xr}" y="{ybl}" font-family="sans-serif" font-size="11" text-anchor="end">budget</text>"##,
            r##"<text x="14" y="30" font-family="sans-serif" font-size="11">%</text>"##,
            "</svg>\n"
        ),
        w = w,
        h = h,
        tx = ml,
        cfg = config,
        ml = ml,
        y0 = 20.0 + plot_h,
        xr = ml + plot_w,
        ybl = h - 8.0,
        path = path.trim_end(),
    )
}

/// Bar chart with CI whiskers for the three main effects.
fn effects_svg(effects: &[EffectEstimate]) -> String {
    let (w, h) = (480.0, 360.0);
    let (ml, mt, mb) = (60.0, 30.0, 50.0);
    let plot_h = h - mt - mb;
    let lo = effects.iter().map(|e| e.ci_low.min(e.point)).fold(0.0_f64, f64::min) - 2.0;
    let hi = effects.iter().map(|e| e.ci_high.max(e.point)).fold(0.0_f64, f64::max) + 2.0;
    let span = (hi - lo).max(1.0);
    let y_of = |v: f64| mt + plot_h - ((v - lo) / span) * plot_h;
    let mut bars = String::new();
    let bw = 60.0;
    for (i, e) in effects.iter().enumerate() {
        let x = ml + 30.0 + i as f64 * (bw + 50.0);
        let y_zero = y_of(0.0);
        let y_pt = y_of(e.point);
        let (top, height) = if y_pt < y_zero {
            (y_pt, y_zero - y_pt)
        } else {
            (y_zero, y_pt - y_zero)
        };
        let _ = write!(
            bars,
            r##"<rect x="{x:.1}" y="{top:.1}" width="{bw}" height="{height:.1}" fill="#1f77b4"/>"##
        );
        if e.resamples > 0 {
            let cx = x + bw / 2.0;
            let _ = write!(
                bars,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black" stroke-width="1.5"/>"#,
                y_of(e.ci_high),
                y_of(e.ci_low)
            );
        }
        let _ = write!(
            bars,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            x + bw / 2.0,
            h - 20.0,
            e.factor_or_pair
        );
    }
    format!(
        concat!(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"##,
            r##"<rect width="{w}" height="{h}" fill="white"/>"##,
            r##"<text x="{ml}" y="18" font-family="sans-serif" font-size="13">Main effects on faithful accuracy (pts)</text>"##,
            r##"<line x1="{ml}" y1="{yz:.1}" x2="{xr}" y2="{yz:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
            "{bars}</svg>\n"
        ),
        w = w,
        h = h,
        ml = ml,
        yz = y_of(0.0),
        xr = w - 10.0,
        bars = bars,
    )
}
