//! Command implementations behind the `formalab` binary.
//!
//! Each command takes a resolved [`ExperimentFile`] (the single declarative
//! experiment description; the binary merges file values with flag
//! overrides) and returns typed results so tests can drive the same paths
//! the binary does.
//!
//! Exit codes: 0 success, 2 usage error, 3 configuration error, 4 replay
//! fixture miss.

use std::collections::BTreeMap;
use std::path::PathBuf;

use formalab::config::ToolConfig;
use formalab::corpus::Corpus;
use formalab::judge::{agreement_from_grades, export_audit_sample, AgreementStats, JudgeOptions};
use formalab::report::{analyze, emit_report, Analysis, AnalyzeOptions, ReportBundle};
use formalab::runner::{judge_pass, run_pass, ExperimentFile, JudgeCoverage, RunPassReport, RunnerError};
use formalab::stats::bootstrap::BootstrapOptions;
use formalab::stats::table::MetricId;
use formalab::store::{RunFilter, RunStore, StoreMeta};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Store(#[from] formalab::store::StoreError),
    #[error(transparent)]
    Report(#[from] formalab::report::ReportError),
    #[error(transparent)]
    Judge(#[from] formalab::judge::JudgeError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runner(e) if e.is_fixture_miss() => 4,
            CliError::Runner(_) | CliError::Store(_) | CliError::Report(_) => 3,
            CliError::Judge(_) => 3,
            CliError::Io(_) => 3,
        }
    }
}

pub fn parse_config_code(code: &str) -> Result<ToolConfig, CliError> {
    code.parse()
        .map_err(|e: formalab::config::ConfigCodeError| CliError::Usage(e.to_string()))
}

pub fn parse_metric(label: &str) -> Result<MetricId, CliError> {
    match label {
        "faithful-consensus" | "faithful_consensus" => Ok(MetricId::FaithfulConsensus),
        "faithful-primary" | "faithful_primary" => Ok(MetricId::FaithfulPrimary),
        "compile" => Ok(MetricId::Compile),
        other => Err(CliError::Usage(format!(
            "unknown metric {other:?} (expected faithful-consensus, faithful-primary, or compile)"
        ))),
    }
}

/// Run one configuration's episodes; resumable.
pub fn cmd_run(file: &ExperimentFile, config: ToolConfig) -> Result<RunPassReport, CliError> {
    let report = run_pass(file, config, None)?;
    Ok(report)
}

/// Attach both judges' verdicts to every stored run.
pub fn cmd_judge(
    file: &ExperimentFile,
    primary: &str,
    secondary: &str,
    retry_cap: u32,
) -> Result<JudgeCoverage, CliError> {
    Ok(judge_pass(file, primary, secondary, JudgeOptions { retry_cap })?)
}

#[derive(Debug, Clone)]
pub struct AnalyzeArgs {
    pub metric: MetricId,
    pub resamples: u32,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub primary: String,
    pub secondary: String,
    pub focus_config: ToolConfig,
    /// Skip the bundle and only compute tables.
    pub tables_only: bool,
}

impl Default for AnalyzeArgs {
    fn default() -> Self {
        AnalyzeArgs {
            metric: MetricId::FaithfulConsensus,
            resamples: 10_000,
            seed: 0,
            out_dir: None,
            primary: "primary".into(),
            secondary: "secondary".into(),
            focus_config: "111".parse().expect("valid code"),
            tables_only: false,
        }
    }
}

/// Open the experiment's store with its recorded metadata.
pub fn open_store(file: &ExperimentFile) -> Result<RunStore, CliError> {
    let mut store = RunStore::open(
        file.store_dir(),
        StoreMeta { experiment_id: file.experiment_id.clone(), t_max: file.t_max },
    )?;
    if let Ok(corpus) = Corpus::load(&file.corpus) {
        store.set_domains(
            corpus
                .items()
                .iter()
                .map(|i| (i.id.clone(), i.domain))
                .collect(),
        );
    }
    Ok(store)
}

/// Full analysis plus (unless `tables_only`) the report bundle on disk.
/// Missing configurations are tolerated with warnings and enumerated in
/// the returned analysis.
pub fn cmd_analyze(
    file: &ExperimentFile,
    args: &AnalyzeArgs,
) -> Result<(Analysis, Option<ReportBundle>), CliError> {
    let store = open_store(file)?;
    let corpus = Corpus::load(&file.corpus).map_err(RunnerError::from)?;
    let present = store.configs_present(&file.orchestrator);
    let missing: Vec<ToolConfig> = ToolConfig::ALL
        .iter()
        .copied()
        .filter(|c| !present.contains_key(c))
        .collect();
    if !missing.is_empty() {
        let codes: Vec<String> = missing.iter().map(|c| c.code()).collect();
        log::warn!("configurations without stored runs: {}", codes.join(", "));
    }
    let options = AnalyzeOptions {
        metric: args.metric,
        bootstrap: BootstrapOptions { resamples: args.resamples, seed: args.seed },
        primary_judge: args.primary.clone(),
        secondary_judge: args.secondary.clone(),
        focus_config: args.focus_config,
        t_max: file.t_max,
    };
    let analysis = analyze(&store, &corpus, &file.orchestrator, &options)?;
    let bundle = if args.tables_only {
        None
    } else {
        let out = args
            .out_dir
            .clone()
            .unwrap_or_else(|| file.store_dir().join("report"));
        Some(emit_report(&analysis, &store, out)?)
    };
    Ok((analysis, bundle))
}

/// Export a reviewer sheet of sampled consensus-faithful runs as TSV.
pub fn cmd_export_audit(
    file: &ExperimentFile,
    primary: &str,
    sample: usize,
    out_path: &std::path::Path,
) -> Result<usize, CliError> {
    let store = open_store(file)?;
    let corpus = Corpus::load(&file.corpus).map_err(RunnerError::from)?;
    let runs = store.query_runs(&RunFilter::default());
    let rows = export_audit_sample(&runs, &corpus, primary, sample);
    let mut tsv = String::from("run_key\tmodel_grade\tstatement\tcode\n");
    for row in &rows {
        let grade = row.model_grade.map(|g| g.to_string()).unwrap_or_default();
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            row.run_key,
            grade,
            row.statement.replace(['\t', '\n'], " "),
            row.code.replace('\t', " ").replace('\n', "\\n"),
        ));
    }
    std::fs::write(out_path, tsv)?;
    Ok(rows.len())
}

/// Compare stored judge grades against a reviewer's grades file
/// (tab- or comma-delimited lines: run_key, grade).
pub fn cmd_agreement(
    file: &ExperimentFile,
    primary: &str,
    grades_path: &std::path::Path,
) -> Result<AgreementStats, CliError> {
    let store = open_store(file)?;
    let runs = store.query_runs(&RunFilter::default());
    let text = std::fs::read_to_string(grades_path)?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("run_key") {
            continue;
        }
        let mut parts = line.splitn(2, ['\t', ',']);
        let key = parts.next().unwrap_or_default().trim().to_string();
        let grade: u8 = parts
            .next()
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| {
                CliError::Usage(format!("grades file line {}: expected run_key<TAB>grade", idx + 1))
            })?;
        pairs.push((key, grade));
    }
    Ok(agreement_from_grades(&runs, primary, &pairs)?)
}

/// Per-domain completion counters rendered for progress output.
pub fn render_domain_counters(report: &RunPassReport) -> String {
    let mut parts: Vec<String> = report
        .per_domain
        .iter()
        .map(|(d, n)| format!("{}: {n}", d.display_name()))
        .collect();
    if parts.is_empty() {
        parts.push("none".into());
    }
    parts.join(", ")
}

/// Judge ids resolved from flags falling back to the experiment file.
pub fn resolve_judges(
    file: &ExperimentFile,
    primary_flag: Option<String>,
    secondary_flag: Option<String>,
) -> Result<(String, String), CliError> {
    let primary = primary_flag
        .or_else(|| file.primary_judge.clone())
        .ok_or_else(|| CliError::Usage("no primary judge configured".into()))?;
    let secondary = secondary_flag
        .or_else(|| file.secondary_judge.clone())
        .ok_or_else(|| CliError::Usage("no secondary judge configured".into()))?;
    Ok((primary, secondary))
}

/// Config-isolation check over stored transcripts: system prompts across
/// experiments must share the base prefix, with differences confined to
/// the tool block.
pub fn verify_prompt_isolation(store: &RunStore) -> Result<(), CliError> {
    let runs = store.query_runs(&RunFilter::default());
    let mut prompts: BTreeMap<ToolConfig, String> = BTreeMap::new();
    for run in &runs {
        if prompts.contains_key(&run.config) {
            continue;
        }
        let transcript = store.load_transcript(&run.transcript_ref)?;
        if let Some(system) = transcript.messages.first() {
            prompts.insert(run.config, system.content.clone());
        }
    }
    let Some(base) = prompts.get(&ToolConfig::BASELINE).cloned().or_else(|| {
        prompts
            .values()
            .next()
            .map(|p| p.split("AVAILABLE TOOLS").next().unwrap_or(p).to_string())
    }) else {
        return Ok(());
    };
    let prefix = base.trim_end_matches('\n');
    for (config, prompt) in &prompts {
        if !prompt.starts_with(prefix) {
            return Err(CliError::Usage(format!(
                "system prompt for config {config} does not share the base prefix"
            )));
        }
    }
    Ok(())
}
