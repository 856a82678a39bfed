//! Operator entry point. Experiments are described by a declarative TOML
//! file; every flag here overrides the corresponding file value, so a run
//! is reconstructable from the file alone.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use formalab::runner::{BackendMode, ExperimentFile, LiveSettings};
use formalab_cli::{
    cmd_agreement, cmd_analyze, cmd_export_audit, cmd_judge, cmd_run, parse_config_code,
    parse_metric, render_domain_counters, resolve_judges, AnalyzeArgs, CliError,
};

#[derive(Parser)]
#[command(name = "formalab", version, about = "Tool-augmented formalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Declarative experiment file (TOML); flags override its values.
    #[arg(long, short = 'f')]
    experiment_file: Option<PathBuf>,
    /// Experiment identifier (names the store directory).
    #[arg(long)]
    experiment_id: Option<String>,
    /// Corpus file: one JSON object per line (id, domain, statement, source).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory holding experiment stores.
    #[arg(long)]
    store_root: Option<PathBuf>,
    /// Directory holding per-episode workspaces.
    #[arg(long)]
    work_root: Option<PathBuf>,
    /// Orchestrator model identifier.
    #[arg(long)]
    orchestrator: Option<String>,
    /// Step budget per episode.
    #[arg(long)]
    t_max: Option<u32>,
    /// Backend mode: live, replay, or stub.
    #[arg(long)]
    backend: Option<String>,
    /// Parallel episode workers (default: compiler session count).
    #[arg(long)]
    parallelism: Option<usize>,
    /// Compiler sessions in the pool.
    #[arg(long)]
    sessions: Option<usize>,
    /// Replay fixture root (gateway/ and tools/ subdirectories).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Prompt template directory (embedded defaults when omitted).
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Master seed for seeded procedures.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes for one tool configuration (resumable).
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Three-bit configuration code in T,F,S order, e.g. 110.
        #[arg(long, short = 'c')]
        config: String,
    },
    /// Attach dual-judge verdicts to stored runs.
    Judge {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        primary: Option<String>,
        #[arg(long)]
        secondary: Option<String>,
        /// Re-queries allowed after a rejected judge response.
        #[arg(long, default_value_t = 2)]
        retry_cap: u32,
    },
    /// Compute factorial tables, effects, and judge agreement; write the
    /// report bundle.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// faithful-consensus, faithful-primary, or compile.
        #[arg(long, default_value = "faithful-consensus")]
        metric: String,
        /// Bootstrap resamples for effect confidence intervals.
        #[arg(long, default_value_t = 10_000)]
        resamples: u32,
        /// Output directory for the bundle (default: <store>/report).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        primary: Option<String>,
        #[arg(long)]
        secondary: Option<String>,
        /// Configuration feeding the efficiency curve and domain tables.
        #[arg(long, default_value = "111")]
        focus: String,
    },
    /// Regenerate the report bundle without printing tables.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "faithful-consensus")]
        metric: String,
        #[arg(long, default_value_t = 10_000)]
        resamples: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        primary: Option<String>,
        #[arg(long)]
        secondary: Option<String>,
        #[arg(long, default_value = "111")]
        focus: String,
    },
    /// Export sampled faithful runs to a reviewer sheet; with --grades,
    /// score reviewer agreement instead.
    ExportAudit {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        primary: Option<String>,
        /// Reviewer sheet destination.
        #[arg(long, default_value = "audit_sample.tsv")]
        out: PathBuf,
        /// Sample size cap.
        #[arg(long, default_value_t = 138)]
        sample: usize,
        /// Reviewer grades file (run_key<TAB>grade) to score agreement.
        #[arg(long)]
        grades: Option<PathBuf>,
    },
}

/// Merge the experiment file (if any) with flag overrides.
fn resolve_file(common: &CommonArgs) -> Result<ExperimentFile, CliError> {
    let mut file = match &common.experiment_file {
        Some(path) => ExperimentFile::load(path)?,
        None => {
            let corpus = common
                .corpus
                .clone()
                .ok_or_else(|| CliError::Usage("either --experiment-file or --corpus is required".into()))?;
            let orchestrator = common
                .orchestrator
                .clone()
                .ok_or_else(|| CliError::Usage("either --experiment-file or --orchestrator is required".into()))?;
            ExperimentFile {
                experiment_id: "default".into(),
                corpus,
                store_root: PathBuf::from("runs"),
                work_root: PathBuf::from("work"),
                orchestrator,
                t_max: formalab::runner::DEFAULT_T_MAX,
                backend: BackendMode::Stub,
                parallelism: None,
                sessions: formalab::runner::DEFAULT_SESSIONS,
                seed: 0,
                fixtures: None,
                templates: None,
                primary_judge: None,
                secondary_judge: None,
                live: LiveSettings::default(),
            }
        }
    };
    if let Some(v) = &common.experiment_id {
        file.experiment_id = v.clone();
    }
    if let Some(v) = &common.corpus {
        file.corpus = v.clone();
    }
    if let Some(v) = &common.store_root {
        file.store_root = v.clone();
    }
    if let Some(v) = &common.work_root {
        file.work_root = v.clone();
    }
    if let Some(v) = &common.orchestrator {
        file.orchestrator = v.clone();
    }
    if let Some(v) = common.t_max {
        file.t_max = v;
    }
    if let Some(v) = &common.backend {
        file.backend = v
            .parse()
            .map_err(|e: String| CliError::Usage(e))?;
    }
    if let Some(v) = common.parallelism {
        file.parallelism = Some(v);
    }
    if let Some(v) = common.sessions {
        file.sessions = v;
    }
    if let Some(v) = &common.fixtures {
        file.fixtures = Some(v.clone());
    }
    if let Some(v) = &common.templates {
        file.templates = Some(v.clone());
    }
    if let Some(v) = common.seed {
        file.seed = v;
    }
    Ok(file)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, config } => {
            let file = resolve_file(&common)?;
            let config = parse_config_code(&config)?;
            let report = cmd_run(&file, config)?;
            println!(
                "experiment {}: config {config}: executed {} episodes ({} already stored, {} succeeded)",
                file.experiment_id, report.executed, report.skipped, report.succeeded
            );
            println!("per-domain completions: {}", render_domain_counters(&report));
            println!("store: {}", file.store_dir().display());
        }
        Command::Judge { common, primary, secondary, retry_cap } => {
            let file = resolve_file(&common)?;
            let (primary, secondary) = resolve_judges(&file, primary, secondary)?;
            let coverage = cmd_judge(&file, &primary, &secondary, retry_cap)?;
            println!(
                "judged {}/{} runs ({} judge-invalid, {} skipped as already judged)",
                coverage.judged, coverage.total, coverage.judge_invalid, coverage.skipped
            );
        }
        Command::Analyze { common, metric, resamples, out, primary, secondary, focus } => {
            analyze_and_report(common, metric, resamples, out, primary, secondary, focus, true)?;
        }
        Command::Report { common, metric, resamples, out, primary, secondary, focus } => {
            analyze_and_report(common, metric, resamples, out, primary, secondary, focus, false)?;
        }
        Command::ExportAudit { common, primary, out, sample, grades } => {
            let file = resolve_file(&common)?;
            let primary = primary
                .or_else(|| file.primary_judge.clone())
                .ok_or_else(|| CliError::Usage("no primary judge configured".into()))?;
            match grades {
                Some(grades_path) => {
                    let stats = cmd_agreement(&file, &primary, &grades_path)?;
                    println!(
                        "agreement over {} reviewed runs: exact {:.1}%, within-one-faithful {:.1}%, threshold crossings {:.1}%, binary agreement {:.1}%",
                        stats.total,
                        stats.exact_match_percent(),
                        stats.within_one_percent(),
                        stats.crossing_percent(),
                        stats.binary_agreement_percent()
                    );
                }
                None => {
                    let n = cmd_export_audit(&file, &primary, sample, &out)?;
                    println!("exported {n} faithful runs to {}", out.display());
                }
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn analyze_and_report(
    common: CommonArgs,
    metric: String,
    resamples: u32,
    out: Option<PathBuf>,
    primary: Option<String>,
    secondary: Option<String>,
    focus: String,
    print_tables: bool,
) -> Result<(), CliError> {
    let file = resolve_file(&common)?;
    let (primary, secondary) = resolve_judges(&file, primary, secondary)?;
    let args = AnalyzeArgs {
        metric: parse_metric(&metric)?,
        resamples,
        seed: file.seed,
        out_dir: out,
        primary,
        secondary,
        focus_config: parse_config_code(&focus)?,
        tables_only: false,
    };
    let (analysis, bundle) = cmd_analyze(&file, &args)?;
    if print_tables {
        print!("{}", analysis.render_text());
    }
    if let Some(bundle) = bundle {
        println!("report bundle: {}", bundle.dir.display());
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
