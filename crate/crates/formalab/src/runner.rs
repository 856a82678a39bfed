//! Experiment orchestration: resumable episode sweeps, judging passes, and
//! the declarative experiment file.
//!
//! One experiment is a store directory accumulating runs across
//! configurations for one corpus. `run_pass` executes episodes for a single
//! configuration and skips theorems that already have a stored record, so
//! interrupting and rerunning converges to the same store. Episodes run on
//! a bounded worker pool; each owns an isolated workspace directory and
//! toolbelt session, and the append-only store is the only shared sink.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{one_shot, run_episode, EpisodeError, EpisodeResult, EpisodeStatus};
use crate::config::ToolConfig;
use crate::corpus::{Corpus, CorpusError, Domain};
use crate::gateway::live::LiveGateway;
use crate::gateway::replay::ReplayGateway;
use crate::gateway::stub::{JudgeStrictness, StubJudge, StubOrchestrator};
use crate::gateway::{ChatModel, GatewayError, Orchestrator};
use crate::judge::{self, JudgeError, JudgeOptions};
use crate::prompt::{PromptTemplates, TemplateError};
use crate::store::{RunRecord, RunStore, StoreError, StoreMeta};
use crate::tools::live::{LiveToolBackend, LiveToolConfig};
use crate::tools::replay::ReplayToolBackend;
use crate::tools::stub::StubBackend;
use crate::tools::{SessionPool, ToolBackend, ToolError, Toolbelt};

pub const DEFAULT_T_MAX: u32 = 24;
pub const DEFAULT_SESSIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Live,
    Replay,
    Stub,
}

impl std::str::FromStr for BackendMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(BackendMode::Live),
            "replay" => Ok(BackendMode::Replay),
            "stub" => Ok(BackendMode::Stub),
            other => Err(format!("unknown backend mode {other:?} (expected live, replay, or stub)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("episode for {theorem}: {source}")]
    Episode {
        theorem: String,
        #[source]
        source: EpisodeError,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl RunnerError {
    /// True when the failure is a replay fixture miss (distinct exit code).
    pub fn is_fixture_miss(&self) -> bool {
        match self {
            RunnerError::Tool(ToolError::FixtureMiss { .. })
            | RunnerError::Gateway(GatewayError::FixtureMiss { .. }) => true,
            RunnerError::Episode { source, .. } => matches!(
                source,
                EpisodeError::Tool(ToolError::FixtureMiss { .. })
                    | EpisodeError::Gateway(GatewayError::FixtureMiss { .. })
            ),
            _ => false,
        }
    }
}

/// Live-provider settings, used only in live mode.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LiveSettings {
    pub base_url: Option<String>,
    /// Environment variable holding the provider credential.
    pub api_key_env: Option<String>,
    pub compile_command: Option<Vec<String>>,
    pub compile_workdir: Option<PathBuf>,
    pub snapshot_id: Option<String>,
    pub compile_timeout_ms: Option<u64>,
    pub herald_url: Option<String>,
    pub search_url: Option<String>,
    pub symbols_path: Option<PathBuf>,
}

/// The single declarative experiment file (TOML). Command-line flags
/// override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub experiment_id: String,
    pub corpus: PathBuf,
    #[serde(default = "default_store_root")]
    pub store_root: PathBuf,
    #[serde(default = "default_work_root")]
    pub work_root: PathBuf,
    pub orchestrator: String,
    #[serde(default = "default_t_max")]
    pub t_max: u32,
    pub backend: BackendMode,
    /// Worker count; defaults to the compiler session pool size.
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default = "default_sessions")]
    pub sessions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Replay fixture root with `gateway/` and `tools/` subdirectories.
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    /// When set, every model response and tool result is recorded under
    /// this directory in the layout replay mode reads.
    #[serde(default)]
    pub record_fixtures: Option<PathBuf>,
    /// Template directory; embedded templates when unset.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub primary_judge: Option<String>,
    #[serde(default)]
    pub secondary_judge: Option<String>,
    #[serde(default)]
    pub live: LiveSettings,
}

fn default_store_root() -> PathBuf {
    PathBuf::from("runs")
}
fn default_work_root() -> PathBuf {
    PathBuf::from("work")
}
fn default_t_max() -> u32 {
    DEFAULT_T_MAX
}
fn default_sessions() -> usize {
    DEFAULT_SESSIONS
}

impl ExperimentFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        toml::from_str(&text)
            .map_err(|e| RunnerError::Config(format!("experiment file: {e}")))
    }

    pub fn store_dir(&self) -> PathBuf {
        self.store_root.join(&self.experiment_id)
    }

    pub fn templates(&self) -> Result<PromptTemplates, RunnerError> {
        Ok(match &self.templates {
            Some(dir) => PromptTemplates::load(dir)?,
            None => PromptTemplates::embedded(),
        })
    }

    fn tool_backend(&self) -> Result<Arc<dyn ToolBackend>, RunnerError> {
        Ok(match self.backend {
            BackendMode::Stub => Arc::new(StubBackend::with_default_table()),
            BackendMode::Replay => {
                let root = self.fixtures.as_ref().ok_or_else(|| {
                    RunnerError::Config("replay mode needs a fixtures directory".into())
                })?;
                Arc::new(ReplayToolBackend::open(root.join("tools"))?)
            }
            BackendMode::Live => {
                let mut config = LiveToolConfig::default();
                let live = &self.live;
                if let Some(cmd) = &live.compile_command {
                    config.compile_command = cmd.clone();
                }
                config.compile_workdir = live.compile_workdir.clone();
                if let Some(id) = &live.snapshot_id {
                    config.snapshot_id = id.clone();
                }
                if let Some(ms) = live.compile_timeout_ms {
                    config.compile_timeout_ms = ms;
                }
                config.herald_url = live.herald_url.clone();
                config.search_url = live.search_url.clone();
                config.symbols_path = live.symbols_path.clone();
                Arc::new(LiveToolBackend::new(config)?)
            }
        })
    }

    /// Gateway for a model id. In stub mode judge-looking ids get synthetic
    /// judges (ids containing "lenient" are the permissive one) and anything
    /// else gets the synthetic orchestrator.
    fn model(&self, model_id: &str) -> Result<Box<dyn ChatModel>, RunnerError> {
        Ok(match self.backend {
            BackendMode::Stub => {
                if model_id.contains("judge") {
                    let strictness = if model_id.contains("lenient") {
                        JudgeStrictness::Lenient
                    } else {
                        JudgeStrictness::Strict
                    };
                    Box::new(StubJudge::new(strictness))
                } else {
                    Box::new(StubOrchestrator)
                }
            }
            BackendMode::Replay => {
                let root = self.fixtures.as_ref().ok_or_else(|| {
                    RunnerError::Config("replay mode needs a fixtures directory".into())
                })?;
                Box::new(ReplayGateway::open(root.join("gateway"))?)
            }
            BackendMode::Live => {
                let base_url = self.live.base_url.as_deref().ok_or_else(|| {
                    RunnerError::Config("live mode needs live.base_url".into())
                })?;
                let key_env = self
                    .live
                    .api_key_env
                    .as_deref()
                    .unwrap_or("PROVIDER_API_KEY");
                Box::new(LiveGateway::new(base_url, key_env))
            }
        })
    }

    pub fn orchestrator(&self, model_id: &str) -> Result<Orchestrator, RunnerError> {
        Ok(Orchestrator::new(model_id, self.model(model_id)?))
    }
}

/// Outcome of one `run_pass`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunPassReport {
    pub executed: usize,
    pub skipped: usize,
    pub succeeded: usize,
    pub per_domain: BTreeMap<Domain, usize>,
}

/// Execute one episode per theorem not yet stored for (config,
/// orchestrator). Returns per-domain completion counters.
pub fn run_pass(
    file: &ExperimentFile,
    config: ToolConfig,
    shutdown: Option<&std::sync::atomic::AtomicBool>,
) -> Result<RunPassReport, RunnerError> {
    let corpus = Corpus::load(&file.corpus)?;
    let templates = file.templates()?;
    let mut store = RunStore::open(
        file.store_dir(),
        StoreMeta { experiment_id: file.experiment_id.clone(), t_max: file.t_max },
    )?;
    store.set_domains(
        corpus
            .items()
            .iter()
            .map(|i| (i.id.clone(), i.domain))
            .collect(),
    );
    let store = Arc::new(store);

    let backend = file.tool_backend()?;
    let pool = SessionPool::new(backend, file.sessions);
    let orchestrator = Arc::new(file.orchestrator(&file.orchestrator)?);
    let workers = file.parallelism.unwrap_or_else(|| pool.capacity()).max(1);

    let mut report = RunPassReport::default();
    let mut pending: VecDeque<usize> = VecDeque::new();
    for (idx, item) in corpus.items().iter().enumerate() {
        if store.contains(&item.id, config, &file.orchestrator) {
            report.skipped += 1;
        } else {
            pending.push_back(idx);
        }
    }
    report.executed = pending.len();

    let queue = Mutex::new(pending);
    let results: Mutex<Vec<Result<(Domain, bool), RunnerError>>> = Mutex::new(Vec::new());
    let work_root = file.work_root.join(&file.experiment_id).join(config.code());
    std::fs::create_dir_all(&work_root)?;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if shutdown
                    .map(|f| f.load(std::sync::atomic::Ordering::Relaxed))
                    .unwrap_or(false)
                {
                    break; // drain: in-flight episodes finish, queue stops
                }
                let Some(idx) = queue.lock().unwrap().pop_front() else {
                    break;
                };
                let item = &corpus.items()[idx];
                let outcome = execute_one(
                    item,
                    config,
                    &orchestrator,
                    &pool,
                    &templates,
                    file.t_max,
                    &work_root,
                    &store,
                );
                results.lock().unwrap().push(outcome.map(|ok| (item.domain, ok)));
            });
        }
    });

    for outcome in results.into_inner().unwrap() {
        let (domain, faithful_candidate) = outcome?;
        *report.per_domain.entry(domain).or_insert(0) += 1;
        if faithful_candidate {
            report.succeeded += 1;
        }
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn execute_one(
    item: &crate::corpus::TheoremItem,
    config: ToolConfig,
    orchestrator: &Orchestrator,
    pool: &Arc<SessionPool>,
    templates: &PromptTemplates,
    t_max: u32,
    work_root: &Path,
    store: &RunStore,
) -> Result<bool, RunnerError> {
    let started = Instant::now();
    let episode: EpisodeResult = if config.is_baseline() {
        one_shot(item, orchestrator, templates)
    } else {
        let workspace = work_root.join(&item.id);
        std::fs::create_dir_all(&workspace)?;
        let mut toolbelt = Toolbelt::new(pool.clone(), workspace, config);
        run_episode(item, config, orchestrator, &mut toolbelt, templates, t_max)
    }
    .map_err(|source| RunnerError::Episode { theorem: item.id.clone(), source })?;

    let compile_pass = judge::compile_gate(episode.final_code.as_deref(), pool)?;
    let record = RunRecord {
        theorem_id: item.id.clone(),
        config,
        orchestrator_id: orchestrator.model_id.clone(),
        steps_used: episode.steps_used,
        final_code: episode.final_code.clone(),
        compile_pass,
        verdicts: BTreeMap::new(),
        faithful_primary: false,
        faithful_consensus: false,
        transcript_ref: episode.transcript.content_hash(),
        wall_time_ms: started.elapsed().as_millis() as u64,
        judge_invalid: Vec::new(),
    };
    store.store_run(&record, Some(&episode.transcript), false)?;
    Ok(episode.status == EpisodeStatus::Success && compile_pass)
}

/// Coverage after a judging pass.
#[derive(Debug, Clone, Default, Serialize)]
pub struct JudgeCoverage {
    pub total: usize,
    pub judged: usize,
    pub judge_invalid: usize,
    pub skipped: usize,
}

/// Attach verdicts from both judges to every stored run that lacks them,
/// then recompute the faithful flags. Already-judged runs are skipped, so
/// the pass is resumable.
pub fn judge_pass(
    file: &ExperimentFile,
    primary_id: &str,
    secondary_id: &str,
    options: JudgeOptions,
) -> Result<JudgeCoverage, RunnerError> {
    let corpus = Corpus::load(&file.corpus)?;
    let templates = file.templates()?;
    let store = RunStore::open(
        file.store_dir(),
        StoreMeta { experiment_id: file.experiment_id.clone(), t_max: file.t_max },
    )?;
    let primary = file.orchestrator(primary_id)?;
    let secondary = file.orchestrator(secondary_id)?;

    let runs = store.query_runs(&Default::default());
    let mut coverage = JudgeCoverage { total: runs.len(), ..Default::default() };

    for mut run in runs {
        let already =
            run.verdicts.contains_key(primary_id) && run.verdicts.contains_key(secondary_id);
        let invalid_before = !run.judge_invalid.is_empty();
        if already || invalid_before {
            coverage.skipped += 1;
            if already {
                coverage.judged += 1;
            } else {
                coverage.judge_invalid += 1;
            }
            continue;
        }
        let statement = corpus
            .get(&run.theorem_id)
            .map(|t| t.statement_text.as_str())
            .unwrap_or_default();
        let code = run.final_code.clone().unwrap_or_default();

        let mut invalid = Vec::new();
        for (id, judge_model) in [(primary_id, &primary), (secondary_id, &secondary)] {
            if run.verdicts.contains_key(id) {
                continue;
            }
            match judge::judge(statement, &code, run.compile_pass, judge_model, &templates, options)
            {
                Ok(verdict) => {
                    run.verdicts.insert(id.to_string(), verdict);
                }
                Err(JudgeError::JudgeInvalid { .. }) => invalid.push(id.to_string()),
                Err(other) => return Err(other.into()),
            }
        }
        run.judge_invalid = invalid;

        let grade_of = |id: &str| run.verdicts.get(id).map(|v| v.grade);
        run.faithful_primary = run.compile_pass
            && grade_of(primary_id).is_some_and(|g| g >= judge::FAITHFUL_GRADE_THRESHOLD);
        run.faithful_consensus = run.faithful_primary
            && grade_of(secondary_id).is_some_and(|g| g >= judge::FAITHFUL_GRADE_THRESHOLD);

        if run.judge_invalid.is_empty() {
            coverage.judged += 1;
        } else {
            coverage.judge_invalid += 1;
        }
        store.store_run(&run, None, true)?;
    }
    Ok(coverage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tiny_corpus(dir: &Path, n: usize) -> PathBuf {
        let path = dir.join("corpus.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        let domains = ["RealAnalysis", "ComplexAnalysis", "Topology", "Algebra"];
        for i in 0..n {
            writeln!(
                f,
                r#"{{"id":"thm_{i}","domain":"{}","statement":"Statement number {i}.","source":"synthetic"}}"#,
                domains[i % 4]
            )
            .unwrap();
        }
        path
    }

    fn stub_file(dir: &Path, n: usize) -> ExperimentFile {
        ExperimentFile {
            experiment_id: "test-exp".into(),
            corpus: tiny_corpus(dir, n),
            store_root: dir.join("runs"),
            work_root: dir.join("work"),
            orchestrator: "stub-orchestrator".into(),
            t_max: 24,
            backend: BackendMode::Stub,
            parallelism: Some(2),
            sessions: 2,
            seed: 0,
            fixtures: None,
            templates: None,
            primary_judge: Some("judge-strict".into()),
            secondary_judge: Some("judge-lenient".into()),
            live: LiveSettings::default(),
        }
    }

    #[test]
    fn run_pass_is_resumable() {
        let dir = tempfile::tempdir().unwrap();
        let file = stub_file(dir.path(), 6);
        let config: ToolConfig = "111".parse().unwrap();

        let first = run_pass(&file, config, None).unwrap();
        assert_eq!(first.executed, 6);
        assert_eq!(first.skipped, 0);
        assert_eq!(first.per_domain.values().sum::<usize>(), 6);

        let second = run_pass(&file, config, None).unwrap();
        assert_eq!(second.executed, 0);
        assert_eq!(second.skipped, 6);
    }

    #[test]
    fn baseline_runs_one_shot() {
        let dir = tempfile::tempdir().unwrap();
        let file = stub_file(dir.path(), 3);
        let report = run_pass(&file, ToolConfig::BASELINE, None).unwrap();
        assert_eq!(report.executed, 3);

        let store = RunStore::open(
            file.store_dir(),
            StoreMeta { experiment_id: "test-exp".into(), t_max: 24 },
        )
        .unwrap();
        let runs = store.query_runs(&Default::default());
        assert_eq!(runs.len(), 3);
        for run in &runs {
            assert_eq!(run.steps_used, 1);
            assert!(run.final_code.is_some());
            assert!(run.compile_pass, "stub one-shot output passes the stub gate");
        }
    }

    #[test]
    fn judge_pass_attaches_both_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let file = stub_file(dir.path(), 4);
        let config: ToolConfig = "010".parse().unwrap();
        run_pass(&file, config, None).unwrap();

        let coverage =
            judge_pass(&file, "judge-strict", "judge-lenient", JudgeOptions::default()).unwrap();
        assert_eq!(coverage.total, 4);
        assert_eq!(coverage.judged, 4);
        assert_eq!(coverage.judge_invalid, 0);

        let store = RunStore::open(
            file.store_dir(),
            StoreMeta { experiment_id: "test-exp".into(), t_max: 24 },
        )
        .unwrap();
        for run in store.query_runs(&Default::default()) {
            assert_eq!(run.verdicts.len(), 2);
            if !run.compile_pass {
                assert!(!run.faithful_primary && !run.faithful_consensus);
            }
        }

        // Rejudging skips everything.
        let again =
            judge_pass(&file, "judge-strict", "judge-lenient", JudgeOptions::default()).unwrap();
        assert_eq!(again.skipped, 4);
    }
}
