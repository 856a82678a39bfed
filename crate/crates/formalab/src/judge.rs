//! Two-stage evaluation: compile gate, then dual-judge semantic grading.
//!
//! Anything that fails to compile scores zero before a judge ever sees it.
//! Compiling code goes to two judge models under a strict output contract:
//! a single JSON object with exactly the keys `faithful`, `grade`,
//! `thought`, where a non-compiling input caps the grade at 3. Responses
//! violating the contract are re-queried up to a retry cap and then the run
//! is marked judge-invalid; grades are never clamped into compliance, since
//! clamping would manufacture data.
//!
//! A translation is *faithful* iff it compiles and its grade is at least 9.

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::Message;
use crate::config::ToolConfig;
use crate::corpus::{Corpus, Domain};
use crate::gateway::Orchestrator;
use crate::prompt::PromptTemplates;
use crate::store::RunRecord;
use crate::tools::{SessionPool, ToolError};

/// Grade at or above which a compiling translation counts as faithful.
pub const FAITHFUL_GRADE_THRESHOLD: u8 = 9;

/// Maximum grade a judge may assign to non-compiling code.
pub const COMPILE_FAIL_GRADE_CAP: u8 = 3;

/// One judge's verdict on one translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub judge_id: String,
    pub faithful: bool,
    /// Integer grade 0..=10.
    pub grade: u8,
    /// Free-form rationale between the BEGIN/END THOUGHT markers.
    pub thought: String,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("grade {0} is out of range 0..=10")]
    GradeOutOfRange(u8),
    #[error("judge response rejected: {0}")]
    ContractViolation(String),
    #[error("judge invalid after {attempts} attempts; last rejection: {last_error}")]
    JudgeInvalid { attempts: u32, last_error: String },
    #[error("gateway failure while judging: {0}")]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error("compile gate failure: {0}")]
    Gate(#[from] ToolError),
}

/// The compile gate: absent code fails without invoking the compiler;
/// otherwise the boolean mirrors the compiler's success flag for the
/// pinned snapshot.
pub fn compile_gate(final_code: Option<&str>, pool: &SessionPool) -> Result<bool, ToolError> {
    match final_code {
        None => Ok(false),
        Some(code) => Ok(pool.compile(code)?.success),
    }
}

/// `compile_pass AND grade >= 9`, the success metric.
pub fn faithful(compile_pass: bool, grade: u8) -> Result<bool, JudgeError> {
    if grade > 10 {
        return Err(JudgeError::GradeOutOfRange(grade));
    }
    Ok(compile_pass && grade >= FAITHFUL_GRADE_THRESHOLD)
}

/// Parse and validate one judge response under the strict output contract.
///
/// Rejections (anything other than a single JSON object with exactly the
/// three expected keys and a contract-satisfying verdict) are returned as
/// errors so the caller can retry; values are never coerced.
pub fn parse_verdict(
    raw: &str,
    judge_id: &str,
    compile_pass: bool,
) -> Result<JudgeVerdict, JudgeError> {
    let reject = |msg: String| Err(JudgeError::ContractViolation(msg));
    let value: serde_json::Value = match serde_json::from_str(raw.trim()) {
        Ok(v) => v,
        Err(e) => return reject(format!("not a single JSON object: {e}")),
    };
    let Some(object) = value.as_object() else {
        return reject("response is valid JSON but not an object".into());
    };
    let expected = ["faithful", "grade", "thought"];
    for key in object.keys() {
        if !expected.contains(&key.as_str()) {
            return reject(format!("extra key {key:?}"));
        }
    }
    for key in expected {
        if !object.contains_key(key) {
            return reject(format!("missing key {key:?}"));
        }
    }
    let Some(faithful_flag) = object["faithful"].as_bool() else {
        return reject("\"faithful\" must be a boolean".into());
    };
    let grade = match object["grade"].as_u64() {
        Some(g) if g <= 10 => g as u8,
        Some(g) => return reject(format!("grade {g} outside 0..=10")),
        None => return reject("\"grade\" must be an integer in 0..=10".into()),
    };
    let Some(thought) = object["thought"].as_str() else {
        return reject("\"thought\" must be a string".into());
    };
    if !compile_pass && (faithful_flag || grade > COMPILE_FAIL_GRADE_CAP) {
        return reject(format!(
            "compile_pass=false requires faithful=false and grade <= {COMPILE_FAIL_GRADE_CAP}, \
             got faithful={faithful_flag} grade={grade}"
        ));
    }
    Ok(JudgeVerdict {
        judge_id: judge_id.to_string(),
        faithful: faithful_flag,
        grade,
        thought: thought.to_string(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct JudgeOptions {
    /// Re-queries allowed after the first rejected response.
    pub retry_cap: u32,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        JudgeOptions { retry_cap: 2 }
    }
}

/// Query one judge model and validate its verdict, retrying contract
/// violations up to the cap.
pub fn judge(
    statement: &str,
    code: &str,
    compile_pass: bool,
    judge_model: &Orchestrator,
    templates: &PromptTemplates,
    options: JudgeOptions,
) -> Result<JudgeVerdict, JudgeError> {
    let history = vec![
        Message::system(templates.judge_system_prompt()),
        Message::user(templates.render_judge_user(statement, code, compile_pass)),
    ];
    let attempts_allowed = options.retry_cap + 1;
    let mut last_error = String::new();
    for attempt in 1..=attempts_allowed {
        let response = judge_model.complete(history.clone(), Vec::new())?;
        match parse_verdict(&response.message.content, &judge_model.model_id, compile_pass) {
            Ok(verdict) => return Ok(verdict),
            Err(JudgeError::ContractViolation(msg)) => {
                log::warn!("judge {} attempt {attempt} rejected: {msg}", judge_model.model_id);
                last_error = msg;
            }
            Err(other) => return Err(other),
        }
    }
    Err(JudgeError::JudgeInvalid { attempts: attempts_allowed, last_error })
}

/// Counts of faithful labels under each judge and their overlap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusSummary {
    pub pass_primary: usize,
    pub pass_secondary: usize,
    pub pass_consensus: usize,
    /// `pass_consensus / pass_primary`; undefined when the primary passed
    /// nothing.
    pub consensus_rate: Option<Ratio<u64>>,
    /// Runs excluded for missing a verdict from either judge.
    pub excluded: usize,
}

impl ConsensusSummary {
    pub fn consensus_rate_percent(&self) -> Option<f64> {
        self.consensus_rate
            .map(|r| 100.0 * (*r.numer() as f64) / (*r.denom() as f64))
    }
}

/// Tally faithfulness under two judges. Faithfulness is recomputed from
/// each verdict's grade and the run's compile flag, not trusted from the
/// judge's own boolean.
pub fn consensus_summary(
    runs: &[RunRecord],
    primary_judge: &str,
    secondary_judge: &str,
) -> ConsensusSummary {
    let mut pass_primary = 0;
    let mut pass_secondary = 0;
    let mut pass_consensus = 0;
    let mut excluded = 0;
    for run in runs {
        let (Some(vp), Some(vs)) = (run.verdicts.get(primary_judge), run.verdicts.get(secondary_judge))
        else {
            excluded += 1;
            continue;
        };
        let fp = run.compile_pass && vp.grade >= FAITHFUL_GRADE_THRESHOLD;
        let fs = run.compile_pass && vs.grade >= FAITHFUL_GRADE_THRESHOLD;
        pass_primary += fp as usize;
        pass_secondary += fs as usize;
        pass_consensus += (fp && fs) as usize;
    }
    let consensus_rate = (pass_primary > 0)
        .then(|| Ratio::new(pass_consensus as u64, pass_primary as u64));
    ConsensusSummary { pass_primary, pass_secondary, pass_consensus, consensus_rate, excluded }
}

/// Containment structure of one system's verdict sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemContainment {
    pub orchestrator_id: String,
    pub config: ToolConfig,
    pub pass_primary: usize,
    pub pass_secondary: usize,
    pub pass_consensus: usize,
    /// `|Pass_primary \ Pass_secondary|`.
    pub primary_only: usize,
    /// `|Pass_secondary \ Pass_primary|`.
    pub secondary_only: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub systems: Vec<SystemContainment>,
    /// Judge disagreements per domain, aggregated across all systems.
    pub domain_disagreements: BTreeMap<Domain, usize>,
}

/// Verdict-set differences per system plus per-domain disagreement totals.
/// A system is one (orchestrator, config) pair; a disagreement is a run the
/// two judges label differently.
pub fn containment_report(
    runs: &[RunRecord],
    corpus: &Corpus,
    primary_judge: &str,
    secondary_judge: &str,
) -> ContainmentReport {
    let mut by_system: BTreeMap<(String, ToolConfig), SystemContainment> = BTreeMap::new();
    let mut domain_disagreements: BTreeMap<Domain, usize> =
        Domain::ALL.iter().map(|d| (*d, 0)).collect();

    for run in runs {
        let (Some(vp), Some(vs)) = (run.verdicts.get(primary_judge), run.verdicts.get(secondary_judge))
        else {
            continue;
        };
        let fp = run.compile_pass && vp.grade >= FAITHFUL_GRADE_THRESHOLD;
        let fs = run.compile_pass && vs.grade >= FAITHFUL_GRADE_THRESHOLD;
        let entry = by_system
            .entry((run.orchestrator_id.clone(), run.config))
            .or_insert_with(|| SystemContainment {
                orchestrator_id: run.orchestrator_id.clone(),
                config: run.config,
                pass_primary: 0,
                pass_secondary: 0,
                pass_consensus: 0,
                primary_only: 0,
                secondary_only: 0,
            });
        entry.pass_primary += fp as usize;
        entry.pass_secondary += fs as usize;
        entry.pass_consensus += (fp && fs) as usize;
        entry.primary_only += (fp && !fs) as usize;
        entry.secondary_only += (fs && !fp) as usize;
        if fp != fs {
            if let Some(domain) = corpus.domain_of(&run.theorem_id) {
                *domain_disagreements.entry(domain).or_insert(0) += 1;
            }
        }
    }

    ContainmentReport {
        systems: by_system.into_values().collect(),
        domain_disagreements,
    }
}

/// Agreement between stored judge grades and an independent reviewer's
/// grades over the same 0-10 rubric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementStats {
    pub total: usize,
    /// Grades match exactly.
    pub exact_match: usize,
    /// Off by one with both grades in the faithful range.
    pub within_one_faithful: usize,
    /// Reviewer's grade falls on the other side of the faithful threshold.
    pub threshold_crossings: usize,
}

impl AgreementStats {
    pub fn from_pairs(pairs: &[(u8, u8)]) -> Result<Self, JudgeError> {
        let mut stats = AgreementStats {
            total: pairs.len(),
            exact_match: 0,
            within_one_faithful: 0,
            threshold_crossings: 0,
        };
        for &(model_grade, human_grade) in pairs {
            for g in [model_grade, human_grade] {
                if g > 10 {
                    return Err(JudgeError::GradeOutOfRange(g));
                }
            }
            if model_grade == human_grade {
                stats.exact_match += 1;
            } else if model_grade.abs_diff(human_grade) == 1
                && model_grade >= FAITHFUL_GRADE_THRESHOLD
                && human_grade >= FAITHFUL_GRADE_THRESHOLD
            {
                stats.within_one_faithful += 1;
            }
            if (model_grade >= FAITHFUL_GRADE_THRESHOLD)
                != (human_grade >= FAITHFUL_GRADE_THRESHOLD)
            {
                stats.threshold_crossings += 1;
            }
        }
        Ok(stats)
    }

    pub fn exact_match_percent(&self) -> f64 {
        percent(self.exact_match, self.total)
    }

    pub fn within_one_percent(&self) -> f64 {
        percent(self.within_one_faithful, self.total)
    }

    pub fn crossing_percent(&self) -> f64 {
        percent(self.threshold_crossings, self.total)
    }

    /// Agreement on the binary faithful/unfaithful classification.
    pub fn binary_agreement_percent(&self) -> f64 {
        percent(self.total - self.threshold_crossings, self.total)
    }
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// A deterministic sample of faithful runs for independent review: every
/// k-th faithful run in (theorem, config) order, with the primary grade
/// alongside so the reviewer sheet is self-contained.
pub fn export_audit_sample(
    runs: &[RunRecord],
    corpus: &Corpus,
    primary_judge: &str,
    sample_cap: usize,
) -> Vec<AuditRow> {
    let mut faithful_runs: Vec<&RunRecord> = runs
        .iter()
        .filter(|r| r.faithful_consensus)
        .collect();
    faithful_runs.sort_by(|a, b| {
        (&a.theorem_id, a.config.code(), &a.orchestrator_id)
            .cmp(&(&b.theorem_id, b.config.code(), &b.orchestrator_id))
    });
    let stride = (faithful_runs.len() / sample_cap.max(1)).max(1);
    faithful_runs
        .iter()
        .step_by(stride)
        .take(sample_cap)
        .map(|run| AuditRow {
            run_key: run.key(),
            statement: corpus
                .get(&run.theorem_id)
                .map(|t| t.statement_text.clone())
                .unwrap_or_default(),
            code: run.final_code.clone().unwrap_or_default(),
            model_grade: run.verdicts.get(primary_judge).map(|v| v.grade),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    pub run_key: String,
    pub statement: String,
    pub code: String,
    pub model_grade: Option<u8>,
}

/// Reviewer grades joined back to stored runs by run key.
pub fn agreement_from_grades(
    runs: &[RunRecord],
    primary_judge: &str,
    reviewer_grades: &[(String, u8)],
) -> Result<AgreementStats, JudgeError> {
    let by_key: HashMap<String, &RunRecord> =
        runs.iter().map(|r| (r.key(), r)).collect();
    let mut pairs = Vec::new();
    for (key, human_grade) in reviewer_grades {
        if let Some(run) = by_key.get(key) {
            if let Some(verdict) = run.verdicts.get(primary_judge) {
                pairs.push((verdict.grade, *human_grade));
            }
        }
    }
    AgreementStats::from_pairs(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::scripted::ScriptedModel;

    #[test]
    fn faithful_threshold() {
        assert!(faithful(true, 9).unwrap());
        assert!(faithful(true, 10).unwrap());
        assert!(!faithful(true, 8).unwrap());
        assert!(!faithful(false, 10).unwrap());
        assert!(faithful(true, 11).is_err());
    }

    #[test]
    fn strict_json_contract() {
        let ok = parse_verdict(
            r####"{"faithful": true, "grade": 10, "thought": "### BEGIN THOUGHT\nok\n### END THOUGHT"}"####,
            "j",
            true,
        );
        assert!(ok.is_ok());

        // Extra key.
        let extra = parse_verdict(
            r#"{"faithful": true, "grade": 10, "thought": "t", "score": 10}"#,
            "j",
            true,
        );
        assert!(matches!(extra, Err(JudgeError::ContractViolation(_))));

        // Non-JSON.
        assert!(parse_verdict("the translation looks great", "j", true).is_err());

        // Missing key.
        assert!(parse_verdict(r#"{"faithful": true, "grade": 10}"#, "j", true).is_err());

        // Non-integer grade.
        assert!(parse_verdict(r#"{"faithful": true, "grade": 9.5, "thought": "t"}"#, "j", true)
            .is_err());
    }

    #[test]
    fn compile_fail_rule_rejects_not_clamps() {
        let raw = r#"{"faithful": true, "grade": 10, "thought": "t"}"#;
        match parse_verdict(raw, "j", false) {
            Err(JudgeError::ContractViolation(msg)) => {
                assert!(msg.contains("compile_pass=false"));
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        // grade 4 with faithful=false still violates the cap.
        let raw = r#"{"faithful": false, "grade": 4, "thought": "t"}"#;
        assert!(parse_verdict(raw, "j", false).is_err());
        // Compliant verdict accepted as-is.
        let raw = r#"{"faithful": false, "grade": 2, "thought": "t"}"#;
        let v = parse_verdict(raw, "j", false).unwrap();
        assert_eq!(v.grade, 2);
    }

    #[test]
    fn judge_retries_then_goes_invalid() {
        let bad = Message::assistant(r#"{"faithful": true, "grade": 10, "thought": "t", "extra": 1}"#);
        let script =
            ScriptedModel::from_messages(vec![bad.clone(), bad.clone(), bad]).unwrap();
        let model = Orchestrator::new("flaky-judge", Box::new(script));
        let out = judge(
            "stmt",
            "code",
            true,
            &model,
            &PromptTemplates::embedded(),
            JudgeOptions { retry_cap: 2 },
        );
        match out {
            Err(JudgeError::JudgeInvalid { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected judge-invalid, got {other:?}"),
        }
    }

    #[test]
    fn judge_recovers_on_retry() {
        let bad = Message::assistant("not json");
        let good = Message::assistant(r#"{"faithful": true, "grade": 9, "thought": "t"}"#);
        let script = ScriptedModel::from_messages(vec![bad, good]).unwrap();
        let model = Orchestrator::new("judge", Box::new(script));
        let verdict = judge(
            "stmt",
            "code",
            true,
            &model,
            &PromptTemplates::embedded(),
            JudgeOptions::default(),
        )
        .unwrap();
        assert_eq!(verdict.grade, 9);
        assert_eq!(verdict.judge_id, "judge");
    }

    #[test]
    fn agreement_stats_arithmetic() {
        // 115 exact, 20 off-by-one inside the faithful band, 3 crossings.
        let mut pairs = Vec::new();
        for _ in 0..115 {
            pairs.push((10u8, 10u8));
        }
        for _ in 0..20 {
            pairs.push((10, 9));
        }
        for _ in 0..3 {
            pairs.push((10, 6));
        }
        let stats = AgreementStats::from_pairs(&pairs).unwrap();
        assert_eq!(stats.total, 138);
        assert!((stats.exact_match_percent() - 83.3).abs() < 0.05);
        assert!((stats.within_one_percent() - 14.5).abs() < 0.05);
        assert!((stats.crossing_percent() - 2.2).abs() < 0.05);
        assert!((stats.binary_agreement_percent() - 97.8).abs() < 0.05);
    }
}
