//! Tool-usage behavioral statistics over episode transcripts.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::Serialize;

use crate::agent::EpisodeTranscript;
use crate::config::ToolConfig;
use crate::tools::{
    TOOL_INSPECT, TOOL_REPL, TOOL_RESOLVE, TOOL_SEARCH, TOOL_TRANSLATOR, TOOL_WRITE_FILE,
};

/// Cumulative tool invocations for one configuration. The three search
/// tools aggregate into `s_total`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UsageCounts {
    pub translator: u64,
    pub repl: u64,
    pub s_total: u64,
    pub write_file: u64,
    /// Calls to names outside the tool API; their presence is flagged.
    pub other: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UsageSummary {
    pub per_config: BTreeMap<ToolConfig, UsageCounts>,
    /// Unknown tool names encountered, for the audit trail.
    pub flagged_names: BTreeSet<String>,
    /// Transcripts counted, per config.
    pub coverage: BTreeMap<ToolConfig, usize>,
}

impl UsageSummary {
    pub fn counts(&self, config: ToolConfig) -> UsageCounts {
        self.per_config.get(&config).copied().unwrap_or_default()
    }

    /// Relative drop in REPL calls from `from` to `to`: `(a - b) / a`.
    pub fn repl_reduction(&self, from: ToolConfig, to: ToolConfig) -> Option<Ratio<i64>> {
        let a = self.counts(from).repl as i64;
        let b = self.counts(to).repl as i64;
        (a > 0).then(|| Ratio::new(a - b, a))
    }
}

/// Count tool calls across transcripts grouped by configuration.
pub fn usage_summary<'a>(
    transcripts: impl IntoIterator<Item = (ToolConfig, &'a EpisodeTranscript)>,
) -> UsageSummary {
    let mut summary = UsageSummary::default();
    for (config, transcript) in transcripts {
        let counts = summary.per_config.entry(config).or_default();
        *summary.coverage.entry(config).or_insert(0) += 1;
        for message in &transcript.messages {
            for call in &message.tool_calls {
                match call.tool_name.as_str() {
                    TOOL_TRANSLATOR => counts.translator += 1,
                    TOOL_REPL => counts.repl += 1,
                    TOOL_INSPECT | TOOL_RESOLVE | TOOL_SEARCH => counts.s_total += 1,
                    TOOL_WRITE_FILE => counts.write_file += 1,
                    unknown => {
                        counts.other += 1;
                        summary.flagged_names.insert(unknown.to_string());
                    }
                }
            }
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::{Message, ToolCall};

    fn transcript_with_calls(names: &[&str]) -> EpisodeTranscript {
        let calls: Vec<ToolCall> = names
            .iter()
            .enumerate()
            .map(|(i, name)| ToolCall {
                call_id: format!("c{i}"),
                tool_name: name.to_string(),
                arguments: serde_json::json!({}),
            })
            .collect();
        let mut messages = vec![Message::system("s"), Message::user("u")];
        for call in calls {
            let id = call.call_id.clone();
            messages.push(Message::assistant_calls("", vec![call]));
            messages.push(Message::tool_reply(id, "{}"));
        }
        EpisodeTranscript { messages, tool_outcomes: vec![], steps: names.len() as u32 }
    }

    #[test]
    fn groups_and_aggregates() {
        let cfg: ToolConfig = "111".parse().unwrap();
        let t = transcript_with_calls(&[
            TOOL_TRANSLATOR,
            TOOL_WRITE_FILE,
            TOOL_REPL,
            TOOL_INSPECT,
            TOOL_RESOLVE,
            TOOL_SEARCH,
            TOOL_REPL,
        ]);
        let summary = usage_summary([(cfg, &t)]);
        let counts = summary.counts(cfg);
        assert_eq!(counts.translator, 1);
        assert_eq!(counts.repl, 2);
        assert_eq!(counts.s_total, 3);
        assert_eq!(counts.write_file, 1);
        assert_eq!(counts.other, 0);
    }

    #[test]
    fn unknown_names_flagged_under_other() {
        let cfg: ToolConfig = "010".parse().unwrap();
        let t = transcript_with_calls(&["lean_prove_it"]);
        let summary = usage_summary([(cfg, &t)]);
        assert_eq!(summary.counts(cfg).other, 1);
        assert!(summary.flagged_names.contains("lean_prove_it"));
    }

    #[test]
    fn empty_set_is_all_zero() {
        let summary = usage_summary(std::iter::empty::<(ToolConfig, &EpisodeTranscript)>());
        assert!(summary.per_config.is_empty());
        assert_eq!(summary.counts("111".parse().unwrap()), UsageCounts::default());
    }

    #[test]
    fn repl_reduction_ratio() {
        let from: ToolConfig = "010".parse().unwrap();
        let to: ToolConfig = "011".parse().unwrap();
        let mut summary = UsageSummary::default();
        summary
            .per_config
            .insert(from, UsageCounts { repl: 1496, ..Default::default() });
        summary
            .per_config
            .insert(to, UsageCounts { repl: 1050, ..Default::default() });
        let reduction = summary.repl_reduction(from, to).unwrap();
        assert_eq!(reduction, Ratio::new(446, 1496));
        // 29.8% within a tenth of a point.
        let pct = 100.0 * (*reduction.numer() as f64) / (*reduction.denom() as f64);
        assert!((pct - 29.8).abs() < 0.1);
    }
}
