//! Modular prompt assembly.
//!
//! The system prompt is a fixed base (role definition plus general
//! guidelines) concatenated with a tool-availability block listing exactly
//! the active tools. The base is byte-identical across every configuration;
//! the tool block is the *only* thing that varies, so performance
//! differences between configurations are attributable to the tools and not
//! to prompt wording.
//!
//! Templates load from a directory so they can be audited and edited
//! without rebuilding; compiled-in defaults are used otherwise.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::config::ToolConfig;
use crate::corpus::TheoremItem;
use crate::tools::{active_tool_names, ALL_TOOL_NAMES};

pub const TOOL_BLOCK_HEADER: &str = "AVAILABLE TOOLS";

const EMBEDDED_BASE: &str = include_str!("../templates/base_prompt.txt");
const EMBEDDED_USER: &str = include_str!("../templates/user_prompt.txt");
const EMBEDDED_JUDGE_SYSTEM: &str = include_str!("../templates/judge_system_prompt.txt");
const EMBEDDED_JUDGE_USER: &str = include_str!("../templates/judge_user_prompt.txt");

const EMBEDDED_TOOL_ENTRIES: [(&str, &str); 6] = [
    ("lean4_translator", include_str!("../templates/tools/lean4_translator.txt")),
    ("lean_write_file", include_str!("../templates/tools/lean_write_file.txt")),
    ("lean4_repl_runner", include_str!("../templates/tools/lean4_repl_runner.txt")),
    ("lean_inspect_name", include_str!("../templates/tools/lean_inspect_name.txt")),
    ("lean_resolve_name", include_str!("../templates/tools/lean_resolve_name.txt")),
    ("search_online", include_str!("../templates/tools/search_online.txt")),
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The full template set used for episodes and judging.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    base: String,
    user: String,
    judge_system: String,
    judge_user: String,
    tool_entries: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::embedded()
    }
}

impl PromptTemplates {
    /// Compiled-in defaults.
    pub fn embedded() -> Self {
        PromptTemplates {
            base: EMBEDDED_BASE.to_string(),
            user: EMBEDDED_USER.to_string(),
            judge_system: EMBEDDED_JUDGE_SYSTEM.to_string(),
            judge_user: EMBEDDED_JUDGE_USER.to_string(),
            tool_entries: EMBEDDED_TOOL_ENTRIES
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Load from a template directory laid out like `templates/` in this
    /// crate: `base_prompt.txt`, `user_prompt.txt`, `judge_system_prompt.txt`,
    /// `judge_user_prompt.txt`, and `tools/<tool_name>.txt`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let dir = dir.as_ref();
        let read = |rel: &str| -> Result<String, TemplateError> {
            let path = dir.join(rel);
            std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let mut tool_entries = BTreeMap::new();
        for name in ALL_TOOL_NAMES {
            tool_entries.insert(name.to_string(), read(&format!("tools/{name}.txt"))?);
        }
        Ok(PromptTemplates {
            base: read("base_prompt.txt")?,
            user: read("user_prompt.txt")?,
            judge_system: read("judge_system_prompt.txt")?,
            judge_user: read("judge_user_prompt.txt")?,
            tool_entries,
        })
    }

    /// The fixed base prompt, identical for every configuration.
    pub fn base_prompt(&self) -> &str {
        &self.base
    }

    /// Tool-availability block for a configuration. Empty for the zero-tool
    /// baseline; otherwise a header plus one entry per active tool, with
    /// inactive entries deleted.
    pub fn tool_block(&self, config: ToolConfig) -> String {
        let names = active_tool_names(config);
        if names.is_empty() {
            return String::new();
        }
        let mut block = format!("{TOOL_BLOCK_HEADER}\n");
        for name in names {
            let entry = self
                .tool_entries
                .get(name)
                .expect("all active tools have template entries");
            block.push('\n');
            block.push_str(entry.trim_end());
            block.push('\n');
        }
        block
    }

    /// Full system prompt: base followed by the tool block.
    pub fn assemble_system_prompt(&self, config: ToolConfig) -> String {
        let block = self.tool_block(config);
        if block.is_empty() {
            self.base.clone()
        } else {
            format!("{}\n{}", self.base.trim_end_matches('\n'), block)
        }
    }

    pub fn render_user(&self, item: &TheoremItem) -> String {
        self.user
            .replace("{theorem_id}", &item.id)
            .replace("{domain}", item.domain.display_name())
            .replace("{statement}", &item.statement_text)
    }

    pub fn judge_system_prompt(&self) -> &str {
        &self.judge_system
    }

    pub fn render_judge_user(&self, statement: &str, code: &str, compile_pass: bool) -> String {
        self.judge_user
            .replace("{statement}", statement)
            .replace("{code}", code)
            .replace("{compile_pass}", if compile_pass { "true" } else { "false" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ToolConfig;

    #[test]
    fn full_config_lists_all_six_entries() {
        let t = PromptTemplates::embedded();
        let block = t.tool_block("111".parse().unwrap());
        assert!(block.starts_with(TOOL_BLOCK_HEADER));
        for name in ALL_TOOL_NAMES {
            assert!(block.contains(name), "block must list {name}");
        }
    }

    #[test]
    fn baseline_has_empty_block() {
        let t = PromptTemplates::embedded();
        assert_eq!(t.tool_block(ToolConfig::BASELINE), "");
        assert_eq!(t.assemble_system_prompt(ToolConfig::BASELINE), t.base_prompt());
    }

    #[test]
    fn feedback_only_lists_write_and_repl() {
        let t = PromptTemplates::embedded();
        let block = t.tool_block("010".parse().unwrap());
        assert!(block.contains("lean_write_file"));
        assert!(block.contains("lean4_repl_runner"));
        assert!(!block.contains("lean4_translator"));
        assert!(!block.contains("lean_inspect_name"));
        assert!(!block.contains("lean_resolve_name"));
        assert!(!block.contains("search_online"));
    }

    #[test]
    fn base_prefix_is_byte_identical_across_configs() {
        let t = PromptTemplates::embedded();
        let base = t.assemble_system_prompt(ToolConfig::BASELINE);
        let prefix = base.trim_end_matches('\n');
        for config in ToolConfig::ALL {
            let prompt = t.assemble_system_prompt(config);
            assert!(
                prompt.as_bytes().starts_with(prefix.as_bytes()),
                "config {config} must share the base prefix"
            );
            let rest = &prompt[prefix.len()..];
            if !config.is_baseline() {
                assert!(rest.contains(TOOL_BLOCK_HEADER));
            }
            // Nothing after the base except the tool block.
            assert!(!rest.contains("GENERAL INSTRUCTIONS"));
        }
    }

    #[test]
    fn user_template_substitutes_fields() {
        let t = PromptTemplates::embedded();
        let item = TheoremItem {
            id: "ca_17658".into(),
            domain: crate::corpus::Domain::ComplexAnalysis,
            statement_text: "Every bounded entire function is constant.".into(),
            source_ref: "notes".into(),
        };
        let rendered = t.render_user(&item);
        assert!(rendered.contains("Theorem name: ca_17658"));
        assert!(rendered.contains("Domain: Complex Analysis"));
        assert!(rendered.contains("Every bounded entire function is constant."));
    }

    #[test]
    fn loading_the_repo_templates_matches_embedded() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/templates");
        let loaded = PromptTemplates::load(dir).unwrap();
        let embedded = PromptTemplates::embedded();
        for config in ToolConfig::ALL {
            assert_eq!(
                loaded.assemble_system_prompt(config),
                embedded.assemble_system_prompt(config)
            );
        }
        assert_eq!(loaded.judge_system_prompt(), embedded.judge_system_prompt());
    }
}
