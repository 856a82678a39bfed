//! Harness for running tool-augmented formalization episodes and analyzing
//! what each tool contributes.
//!
//! The pipeline has three stages:
//!
//! 1. **Episodes** ([`agent`]): an orchestrator model drives a budgeted
//!    tool-calling loop that translates a natural-language theorem into a
//!    single proof-assistant statement declaration ending in `:= by sorry`.
//!    Which tools are exposed is controlled by a [`config::ToolConfig`]
//!    bit triple, and nothing but the tool block of the system prompt ever
//!    changes between configurations.
//! 2. **Evaluation** ([`judge`]): a compile gate rejects anything that does
//!    not elaborate, then two independent judge models grade semantic
//!    faithfulness on a 0-10 rubric with a strict JSON output contract.
//! 3. **Analysis** ([`stats`], [`report`]): per-theorem binary outcomes over
//!    all eight tool configurations feed factorial main effects, simple
//!    effects, interactions, bootstrap confidence intervals, efficiency
//!    curves, and tool-usage behavioral summaries.
//!
//! Every external dependency (orchestrator models, judge models, the
//! proof-assistant toolchain, web search) sits behind a swappable backend so
//! the whole pipeline runs deterministically offline against scripted
//! models, replay fixtures, or a miniature statement checker.
//!
//! The narrative guide under `book/` walks through each stage; its code
//! snippets compile as doc-tests via the [`guide`] module.

pub mod agent;
pub mod chat;
pub mod config;
pub mod corpus;
pub mod fixtures;
pub mod gateway;
pub mod guide;
pub mod judge;
pub mod net;
pub mod prompt;
pub mod report;
pub mod runner;
pub mod stats;
pub mod store;
pub mod tools;

pub use config::{Factor, ToolConfig};
pub use corpus::{Corpus, Domain, TheoremItem};
pub use store::{RunRecord, RunStore};
