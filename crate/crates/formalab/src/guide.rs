//! The narrative guide, rendered with mdbook from `book/` at the workspace
//! root. Each chapter is included here as a doc comment so its code
//! snippets compile and run under `cargo test --doc`, keeping the book and
//! the library in lockstep.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/corpus-and-store.md")]
pub mod corpus_and_store {}

#[doc = include_str!("../../../book/src/prompts-and-episodes.md")]
pub mod prompts_and_episodes {}

#[doc = include_str!("../../../book/src/toolbelt.md")]
pub mod toolbelt {}

#[doc = include_str!("../../../book/src/gateways.md")]
pub mod gateways {}

#[doc = include_str!("../../../book/src/judging.md")]
pub mod judging {}

#[doc = include_str!("../../../book/src/factorial-effects.md")]
pub mod factorial_effects {}

#[doc = include_str!("../../../book/src/bootstrap.md")]
pub mod bootstrap {}

#[doc = include_str!("../../../book/src/reports-and-cli.md")]
pub mod reports_and_cli {}
