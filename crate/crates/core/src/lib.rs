//! Plan extraction harness.
//!
//! Builds few-shot TEXT/ACTIONS prompts from annotated instruction corpora,
//! sends them to a completion backend (live or record/replay), parses the
//! functional plan notation out of the completions, and scores extracted
//! plans against essential, exclusive and optional gold actions.

pub mod backend;
pub mod cli;
pub mod corpus;
pub mod notation;
pub mod ordering;
pub mod prompt;
pub mod scorer;

pub use corpus::{ActionInstance, AnnotatedText, DatasetStats, GoldSlot, SlotKind};
pub use notation::{parse_plan, render_plan, ParseDiagnostics, Plan};
pub use ordering::{order_agreement, OrderReport};
pub use prompt::{estimate_tokens, PromptBundle, ShotStrategy};
pub use scorer::{MatchCounts, ScoreOptions, ScoreReport};
