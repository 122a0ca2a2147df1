//! Building blocks for evaluating lexical disambiguation in multi-domain
//! machine translation: corpus loading, aligned lexicon extraction,
//! cross-domain ambiguous vocabularies, prompt strategies, metrics and
//! score tables.

pub mod ambiguity;
pub mod annotation;
pub mod corpus;
pub mod exec;
pub mod lexicon;
pub mod metrics;
pub mod prompts;
pub mod report;
pub mod sampling;
pub mod text;

pub use exec::Execution;
