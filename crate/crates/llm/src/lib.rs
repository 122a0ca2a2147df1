//! Chat-completion backends and the machinery that drives prompt strategies
//! against them: budget checks, retries, bounded-parallel runs with
//! checkpointing, the LLM judge and an external learned-metric scorer.

pub mod backend;
pub mod config;
pub mod http;
pub mod judge;
pub mod mock;
pub mod runner;

pub use backend::{
    complete, BackendError, ChatBackend, ChatExchange, ChatRequest, ChatResponse, RetryPolicy,
};
pub use config::{estimate_tokens, GenerationConfig};
pub use http::HttpBackend;
pub use mock::{FnBackend, MockBackend, MockFallback};
pub use runner::{run_strategy, RunError, RunItem, RunOptions, RunRecord};
