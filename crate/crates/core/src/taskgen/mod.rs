//! Prompt-suite generators, behavioral scorers and graph utilities.
//!
//! Every generator is a pure function of its arguments and seed. Each record
//! carries the rendered prompt, labeled character spans and string labels in
//! a [`SuiteItem`], so suites serialize to JSON lines that an extractor can
//! consume without knowing the task.

mod graph;
mod persona;
mod pools;
mod reading;
mod regression;
mod suite;
mod text;

use thiserror::Error;

pub use graph::{
    bfs_distances, builtin_graph, builtin_graphs, diameter, gen_graph_suite, score_traversal,
    shortest_path, successor_representation, transition_matrix, Condition, Domain, GraphSpec,
    GraphSuite, TraversalTask, BUILTIN_GRAPHS,
};
pub use persona::{gen_persona_suite, PersonaPrompt, PersonaTemplate};
pub use reading::{gen_reading_suite, score_reading, ReadingPrompt};
pub use regression::{
    fit_line, gen_regression_suite, parse_numeric_response, permute_icl_examples, score_regression,
    LineSpec, RangeKind, RegressionPrompt,
};
pub use suite::{read_suite, write_suite, Score, SuiteEntry, SuiteItem, TaskKind};
pub use text::{normalize_text, PromptBuilder};

#[derive(Debug, Error)]
pub enum TaskgenError {
    #[error("no number found in response")]
    NoNumberFound,
    #[error("pool exhausted: need {needed} {what}, pool has {available}")]
    PoolExhausted {
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid graph '{id}': {message}")]
    InvalidGraph { id: String, message: String },
    #[error("unknown node {0}")]
    UnknownNode(u32),
    #[error("node {goal} is unreachable from node {start}")]
    Unreachable { start: u32, goal: u32 },
    #[error("gamma must lie in [0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("transition matrix is not row-stochastic")]
    NotStochastic,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("no conditions requested")]
    EmptyConditions,
    #[error("unknown graph '{0}'")]
    UnknownGraph(String),
    #[error("suite line {line}: {source}")]
    SuiteFormat {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TaskgenError>;

/// Stream tags keeping generator randomness independent across suites.
pub(crate) mod tags {
    pub const REGRESSION: u64 = 1;
    pub const READING: u64 = 2;
    pub const GRAPH: u64 = 3;
    pub const PERSONA: u64 = 4;
    pub const PERMUTE: u64 = 5;
}
