//! Relational embeddings from drug–protein facts.
//!
//! A relational regression tree is learned over labelled drug pairs; each
//! root-to-leaf path becomes a first-order rule with head `interacts(D1,D2)`,
//! and a pair is embedded as the vector of its grounding counts per rule.

mod ground;
mod kb;
mod lexer;
mod rrt;
mod rule;

pub use ground::{count_groundings, relational_embed, CompiledRules};
pub use kb::{parse_facts, parse_facts_with_signature, Fact, KnowledgeBase};
pub use rrt::{
    candidate_tests, extract_rules, learn_rrt, score_split, RegressionTree, RrtConfig, RrtExample, TreeNode,
};
pub use rule::{Atom, Literal, Rule, RuleSet, Term, HEAD_VARS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelationalError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, column {col}: `{predicate}` takes 2 arguments, got {got}")]
    Arity { line: usize, col: usize, predicate: String, got: usize },
    #[error("predicate `{0}` is not in the declared signature")]
    UnknownPredicate(String),
    #[error("malformed rule: {0}")]
    MalformedRule(String),
    #[error("no training examples")]
    NoExamples,
    #[error("non-finite target for pair ({drug_a}, {drug_b})")]
    InvalidTarget { drug_a: String, drug_b: String },
}
