//! Mining privacy-relevant app reviews: NLI entailment screening with
//! heuristic pseudo-labels, LLM majority-vote classification and human
//! confirmation.

pub mod backend;
pub mod corpus;
pub mod eval;
pub mod hypotheses;
pub mod llm;
pub mod nli;
pub mod pipeline;
pub mod synth;
