//! Topic modeling for literary passages by retelling them with a language
//! model and running LDA over the retellings, alongside two baselines:
//! LDA on the raw passages and a two-stage direct-labeling approach.
//!
//! Modules follow the pipeline stages: `corpus` (books to passages),
//! `retell` (prompting), `preprocess` (bag-of-words), `lda` (collapsed
//! Gibbs sampling), `topicgpt` (direct labeling), and `eval` (scoring).
//! `client` holds the chat-completion backends, `artifact` and `config`
//! the pipeline plumbing.

pub mod artifact;
pub mod client;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod lda;
pub mod preprocess;
pub mod retell;
pub mod topicgpt;
