//! Exposure bias measured as imitation-learning regret.
//!
//! Student language models are trained by teacher forcing against exact
//! synthetic oracles (or queried over a bridge), rolled out under a decoding
//! strategy, and scored by how much per-step KL error they accumulate on
//! their own contexts compared with the oracle's contexts.
//!
//! The main pieces:
//!
//! - [`lm`]: the [`LanguageModel`](lm::LanguageModel) interface, Markov
//!   oracles, smoothed n-gram students, corpus NLL and the per-step KL.
//! - [`decoding`]: greedy, beam, temperature, top-k and top-p decoders and
//!   rollouts that record per-step KL.
//! - [`metrics`]: per-step error, regret curves, `AccErr`, `%ExAccErr`,
//!   bound diagnostics, the perplexity identity and bootstrap errors.
//! - [`textqual`]: rep/128, wrep/128, seq-rep-4 and uniq.
//! - [`exact`]: brute-force enumeration for certifying the estimators.
//! - [`corpus_io`]: tokenized corpora, chunking into prompts, splits.
//! - [`bridge`]: client for remote next-token log-probability servers.
//! - [`workflow`]: the end-to-end commands behind the `regretmeter` binary.

pub mod bridge;
pub mod corpus_io;
pub mod decoding;
pub mod dist;
pub mod error;
pub mod exact;
pub mod fixtures;
pub mod lm;
pub mod metrics;
pub mod rng;
pub mod textqual;
pub mod vocab;
pub mod workflow;

pub use dist::Dist;
pub use error::{Error, Result};
pub use vocab::{Context, TokenId, Vocab};
