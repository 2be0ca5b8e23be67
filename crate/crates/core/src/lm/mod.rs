//! Chain-factorized language models: the query interface, tabular oracles and
//! students, likelihood evaluation and the per-step KL loss.

mod likelihood;
mod markov;
mod ngram;
pub mod serial;

pub use likelihood::{
    corpus_nll, corpus_nll_by_sequence, kl_between, kl_next, kl_next_with, sample_corpus, sample_sequence,
    token_logprobs, ProbabilityFloor,
};
pub use markov::MarkovOracle;
pub use ngram::{train_ngram, NGramStudent};
pub use serial::StoredModel;

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocab};

/// Anything that answers next-token distribution queries.
///
/// Implementations are immutable after construction and may be queried
/// concurrently. `ctx` always starts with bos and never ends in eos.
pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocab;

    fn next_dist(&self, ctx: &[TokenId]) -> Result<Dist>;

    /// Batched form; remote models override this to amortize round trips.
    fn next_dists(&self, ctxs: &[&[TokenId]]) -> Result<Vec<Dist>> {
        ctxs.iter().map(|c| self.next_dist(c)).collect()
    }

    /// Stable identifier recorded in report metadata.
    fn model_id(&self) -> String;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab(&self) -> &Vocab {
        (**self).vocab()
    }
    fn next_dist(&self, ctx: &[TokenId]) -> Result<Dist> {
        (**self).next_dist(ctx)
    }
    fn next_dists(&self, ctxs: &[&[TokenId]]) -> Result<Vec<Dist>> {
        (**self).next_dists(ctxs)
    }
    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn vocab(&self) -> &Vocab {
        (**self).vocab()
    }
    fn next_dist(&self, ctx: &[TokenId]) -> Result<Dist> {
        (**self).next_dist(ctx)
    }
    fn next_dists(&self, ctxs: &[&[TokenId]]) -> Result<Vec<Dist>> {
        (**self).next_dists(ctxs)
    }
    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

/// Validated query: rejects malformed and terminal contexts before reaching the model.
pub fn next_dist(model: &dyn LanguageModel, ctx: &[TokenId]) -> Result<Dist> {
    model.vocab().validate_context(ctx)?;
    model.vocab().check_query(ctx)?;
    model.next_dist(ctx)
}

pub(crate) fn ensure_same_vocab(a: &dyn LanguageModel, b: &dyn LanguageModel) -> Result<()> {
    let (va, vb) = (a.vocab(), b.vocab());
    if va.size() != vb.size() || va.bos() != vb.bos() || va.eos() != vb.eos() {
        return Err(Error::VocabMismatch(format!(
            "{} has V={} bos={} eos={}, {} has V={} bos={} eos={}",
            a.model_id(),
            va.size(),
            va.bos(),
            va.eos(),
            b.model_id(),
            vb.size(),
            vb.bos(),
            vb.eos()
        )));
    }
    Ok(())
}

/// Last `order` tokens of `ctx`, left-padded with bos.
pub(crate) fn markov_state(ctx: &[TokenId], order: usize, bos: TokenId) -> Vec<TokenId> {
    let mut state = vec![bos; order];
    let take = ctx.len().min(order);
    state[order - take..].copy_from_slice(&ctx[ctx.len() - take..]);
    state
}

/// Token sequences, each starting with bos and ending in eos or truncated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    sequences: Vec<Vec<TokenId>>,
}

impl Corpus {
    pub fn new(vocab: &Vocab, sequences: Vec<Vec<TokenId>>) -> Result<Self> {
        for (i, seq) in sequences.iter().enumerate() {
            vocab
                .validate_context(seq)
                .map_err(|e| Error::InvalidContext(format!("sequence {i}: {e}")))?;
        }
        Ok(Self { sequences })
    }

    pub fn sequences(&self) -> &[Vec<TokenId>] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Number of predicted (non-bos) tokens.
    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(|s| s.len() - 1).sum()
    }

    pub fn into_sequences(self) -> Vec<Vec<TokenId>> {
        self.sequences
    }
}
