use std::collections::{BTreeMap, HashMap};

use sha2::{Digest, Sha256};

use super::{markov_state, Corpus, LanguageModel};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocab};

/// Count-based n-gram student with additive smoothing.
///
/// `P(w | s) = (count(s, w) + λ) / (count(s) + λ·V')` where `V'` is the
/// number of emittable tokens (bos is never predicted). States never seen in
/// training fall back to the uniform distribution over emittable tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramStudent {
    vocab: Vocab,
    order: usize,
    lambda: f64,
    rows: BTreeMap<Vec<TokenId>, Dist>,
    fallback: Dist,
}

/// Teacher-forced training: smoothed relative frequencies over the corpus.
/// With `lambda = 0` this is the exact NLL minimizer among order-`n` tables.
pub fn train_ngram(corpus: &Corpus, vocab: &Vocab, order: usize, lambda: f64) -> Result<NGramStudent> {
    if corpus.is_empty() || corpus.token_count() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("smoothing λ must be finite and ≥ 0, got {lambda}")));
    }
    let v = vocab.size();
    let mut counts: HashMap<Vec<TokenId>, Vec<u64>> = HashMap::new();
    for seq in corpus.sequences() {
        for i in 1..seq.len() {
            let state = markov_state(&seq[..i], order, vocab.bos());
            counts.entry(state).or_insert_with(|| vec![0; v])[seq[i] as usize] += 1;
        }
    }
    let emittable = vocab.emittable() as f64;
    let mut rows = BTreeMap::new();
    for (state, row) in counts {
        let total: u64 = row.iter().sum();
        let denom = total as f64 + lambda * emittable;
        let logprobs = row
            .iter()
            .enumerate()
            .map(|(tok, &c)| {
                if tok == vocab.bos() as usize {
                    f64::NEG_INFINITY
                } else {
                    ((c as f64 + lambda) / denom).ln()
                }
            })
            .collect();
        rows.insert(state, Dist::from_logprobs(logprobs)?);
    }
    Ok(NGramStudent {
        vocab: vocab.clone(),
        order,
        lambda,
        rows,
        fallback: Dist::uniform_except(v, vocab.bos()),
    })
}

impl NGramStudent {
    pub(crate) fn from_parts(
        vocab: Vocab,
        order: usize,
        lambda: f64,
        rows: BTreeMap<Vec<TokenId>, Dist>,
    ) -> Self {
        let fallback = Dist::uniform_except(vocab.size(), vocab.bos());
        Self {
            vocab,
            order,
            lambda,
            rows,
            fallback,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Rows for states observed in training.
    pub fn rows(&self) -> &BTreeMap<Vec<TokenId>, Dist> {
        &self.rows
    }

    pub fn to_text(&self) -> String {
        super::serial::write_ngram(self)
    }
}

impl LanguageModel for NGramStudent {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn next_dist(&self, ctx: &[TokenId]) -> Result<Dist> {
        self.vocab.check_query(ctx)?;
        let state = markov_state(ctx, self.order, self.vocab.bos());
        Ok(self.rows.get(&state).unwrap_or(&self.fallback).clone())
    }

    fn model_id(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        format!("ngram{}-{:x}", self.order, digest)[..24].to_string()
    }
}
