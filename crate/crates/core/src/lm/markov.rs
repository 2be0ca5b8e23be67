use sha2::{Digest, Sha256};

use super::{markov_state, LanguageModel};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocab};

const MAX_ROWS: usize = 1 << 24;

/// Order-`m` Markov model with a total table: one distribution for every
/// length-`m` state over the full vocabulary (states shorter than `m` are
/// padded with bos). Used both for exact oracles and for hand-built students.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovOracle {
    vocab: Vocab,
    order: usize,
    rows: Vec<Dist>,
}

impl MarkovOracle {
    /// Rows in canonical state order (base-V, most distant token first).
    pub fn from_rows(vocab: Vocab, order: usize, rows: Vec<Dist>) -> Result<Self> {
        let expected = row_count(vocab.size(), order)?;
        if rows.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: rows.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != vocab.size() {
                return Err(Error::InvalidDist(format!(
                    "row {i} has length {}, vocabulary has {}",
                    row.len(),
                    vocab.size()
                )));
            }
            if row.prob(vocab.bos()) != 0.0 {
                return Err(Error::InvalidDist(format!(
                    "row {i} gives bos positive probability"
                )));
            }
        }
        Ok(Self { vocab, order, rows })
    }

    /// Builds every row by calling `row_for(state)`.
    pub fn from_fn<F>(vocab: Vocab, order: usize, mut row_for: F) -> Result<Self>
    where
        F: FnMut(&[TokenId]) -> Result<Dist>,
    {
        let n = row_count(vocab.size(), order)?;
        let mut rows = Vec::with_capacity(n);
        for idx in 0..n {
            let state = decode_state(idx, vocab.size(), order);
            rows.push(row_for(&state)?);
        }
        Self::from_rows(vocab, order, rows)
    }

    /// Context-free model with the same distribution everywhere.
    pub fn order0(vocab: Vocab, dist: Dist) -> Result<Self> {
        Self::from_rows(vocab, 0, vec![dist])
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rows(&self) -> &[Dist] {
        &self.rows
    }

    pub fn states(&self) -> impl Iterator<Item = Vec<TokenId>> + '_ {
        let (v, m) = (self.vocab.size(), self.order);
        (0..self.rows.len()).map(move |i| decode_state(i, v, m))
    }

    pub fn row(&self, state: &[TokenId]) -> &Dist {
        &self.rows[encode_state(state, self.vocab.size())]
    }

    pub fn to_text(&self) -> String {
        super::serial::write_markov(self)
    }
}

impl LanguageModel for MarkovOracle {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn next_dist(&self, ctx: &[TokenId]) -> Result<Dist> {
        self.vocab.check_query(ctx)?;
        let state = markov_state(ctx, self.order, self.vocab.bos());
        Ok(self.row(&state).clone())
    }

    fn model_id(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        format!("markov{}-{:x}", self.order, digest)[..24].to_string()
    }
}

fn row_count(v: usize, order: usize) -> Result<usize> {
    let mut n: usize = 1;
    for _ in 0..order {
        n = n
            .checked_mul(v)
            .filter(|&n| n <= MAX_ROWS)
            .ok_or_else(|| Error::param(format!("{v}^{order} table rows is too large")))?;
    }
    Ok(n)
}

pub(crate) fn encode_state(state: &[TokenId], v: usize) -> usize {
    state.iter().fold(0, |acc, &t| acc * v + t as usize)
}

pub(crate) fn decode_state(mut idx: usize, v: usize, order: usize) -> Vec<TokenId> {
    let mut state = vec![0; order];
    for slot in state.iter_mut().rev() {
        *slot = (idx % v) as TokenId;
        idx /= v;
    }
    state
}
