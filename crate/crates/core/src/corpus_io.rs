//! Reading and writing token corpora, chunking into prompts, and splits.
//!
//! Files never contain bos; the loader prepends it to every sequence.
//!
//! - `ids`: one sequence per line, space-separated decimal token ids.
//! - `char`: the whole file is one document, one token per character.
//! - `whitespace`: the whole file is one document, tokens split on whitespace.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lm::Corpus;
use crate::rng::substream;
use crate::vocab::{TokenId, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    Char,
    Whitespace,
    Ids,
}

impl FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(Self::Char),
            "whitespace" => Ok(Self::Whitespace),
            "ids" | "pretokenized-ids" => Ok(Self::Ids),
            _ => Err(Error::param(format!(
                "unknown tokenizer mode `{s}`; expected char, whitespace or ids"
            ))),
        }
    }
}

impl fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Char => "char",
            Self::Whitespace => "whitespace",
            Self::Ids => "ids",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerSpec {
    pub mode: TokenizerMode,
    pub vocab: Vocab,
    /// Append eos to every sequence that does not already end with it.
    pub append_eos: bool,
}

impl TokenizerSpec {
    pub fn new(mode: TokenizerMode, vocab: Vocab) -> Self {
        Self {
            mode,
            vocab,
            append_eos: false,
        }
    }

    pub fn with_eos(mut self) -> Self {
        self.append_eos = true;
        self
    }

    /// Tokens of one document, without bos. `line` offsets error positions.
    fn tokenize_at(&self, text: &str, line: usize) -> Result<Vec<TokenId>> {
        let v = &self.vocab;
        let mut out = Vec::new();
        let mut push = |tok: TokenId, ln: usize, col: usize| -> Result<()> {
            if !v.contains(tok) {
                return Err(perr(ln, col, format!("token id {tok} is outside the vocabulary (V={})", v.size())));
            }
            if tok == v.bos() {
                return Err(perr(ln, col, "bos must not appear in token files"));
            }
            if out.last() == Some(&v.eos()) {
                return Err(perr(ln, col, "token after eos"));
            }
            out.push(tok);
            Ok(())
        };
        match self.mode {
            TokenizerMode::Ids => {
                for (col, field) in fields(text) {
                    let id: TokenId = field
                        .parse()
                        .map_err(|_| perr(line, col, format!("`{field}` is not a token id")))?;
                    push(id, line, col)?;
                }
            }
            TokenizerMode::Whitespace => {
                for (ln, l) in text.split('\n').enumerate() {
                    for (col, field) in fields(l) {
                        let id = v
                            .id(field)
                            .ok_or_else(|| perr(line + ln, col, format!("unknown token `{field}`")))?;
                        push(id, line + ln, col)?;
                    }
                }
            }
            TokenizerMode::Char => {
                let mut buf = [0u8; 4];
                let (mut ln, mut col) = (line, 1);
                for c in text.chars() {
                    let id = v
                        .id(c.encode_utf8(&mut buf))
                        .ok_or_else(|| perr(ln, col, format!("character {c:?} is not in the vocabulary")))?;
                    push(id, ln, col)?;
                    if c == '\n' {
                        ln += 1;
                        col = 1;
                    } else {
                        col += 1;
                    }
                }
            }
        }
        if self.append_eos && out.last() != Some(&v.eos()) {
            out.push(v.eos());
        }
        Ok(out)
    }

    /// Sequences with bos prepended.
    pub fn parse(&self, text: &str) -> Result<Corpus> {
        let bos = self.vocab.bos();
        let docs: Vec<Vec<TokenId>> = match self.mode {
            TokenizerMode::Ids => text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| self.tokenize_at(l, i + 1))
                .collect::<Result<_>>()?,
            _ => vec![self.tokenize_at(text, 1)?],
        };
        let seqs = docs
            .into_iter()
            .map(|d| std::iter::once(bos).chain(d).collect())
            .collect();
        Corpus::new(&self.vocab, seqs)
    }

    /// Tokens of `text` (no bos).
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        self.tokenize_at(text, 1)
    }

    /// Inverse of [`tokenize`](Self::tokenize) for char and whitespace modes;
    /// space-separated ids in ids mode. bos and eos are dropped.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let v = &self.vocab;
        let toks = ids.iter().filter(|&&t| t != v.bos() && t != v.eos());
        match self.mode {
            TokenizerMode::Char => toks.filter_map(|&t| v.token(t)).collect(),
            TokenizerMode::Whitespace => toks.filter_map(|&t| v.token(t)).collect::<Vec<_>>().join(" "),
            TokenizerMode::Ids => toks.map(|t| t.to_string()).collect::<Vec<_>>().join(" "),
        }
    }
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated fields with their 1-based character columns.
fn fields(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut col = 0;
    let mut start = None;
    let mut out = Vec::new();
    for (byte, c) in line.char_indices() {
        col += 1;
        if c.is_whitespace() {
            if let Some((s, scol)) = start.take() {
                out.push((scol, &line[s..byte]));
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((s, scol)) = start {
        out.push((scol, &line[s..]));
    }
    out.into_iter()
}

pub fn read_tokens(path: impl AsRef<Path>, spec: &TokenizerSpec) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    spec.parse(&text)
}

/// One line of space-separated ids per sequence, bos omitted.
pub fn format_ids(corpus: &Corpus) -> String {
    let mut out = String::new();
    for seq in corpus.sequences() {
        let line: Vec<String> = seq.iter().skip(1).map(|t| t.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Writes the ids format.
pub fn write_tokens(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_ids(corpus)).map_err(|e| Error::io(path, e))
}

/// Prompts and their gold continuations. Each prompt is bos followed by
/// `prompt_len` tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptSet {
    pub prompts: Vec<Vec<TokenId>>,
    pub golds: Vec<Vec<TokenId>>,
    pub chunk_len: usize,
    pub prompt_len: usize,
}

impl PromptSet {
    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// Keeps the first `n` prompts.
    pub fn truncate(&mut self, n: usize) {
        self.prompts.truncate(n);
        self.golds.truncate(n);
    }
}

/// Concatenates all sequences (bos and eos dropped), cuts the stream into
/// consecutive non-overlapping windows of `chunk_len` tokens, and splits
/// each window into a prompt and a gold continuation. A trailing window
/// shorter than `prompt_len + 1` is dropped.
pub fn chunk_and_prompt(corpus: &Corpus, vocab: &Vocab, chunk_len: usize, prompt_len: usize) -> Result<PromptSet> {
    if prompt_len == 0 || prompt_len >= chunk_len {
        return Err(Error::param(format!(
            "need 0 < prompt_len < chunk_len, got prompt_len={prompt_len}, chunk_len={chunk_len}"
        )));
    }
    let stream: Vec<TokenId> = corpus
        .sequences()
        .iter()
        .flatten()
        .copied()
        .filter(|&t| t != vocab.bos() && t != vocab.eos())
        .collect();
    let mut set = PromptSet {
        prompts: Vec::new(),
        golds: Vec::new(),
        chunk_len,
        prompt_len,
    };
    for chunk in stream.chunks(chunk_len) {
        if chunk.len() <= prompt_len {
            continue;
        }
        let mut prompt = Vec::with_capacity(prompt_len + 1);
        prompt.push(vocab.bos());
        prompt.extend_from_slice(&chunk[..prompt_len]);
        set.prompts.push(prompt);
        set.golds.push(chunk[prompt_len..].to_vec());
    }
    Ok(set)
}

/// Seeded sequence-level split; `round(train_frac · n)` sequences go to the
/// training side. Both sides keep the original relative order.
pub fn split(corpus: &Corpus, vocab: &Vocab, train_frac: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::param(format!("train fraction must lie in (0, 1), got {train_frac}")));
    }
    let n = corpus.len();
    let n_train = (train_frac * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::param(format!(
            "splitting {n} sequences at {train_frac} leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, "split", 0));
    let mut is_train = vec![false; n];
    idx[..n_train].iter().for_each(|&i| is_train[i] = true);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (seq, t) in corpus.sequences().iter().zip(is_train) {
        if t { &mut train } else { &mut held }.push(seq.clone());
    }
    Ok((Corpus::new(vocab, train)?, Corpus::new(vocab, held)?))
}
