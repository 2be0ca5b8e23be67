//! Generation-quality metrics: rep/128, wrep/128, seq-rep-4 and uniq.
//!
//! Excluded tokens (eos, and bos by default) are stripped from prompts,
//! continuations and golds before any metric is computed. rep and wrep are
//! micro-averaged over generated positions, seq-rep-4 is macro-averaged over
//! continuations, uniq is counted over the whole batch.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use crate::decoding::Rollout;
use crate::metrics::report::{fmt_float, write_records, NA};
use crate::vocab::{TokenId, Vocab};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Completion {
    pub prompt: Vec<TokenId>,
    pub continuation: Vec<TokenId>,
}

impl Completion {
    pub fn new(prompt: Vec<TokenId>, continuation: Vec<TokenId>) -> Self {
        Self { prompt, continuation }
    }

    pub fn unprompted(continuation: Vec<TokenId>) -> Self {
        Self::new(Vec::new(), continuation)
    }
}

impl From<&Rollout> for Completion {
    fn from(r: &Rollout) -> Self {
        Self::new(r.prompt.clone(), r.continuation.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualityOptions {
    pub window: usize,
    /// Whether prompt tokens count as earlier occurrences.
    pub include_prompt: bool,
    pub excluded: Vec<TokenId>,
}

impl Default for QualityOptions {
    fn default() -> Self {
        Self {
            window: 128,
            include_prompt: true,
            excluded: Vec::new(),
        }
    }
}

impl QualityOptions {
    /// Defaults with the vocabulary's bos and eos excluded.
    pub fn for_vocab(vocab: &Vocab) -> Self {
        Self {
            excluded: vec![vocab.bos(), vocab.eos()],
            ..Self::default()
        }
    }

    fn strip(&self, xs: &[TokenId]) -> Vec<TokenId> {
        xs.iter().copied().filter(|t| !self.excluded.contains(t)).collect()
    }
}

/// Sliding multiset of the last `cap` tokens.
struct Window {
    cap: usize,
    order: VecDeque<TokenId>,
    counts: HashMap<TokenId, usize>,
}

impl Window {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            order: VecDeque::with_capacity(cap + 1),
            counts: HashMap::new(),
        }
    }

    fn contains(&self, t: TokenId) -> bool {
        self.counts.get(&t).is_some_and(|&c| c > 0)
    }

    fn push(&mut self, t: TokenId) {
        if self.cap == 0 {
            return;
        }
        self.order.push_back(t);
        *self.counts.entry(t).or_default() += 1;
        if self.order.len() > self.cap {
            let old = self.order.pop_front().expect("non-empty window");
            *self.counts.get_mut(&old).expect("counted token") -= 1;
        }
    }
}

/// For each generated position: does its token occur in the preceding window?
fn repeat_flags(c: &Completion, opts: &QualityOptions) -> Vec<(TokenId, bool)> {
    let mut w = Window::new(opts.window);
    if opts.include_prompt {
        opts.strip(&c.prompt).into_iter().for_each(|t| w.push(t));
    }
    opts.strip(&c.continuation)
        .into_iter()
        .map(|t| {
            let hit = w.contains(t);
            w.push(t);
            (t, hit)
        })
        .collect()
}

/// Fraction of generated positions whose token appeared in the preceding
/// window. Zero when there are no generated positions.
pub fn rep(completions: &[Completion], opts: &QualityOptions) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for c in completions {
        for (_, hit) in repeat_flags(c, opts) {
            hits += usize::from(hit);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// As [`rep`], counting only repeats that differ from the gold token at the
/// same position. Positions past the gold's end are not counted; `None` if
/// no position aligns.
pub fn wrep(completions: &[Completion], golds: &[Vec<TokenId>], opts: &QualityOptions) -> Option<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for (c, gold) in completions.iter().zip(golds) {
        let gold = opts.strip(gold);
        for (i, (t, hit)) in repeat_flags(c, opts).into_iter().enumerate().take(gold.len()) {
            hits += usize::from(hit && t != gold[i]);
            total += 1;
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// `1 − unique 4-grams / total 4-grams`; `None` below four tokens.
pub fn seq_rep_n(tokens: &[TokenId], n: usize) -> Option<f64> {
    if n == 0 || tokens.len() < n {
        return None;
    }
    let grams: Vec<&[TokenId]> = tokens.windows(n).collect();
    let unique: BTreeSet<&[TokenId]> = grams.iter().copied().collect();
    Some(1.0 - unique.len() as f64 / grams.len() as f64)
}

pub fn seq_rep_4(tokens: &[TokenId]) -> Option<f64> {
    seq_rep_n(tokens, 4)
}

/// Mean seq-rep-4 over continuations where it is defined.
pub fn mean_seq_rep_4(completions: &[Completion], opts: &QualityOptions) -> Option<f64> {
    let vals: Vec<f64> = completions
        .iter()
        .filter_map(|c| seq_rep_4(&opts.strip(&c.continuation)))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Distinct tokens across all continuations.
pub fn uniq(completions: &[Completion], opts: &QualityOptions) -> usize {
    completions
        .iter()
        .flat_map(|c| opts.strip(&c.continuation))
        .collect::<BTreeSet<_>>()
        .len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityReport {
    pub rep128: f64,
    pub wrep128: Option<f64>,
    pub seq_rep_4: Option<f64>,
    pub uniq: usize,
}

impl QualityReport {
    /// Pass `golds` aligned with `completions` to get wrep; otherwise it is undefined.
    pub fn compute(completions: &[Completion], golds: Option<&[Vec<TokenId>]>, opts: &QualityOptions) -> Self {
        Self {
            rep128: rep(completions, opts),
            wrep128: golds.and_then(|g| wrep(completions, g, opts)),
            seq_rep_4: mean_seq_rep_4(completions, opts),
            uniq: uniq(completions, opts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityRow {
    pub model: String,
    pub spec: String,
    pub pct_ex_acc_err: Option<f64>,
    pub quality: QualityReport,
}

pub const QUALITY_COLUMNS: [&str; 7] = ["model", "spec", "pct_ex_acc_err", "seq_rep_4", "rep128", "wrep128", "uniq"];

pub fn quality_csv(rows: &[QualityRow]) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| NA.to_string(), fmt_float);
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.spec.clone(),
                opt(r.pct_ex_acc_err),
                opt(r.quality.seq_rep_4),
                fmt_float(r.quality.rep128),
                opt(r.quality.wrep128),
                r.quality.uniq.to_string(),
            ]
        })
        .collect();
    write_records(&QUALITY_COLUMNS, &records)
}
