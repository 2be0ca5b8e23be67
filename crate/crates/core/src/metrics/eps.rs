use rand::Rng;
use serde::Serialize;

use super::stats::{par_map, std_error, RunningMean};
use super::EstimatorOptions;
use crate::error::{Error, Result};
use crate::lm::{ensure_same_vocab, kl_between, Corpus, LanguageModel};
use crate::rng::{canonical_order, substream};
use crate::vocab::TokenId;

/// Per-step error `ε_t`: expected KL from oracle to model on oracle contexts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerStepErrorSeries {
    /// Mean KL at step `t` (index `t − 1`) over sequences still active at `t`.
    pub eps_t: Vec<f64>,
    pub counts_t: Vec<usize>,
    pub stderr_t: Vec<f64>,
    /// Mean `−log p_θ(w_t | context)` of the observed token at each step.
    pub nll_t: Vec<f64>,
    #[serde(skip)]
    pub(crate) samples: Vec<Vec<f64>>,
}

impl PerStepErrorSeries {
    pub fn len(&self) -> usize {
        self.eps_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_t.is_empty()
    }

    /// `Σ_{t≤l} ε_t` for every `l`; equals `l·ε_≤l`.
    pub fn cumulative(&self) -> Vec<f64> {
        cumsum(&self.eps_t)
    }

    /// `ε_≤l = (1/l) Σ_{t≤l} ε_t`.
    pub fn eps_le(&self, l: usize) -> f64 {
        self.cumulative()[l - 1] / l as f64
    }

    /// Token-weighted entropy rate of the model over held-out positions up to each step.
    pub fn entropy_rate_le(&self) -> Vec<f64> {
        let mut tokens = 0usize;
        let mut total = 0.0;
        self.nll_t
            .iter()
            .zip(&self.counts_t)
            .map(|(&h, &n)| {
                total += h * n as f64;
                tokens += n;
                total / tokens as f64
            })
            .collect()
    }

    /// Token-level bootstrap: each step's values are resampled independently.
    /// Returns one cumulative-ε curve per replicate.
    pub fn bootstrap_cumulative(&self, resamples: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = substream(seed, "bootstrap-eps", 0);
        (0..resamples)
            .map(|_| {
                let eps_b: Vec<f64> = self
                    .samples
                    .iter()
                    .map(|vals| {
                        let mut m = RunningMean::default();
                        for _ in 0..vals.len() {
                            m.push(vals[rng.gen_range(0..vals.len())]);
                        }
                        m.mean()
                    })
                    .collect();
                cumsum(&eps_b)
            })
            .collect()
    }
}

pub(crate) fn cumsum(xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    xs.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// `ε_t` from held-out oracle sequences that start at bos.
pub fn estimate_eps(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    heldout: &Corpus,
    horizon: usize,
    opts: &EstimatorOptions,
) -> Result<PerStepErrorSeries> {
    estimate_eps_after(oracle, model, heldout.sequences(), 1, horizon, opts)
}

/// `ε_t` where step 1 is the first token after a prompt of `prompt_len`
/// tokens (bos included). Each sequence contributes at step `t` only if it
/// has a token there; sequences drop out after eos or truncation. A step
/// with no contributors ends the series.
pub fn estimate_eps_after(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    sequences: &[Vec<TokenId>],
    prompt_len: usize,
    horizon: usize,
    opts: &EstimatorOptions,
) -> Result<PerStepErrorSeries> {
    ensure_same_vocab(oracle, model)?;
    if prompt_len == 0 {
        return Err(Error::param("prompt length counts bos and must be ≥ 1"));
    }
    let vocab = model.vocab();
    for s in sequences {
        vocab.validate_context(s)?;
    }
    let order = canonical_order(sequences);
    let log_floor = opts.floor.0.map(f64::ln);

    // (kl, nll) per active step, per sequence in canonical order
    let per_seq = par_map(opts.workers, order.len(), |pos| {
        let seq = &sequences[order[pos].0];
        let steps = seq.len().saturating_sub(prompt_len).min(horizon);
        let mut out = Vec::with_capacity(steps);
        for t in 1..=steps {
            let ctx = &seq[..prompt_len + t - 1];
            let o = oracle.next_dist(ctx)?;
            let p = model.next_dist(ctx)?;
            let kl = kl_between(&o, &p, opts.floor);
            if kl.is_infinite() {
                return Err(Error::InfiniteKl {
                    step: t,
                    context: ctx.to_vec(),
                });
            }
            let mut lp = p.logprob(seq[prompt_len + t - 1]);
            if let Some(f) = log_floor {
                lp = lp.max(f);
            }
            out.push((kl, -lp));
        }
        Ok(out)
    })?;

    let mut samples: Vec<Vec<f64>> = Vec::new();
    let mut nll: Vec<RunningMean> = Vec::new();
    for steps in &per_seq {
        for (t, &(kl, h)) in steps.iter().enumerate() {
            if samples.len() <= t {
                samples.push(Vec::new());
                nll.push(RunningMean::default());
            }
            samples[t].push(kl);
            nll[t].push(h);
        }
    }
    let eps_t = samples
        .iter()
        .map(|vals| {
            let mut m = RunningMean::default();
            vals.iter().for_each(|&v| m.push(v));
            m.mean()
        })
        .collect();
    Ok(PerStepErrorSeries {
        eps_t,
        counts_t: samples.iter().map(Vec::len).collect(),
        stderr_t: samples.iter().map(|v| std_error(v)).collect(),
        nll_t: nll.iter().map(RunningMean::mean).collect(),
        samples,
    })
}
