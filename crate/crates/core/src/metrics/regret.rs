use rand::Rng;
use serde::Serialize;

use super::eps::cumsum;
use super::stats::{par_map, sample_std, RunningMean};
use super::EstimatorOptions;
use crate::decoding::{rollout, DecoderSpec, Rollout};
use crate::error::{Error, Result};
use crate::lm::{ensure_same_vocab, LanguageModel};
use crate::rng::{canonical_order, substream};
use crate::vocab::TokenId;

/// `R_≤l`: cumulative mean per-step rollout KL.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretCurve {
    /// Mean KL at step `t` over rollouts still active at `t`.
    pub step_mean: Vec<f64>,
    pub r_le_l: Vec<f64>,
    pub counts_t: Vec<usize>,
    /// Prompt-level bootstrap standard error of each `R_≤l`.
    pub stderr_le_l: Vec<f64>,
    #[serde(skip)]
    pub(crate) replicates: Vec<Vec<f64>>,
}

impl RegretCurve {
    pub fn len(&self) -> usize {
        self.r_le_l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_le_l.is_empty()
    }

    /// Aggregates rollouts. Prompts are folded in canonical (content) order
    /// so the result does not depend on prompt order or thread count.
    pub fn from_rollouts(rollouts: &[Rollout], resamples: usize, seed: u64) -> Result<Self> {
        if rollouts.is_empty() {
            return Err(Error::param("regret needs at least one rollout"));
        }
        for r in rollouts {
            if r.has_infinite {
                let step = r.per_step_kl.iter().position(|k| k.is_infinite()).unwrap_or(0);
                let mut context = r.prompt.clone();
                context.extend_from_slice(&r.continuation[..step]);
                return Err(Error::InfiniteKl {
                    step: step + 1,
                    context,
                });
            }
        }
        let prompts: Vec<&[TokenId]> = rollouts.iter().map(|r| r.prompt.as_slice()).collect();
        let order: Vec<usize> = canonical_order(&prompts).into_iter().map(|(i, _)| i).collect();
        let horizon = rollouts.iter().map(|r| r.active_len).max().unwrap_or(0);

        let unit = vec![1.0; order.len()];
        let (step_mean, counts_t) = weighted_step_means(rollouts, &order, &unit, horizon, None);
        let len = step_mean.len();
        let r_le_l = cumsum(&step_mean);

        let mut rng = substream(seed, "bootstrap-regret", 0);
        let mut weights = vec![0.0; order.len()];
        let replicates: Vec<Vec<f64>> = (0..resamples)
            .map(|_| {
                weights.iter_mut().for_each(|w| *w = 0.0);
                for _ in 0..order.len() {
                    weights[rng.gen_range(0..order.len())] += 1.0;
                }
                let (m, _) = weighted_step_means(rollouts, &order, &weights, len, Some(&step_mean));
                cumsum(&m)
            })
            .collect();
        let stderr_le_l = (0..len)
            .map(|l| {
                let col: Vec<f64> = replicates.iter().map(|r| r[l]).collect();
                sample_std(&col)
            })
            .collect();

        Ok(Self {
            step_mean,
            counts_t: counts_t.into_iter().take(len).collect(),
            r_le_l,
            stderr_le_l,
            replicates,
        })
    }
}

/// Per-step weighted means over active rollouts. Without `fallback`, the
/// curve stops at the first step nobody reaches; with it, empty steps in a
/// bootstrap replicate borrow the full-sample mean.
fn weighted_step_means(
    rollouts: &[Rollout],
    order: &[usize],
    weights: &[f64],
    horizon: usize,
    fallback: Option<&[f64]>,
) -> (Vec<f64>, Vec<usize>) {
    let mut means = vec![RunningMean::default(); horizon];
    let mut counts = vec![0usize; horizon];
    for (pos, &i) in order.iter().enumerate() {
        let w = weights[pos];
        for (t, &kl) in rollouts[i].per_step_kl.iter().take(horizon).enumerate() {
            means[t].push_weighted(kl, w);
            counts[t] += 1;
        }
    }
    match fallback {
        Some(full) => {
            let m = means
                .iter()
                .zip(full)
                .map(|(m, &f)| if m.weight() > 0.0 { m.mean() } else { f })
                .collect();
            (m, counts)
        }
        None => {
            let len = counts.iter().position(|&c| c == 0).unwrap_or(horizon);
            (means[..len].iter().map(RunningMean::mean).collect(), counts)
        }
    }
}

/// Rolls out `horizon` steps past each prompt. Each prompt draws from its
/// own RNG substream keyed by (seed, prompt content, occurrence), so output is
/// identical for any worker count. Results come back in prompt order.
pub fn run_rollouts(
    model: &dyn LanguageModel,
    oracle: &dyn LanguageModel,
    spec: &DecoderSpec,
    prompts: &[Vec<TokenId>],
    horizon: usize,
    opts: &EstimatorOptions,
) -> Result<Vec<Rollout>> {
    ensure_same_vocab(oracle, model)?;
    if prompts.is_empty() {
        return Err(Error::param("at least one prompt is required"));
    }
    let mut keys = vec![0u64; prompts.len()];
    for (i, key) in canonical_order(prompts) {
        keys[i] = key;
    }
    par_map(opts.workers, prompts.len(), |i| {
        let mut rng = substream(opts.seed, "rollout", keys[i]);
        let prompt = &prompts[i];
        rollout(model, oracle, prompt, spec, prompt.len() + horizon, opts.floor, &mut rng)
    })
}

/// Monte-Carlo regret curve `R_≤l` for `l = 1..=horizon` with bootstrap errors.
pub fn estimate_regret(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    spec: &DecoderSpec,
    prompts: &[Vec<TokenId>],
    horizon: usize,
    opts: &EstimatorOptions,
) -> Result<RegretCurve> {
    let rollouts = run_rollouts(model, oracle, spec, prompts, horizon, opts)?;
    RegretCurve::from_rollouts(&rollouts, opts.bootstrap_resamples, opts.seed)
}
