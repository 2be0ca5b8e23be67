use rand::Rng;
use serde::Serialize;

use super::stats::{sample_std, RunningMean};
use super::EstimatorOptions;
use crate::error::{Error, Result};
use crate::lm::{corpus_nll, ensure_same_vocab, kl_between, Corpus, LanguageModel};
use crate::rng::substream;

/// Mean per-step error versus the entropy-rate gap on held-out oracle data.
///
/// In expectation `mean ε = H(p_θ; D_h) − H(o; D_h)`: the held-out entropy
/// rate is the average per-step error shifted by a model-independent constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub h_model: f64,
    pub h_oracle: f64,
    pub mean_eps: f64,
    /// `|mean ε − (H_model − H_oracle)|`.
    pub residual: f64,
    /// Token-level bootstrap standard error of the signed residual.
    pub stderr: f64,
    pub tokens: usize,
}

pub fn perplexity_identity_check(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    heldout: &Corpus,
    opts: &EstimatorOptions,
) -> Result<IdentityCheck> {
    ensure_same_vocab(oracle, model)?;
    let h_model = corpus_nll(model, heldout)?;
    let h_oracle = corpus_nll(oracle, heldout)?;

    // per token: KL at the context minus the observed log-ratio
    let mut diffs = Vec::with_capacity(heldout.token_count());
    let mut eps = RunningMean::default();
    for seq in heldout.sequences() {
        for i in 1..seq.len() {
            let ctx = &seq[..i];
            let o = oracle.next_dist(ctx)?;
            let p = model.next_dist(ctx)?;
            let kl = kl_between(&o, &p, opts.floor);
            if kl.is_infinite() {
                return Err(Error::InfiniteKl {
                    step: i,
                    context: ctx.to_vec(),
                });
            }
            eps.push(kl);
            diffs.push(kl - (o.logprob(seq[i]) - p.logprob(seq[i])));
        }
    }
    let mean_eps = eps.mean();
    let residual = (mean_eps - (h_model - h_oracle)).abs();

    let mut rng = substream(opts.seed, "bootstrap-identity", 0);
    let n = diffs.len();
    let replicates: Vec<f64> = (0..opts.bootstrap_resamples)
        .map(|_| {
            let mut m = RunningMean::default();
            for _ in 0..n {
                m.push(diffs[rng.gen_range(0..n)]);
            }
            m.mean()
        })
        .collect();

    Ok(IdentityCheck {
        h_model,
        h_oracle,
        mean_eps,
        residual,
        stderr: sample_std(&replicates),
        tokens: n,
    })
}
