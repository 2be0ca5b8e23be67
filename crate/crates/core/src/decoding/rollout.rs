use rand::Rng;
use serde::Serialize;

use super::{beam_search, transform_dist, DecoderSpec};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::lm::{ensure_same_vocab, kl_between, LanguageModel, ProbabilityFloor};
use crate::vocab::TokenId;

/// One generated continuation with the per-step loss recorded along it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rollout {
    pub prompt: Vec<TokenId>,
    pub continuation: Vec<TokenId>,
    /// `KL(o ‖ p_θ)` at each generated position, against the untransformed model.
    pub per_step_kl: Vec<f64>,
    pub ended_by_eos: bool,
    pub active_len: usize,
    /// Some step had an oracle-supported token the model gives zero mass.
    pub has_infinite: bool,
}

/// Picks a token from `d` under `spec`. Stochastic specs consume exactly one
/// uniform variate; greedy and beam consume none.
pub fn choose_token<R: Rng + ?Sized>(d: &Dist, spec: &DecoderSpec, rng: &mut R) -> TokenId {
    if spec.is_deterministic() {
        return d.argmax();
    }
    let u = rng.gen::<f64>();
    transform_dist(d, spec).sample_with(u)
}

pub fn decode_step<R: Rng + ?Sized>(
    model: &dyn LanguageModel,
    ctx: &[TokenId],
    spec: &DecoderSpec,
    rng: &mut R,
) -> Result<TokenId> {
    let d = model.next_dist(ctx)?;
    Ok(choose_token(&d, spec, rng))
}

/// Generates from `prompt` until eos or total length `max_len`, recording the
/// per-step KL of the model against the oracle at every visited context.
///
/// The KL always uses the model's full distribution; the decoder only decides
/// which contexts get visited. Beam search runs first and the KL is then
/// evaluated along the prefixes of its returned hypothesis.
pub fn rollout<R: Rng + ?Sized>(
    model: &dyn LanguageModel,
    oracle: &dyn LanguageModel,
    prompt: &[TokenId],
    spec: &DecoderSpec,
    max_len: usize,
    floor: ProbabilityFloor,
    rng: &mut R,
) -> Result<Rollout> {
    ensure_same_vocab(oracle, model)?;
    spec.validate()?;
    let vocab = model.vocab();
    vocab.validate_context(prompt)?;
    vocab.check_query(prompt)?;
    if max_len < prompt.len() {
        return Err(Error::param(format!(
            "max length {max_len} is shorter than the prompt ({})",
            prompt.len()
        )));
    }
    let eos = vocab.eos();
    let mut ctx = prompt.to_vec();
    let mut per_step_kl = Vec::new();
    let mut has_infinite = false;
    let mut record = |o: &Dist, p: &Dist, out: &mut Vec<f64>| {
        let kl = kl_between(o, p, floor);
        has_infinite |= kl.is_infinite();
        out.push(kl);
    };

    if let DecoderSpec::Beam { width } = *spec {
        let continuation = beam_search(model, prompt, width, max_len)?;
        for &tok in &continuation {
            record(&oracle.next_dist(&ctx)?, &model.next_dist(&ctx)?, &mut per_step_kl);
            ctx.push(tok);
        }
    } else {
        while ctx.len() < max_len {
            let p = model.next_dist(&ctx)?;
            record(&oracle.next_dist(&ctx)?, &p, &mut per_step_kl);
            let tok = choose_token(&p, spec, rng);
            ctx.push(tok);
            if tok == eos {
                break;
            }
        }
    }

    let continuation = ctx.split_off(prompt.len());
    Ok(Rollout {
        prompt: ctx,
        ended_by_eos: continuation.last() == Some(&eos),
        active_len: per_step_kl.len(),
        continuation,
        per_step_kl,
        has_infinite,
    })
}
