use rand::Rng;

use super::{ensure_same_vocab, Corpus, LanguageModel};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::vocab::TokenId;

/// Optional lower bound on model probabilities inside KL terms.
///
/// Off by default: a zero model probability on an oracle-supported token
/// yields `+inf`, which estimators refuse to aggregate. Enabling the floor
/// (e.g. `1e-10`) clamps such terms instead.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProbabilityFloor(pub Option<f64>);

impl ProbabilityFloor {
    pub const SUGGESTED: f64 = 1e-10;

    pub fn off() -> Self {
        Self(None)
    }

    pub fn at(p: f64) -> Self {
        Self(Some(p))
    }
}

/// `KL(o ‖ p)` in nats. Terms with `o(w) = 0` contribute exactly zero; an
/// oracle-supported token with `p(w) = 0` makes the result `+inf` unless a
/// floor is set.
pub fn kl_between(oracle: &Dist, model: &Dist, floor: ProbabilityFloor) -> f64 {
    let log_floor = floor.0.map(f64::ln);
    let mut total = 0.0;
    for (&lo, &lp) in oracle.logprobs().iter().zip(model.logprobs()) {
        if lo == f64::NEG_INFINITY {
            continue;
        }
        let lp = match log_floor {
            Some(f) => lp.max(f),
            None => lp,
        };
        if lp == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        total += lo.exp() * (lo - lp);
    }
    // cancellation can leave a tiny negative residue when o ≈ p
    total.max(0.0)
}

/// Per-step loss at `ctx`: KL from the oracle's next-token distribution to the model's.
pub fn kl_next(oracle: &dyn LanguageModel, model: &dyn LanguageModel, ctx: &[TokenId]) -> Result<f64> {
    kl_next_with(oracle, model, ctx, ProbabilityFloor::off())
}

pub fn kl_next_with(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    ctx: &[TokenId],
    floor: ProbabilityFloor,
) -> Result<f64> {
    ensure_same_vocab(oracle, model)?;
    let o = oracle.next_dist(ctx)?;
    let p = model.next_dist(ctx)?;
    Ok(kl_between(&o, &p, floor))
}

/// Ancestral sample starting at bos, stopping at eos or at total length `max_len`.
/// Draws exactly one uniform variate per generated token.
pub fn sample_sequence<R: Rng + ?Sized>(
    model: &dyn LanguageModel,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<TokenId>> {
    if max_len == 0 {
        return Err(Error::param("max length must be at least 1"));
    }
    let vocab = model.vocab();
    let mut seq = vec![vocab.bos()];
    while seq.len() < max_len {
        let d = model.next_dist(&seq)?;
        let tok = d.sample_with(rng.gen::<f64>());
        seq.push(tok);
        if tok == vocab.eos() {
            break;
        }
    }
    Ok(seq)
}

/// `n` independent samples, sequence `i` drawn from its own substream of `seed`.
pub fn sample_corpus(model: &dyn LanguageModel, n: usize, max_len: usize, seed: u64) -> Result<Corpus> {
    let sequences = (0..n)
        .map(|i| sample_sequence(model, max_len, &mut substream(seed, "corpus", i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(model.vocab(), sequences)
}

/// `log p(w_i | w_0^{i-1})` for every predicted position of every sequence.
pub fn token_logprobs(model: &dyn LanguageModel, corpus: &Corpus) -> Result<Vec<Vec<f64>>> {
    corpus
        .sequences()
        .iter()
        .map(|seq| {
            (1..seq.len())
                .map(|i| Ok(model.next_dist(&seq[..i])?.logprob(seq[i])))
                .collect()
        })
        .collect()
}

/// Entropy rate `H = −(1/|D|) Σ log p(w_i | w_0^{i−1})`, accumulated over the
/// flat list of (context, token) pairs.
pub fn corpus_nll(model: &dyn LanguageModel, corpus: &Corpus) -> Result<f64> {
    let count = corpus.token_count();
    if count == 0 {
        return Err(Error::EmptyCorpus);
    }
    let pairs = corpus
        .sequences()
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (1..seq.len()).map(move |i| (s, i, &seq[..i], seq[i])));
    let mut sum = 0.0;
    for (s, i, ctx, tok) in pairs {
        let lp = model.next_dist(ctx)?.logprob(tok);
        if lp == f64::NEG_INFINITY {
            return Err(Error::InfiniteNll {
                sequence: s,
                position: i,
                token: tok,
            });
        }
        sum += lp;
    }
    Ok(-sum / count as f64)
}

/// Same quantity as [`corpus_nll`], accumulated sequence by sequence.
pub fn corpus_nll_by_sequence(model: &dyn LanguageModel, corpus: &Corpus) -> Result<f64> {
    let count = corpus.token_count();
    if count == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut total = 0.0;
    for (s, seq) in corpus.sequences().iter().enumerate() {
        let mut seq_ll = 0.0;
        let mut ctx = Vec::with_capacity(seq.len());
        ctx.push(seq[0]);
        for (i, &tok) in seq.iter().enumerate().skip(1) {
            let lp = model.next_dist(&ctx)?.logprob(tok);
            if lp == f64::NEG_INFINITY {
                return Err(Error::InfiniteNll {
                    sequence: s,
                    position: i,
                    token: tok,
                });
            }
            seq_ll += lp;
            ctx.push(tok);
        }
        total += seq_ll;
    }
    Ok(-total / count as f64)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::lm::{train_ngram, MarkovOracle};
    use crate::vocab::Vocab;

    fn vocab() -> Vocab {
        Vocab::with_symbols(&["a", "b"]).unwrap()
    }

    fn order0(p: [f64; 4]) -> MarkovOracle {
        MarkovOracle::order0(vocab(), Dist::from_probs(&p).unwrap()).unwrap()
    }

    #[test]
    fn kl_self_is_zero() {
        let o = order0([0.0, 0.3, 0.6, 0.1]);
        assert_eq!(kl_next(&o, &o, &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn kl_hand_values() {
        // o = {0.5, 0.5, 0}, p = {0.25, 0.75, small}
        let o = Dist::from_probs(&[0.0, 0.5, 0.5, 0.0]).unwrap();
        let p = Dist::from_probs(&[0.0, 0.25, 0.75 - 1e-6, 1e-6]).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (0.5 / (0.75f64 - 1e-6)).ln();
        assert!((kl_between(&o, &p, ProbabilityFloor::off()) - expected).abs() < 1e-15);
        assert!((expected - 0.1438).abs() < 1e-4);

        // o = {1, 0, 0}, p uniform over 3
        let o = Dist::from_probs(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        let p = Dist::uniform_except(4, 0);
        assert!((kl_between(&o, &p, ProbabilityFloor::off()) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_zero_support_is_infinite_unless_floored() {
        let o = Dist::from_probs(&[0.0, 0.5, 0.5, 0.0]).unwrap();
        let p = Dist::from_probs(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(kl_between(&o, &p, ProbabilityFloor::off()), f64::INFINITY);
        let floored = kl_between(&o, &p, ProbabilityFloor::at(1e-10));
        assert!(floored.is_finite() && floored > 0.0);
    }

    #[test]
    fn forced_eos_and_deterministic_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stop = order0([0.0, 0.0, 0.0, 1.0]);
        assert_eq!(sample_sequence(&stop, 10, &mut rng).unwrap(), vec![0, 3]);
        let chain = order0([0.0, 1.0, 0.0, 0.0]);
        assert_eq!(sample_sequence(&chain, 4, &mut rng).unwrap(), vec![0, 1, 1, 1]);
    }

    #[test]
    fn uniform_model_entropy_rate() {
        // uniform over the V=4 non-bos tokens of a 5-token vocabulary
        let v = Vocab::with_symbols(&["a", "b", "c"]).unwrap();
        let u = MarkovOracle::order0(v.clone(), Dist::uniform_except(5, 0)).unwrap();
        let c = Corpus::new(&v, vec![vec![0, 1, 2, 3, 4], vec![0, 3, 3]]).unwrap();
        assert!((corpus_nll(&u, &c).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn infinite_nll_is_an_error() {
        let v = vocab();
        let train = Corpus::new(&v, vec![vec![0, 1, 1, 3]]).unwrap();
        let s = train_ngram(&train, &v, 1, 0.0).unwrap();
        let test = Corpus::new(&v, vec![vec![0, 1, 2, 3]]).unwrap();
        match corpus_nll(&s, &test) {
            Err(Error::InfiniteNll { position, token, .. }) => {
                assert_eq!((position, token), (2, 2));
            }
            other => panic!("expected InfiniteNll, got {other:?}"),
        }
        assert!(corpus_nll_by_sequence(&s, &test).is_err());
    }
}
