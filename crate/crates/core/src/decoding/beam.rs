use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::vocab::TokenId;

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<TokenId>,
    score: f64,
    done: bool,
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Width-`k` beam search maximizing summed log-probability of the
/// continuation. Hypotheses that emit eos or reach total length `max_len` are
/// frozen but stay in the beam and compete with live ones. Returns the
/// continuation (prompt excluded) of the best hypothesis and its score.
pub fn beam_search_scored(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    width: usize,
    max_len: usize,
) -> Result<(Vec<TokenId>, f64)> {
    if width == 0 {
        return Err(Error::param("beam width must be ≥ 1"));
    }
    model.vocab().validate_context(prompt)?;
    let eos = model.vocab().eos();
    let mut beam = vec![Hypothesis {
        tokens: prompt.to_vec(),
        score: 0.0,
        done: prompt.len() >= max_len || prompt.last() == Some(&eos),
    }];
    while beam.iter().any(|h| !h.done) {
        let mut candidates = Vec::with_capacity(beam.len() * model.vocab().size());
        for h in &beam {
            if h.done {
                candidates.push(h.clone());
                continue;
            }
            let d = model.next_dist(&h.tokens)?;
            for (tok, &lp) in d.logprobs().iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(tok as TokenId);
                let done = tok as TokenId == eos || tokens.len() >= max_len;
                candidates.push(Hypothesis {
                    tokens,
                    score: h.score + lp,
                    done,
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(width);
        beam = candidates;
    }
    let best = beam.into_iter().min_by(rank).expect("beam is never empty");
    Ok((best.tokens[prompt.len()..].to_vec(), best.score))
}

pub fn beam_search(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    width: usize,
    max_len: usize,
) -> Result<Vec<TokenId>> {
    beam_search_scored(model, prompt, width, max_len).map(|(seq, _)| seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;
    use crate::lm::MarkovOracle;
    use crate::vocab::Vocab;

    /// Order-1 model where greedy picks `a` first (0.6) but `b` (0.4) is followed
    /// by a near-certain token, so the best two-token sequence starts with `b`.
    fn trap() -> MarkovOracle {
        let v = Vocab::with_symbols(&["a", "b", "c"]).unwrap();
        MarkovOracle::from_fn(v, 1, |s| {
            let p = match s[0] {
                0 => [0.0, 0.6, 0.4, 0.0, 0.0],
                1 => [0.0, 0.34, 0.33, 0.33, 0.0],
                2 => [0.0, 0.0, 0.0, 0.99, 0.01],
                _ => [0.0, 0.25, 0.25, 0.25, 0.25],
            };
            Dist::from_probs(&p)
        })
        .unwrap()
    }

    /// Brute force over every two-token continuation.
    fn best_two_step(m: &MarkovOracle) -> (Vec<TokenId>, f64) {
        let mut best = (vec![], f64::NEG_INFINITY);
        for a in 1..5u32 {
            for b in 1..5u32 {
                let s = m.next_dist(&[0]).unwrap().logprob(a)
                    + if a == 4 { 0.0 } else { m.next_dist(&[0, a]).unwrap().logprob(b) };
                if s > best.1 {
                    best = (vec![a, b], s);
                }
            }
        }
        best
    }

    #[test]
    fn width_two_beats_greedy() {
        let m = trap();
        let (oracle_seq, oracle_score) = best_two_step(&m);
        assert_eq!(oracle_seq, vec![2, 3]);
        let (greedy, gs) = beam_search_scored(&m, &[0], 1, 3).unwrap();
        assert_eq!(greedy, vec![1, 1]);
        let (b2, s2) = beam_search_scored(&m, &[0], 2, 3).unwrap();
        assert_eq!(b2, oracle_seq);
        assert!((s2 - oracle_score).abs() < 1e-12);
        assert!(s2 > gs);
    }

    #[test]
    fn deterministic_chain_any_width() {
        let v = Vocab::with_symbols(&["a"]).unwrap();
        let m = MarkovOracle::order0(v, Dist::from_probs(&[0.0, 1.0, 0.0]).unwrap()).unwrap();
        for k in 1..5 {
            assert_eq!(beam_search(&m, &[0], k, 4).unwrap(), vec![1, 1, 1]);
        }
    }

    #[test]
    fn larger_beam_is_not_always_better() {
        // greedy keeps a→x→w; width 2 prunes a·x in favour of b·y and b·z,
        // whose continuations are all weak
        let v = Vocab::with_symbols(&["a", "b", "x", "y", "z", "w"]).unwrap();
        let m = MarkovOracle::from_fn(v, 1, |s| {
            let p: [f64; 8] = match s[0] {
                0 => [0.0, 0.55, 0.45, 0.0, 0.0, 0.0, 0.0, 0.0],
                1 => [0.0, 0.0, 0.0, 0.34, 0.33, 0.33, 0.0, 0.0],
                2 => [0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0],
                3 => [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
                _ => [0.0, 1.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0],
            };
            Dist::from_probs(&p)
        })
        .unwrap();
        let (g, s1) = beam_search_scored(&m, &[0], 1, 4).unwrap();
        assert_eq!(g, vec![1, 3, 6]);
        let (_, s2) = beam_search_scored(&m, &[0], 2, 4).unwrap();
        let (_, s_all) = beam_search_scored(&m, &[0], 10_000, 4).unwrap();
        assert!(s2 < s1, "width 2 should lose to width 1 here: {s2} vs {s1}");
        assert!(s_all >= s1 && s_all >= s2);
    }
}
