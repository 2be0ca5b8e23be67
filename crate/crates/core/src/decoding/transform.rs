use super::DecoderSpec;
use crate::dist::Dist;

/// The sampling distribution a decoder actually draws from at one step.
///
/// Temperature is applied in log space before any truncation. Truncation
/// ties (top-k cutoff, nucleus boundary) resolve toward the lowest token id.
/// Beam search has no per-step sampling distribution; its local view is the
/// argmax, the same as greedy.
pub fn transform_dist(d: &Dist, spec: &DecoderSpec) -> Dist {
    match *spec {
        DecoderSpec::Greedy | DecoderSpec::Beam { .. } => Dist::one_hot(d.len(), d.argmax()),
        DecoderSpec::Ancestral { temperature } => temper(d, temperature),
        DecoderSpec::TopK { k, temperature } => {
            let t = temper(d, temperature);
            let order = ranked(&t);
            let keep: Vec<usize> = order.into_iter().take(k).collect();
            restrict(&t, &keep)
        }
        DecoderSpec::TopP { p, temperature } => {
            let t = temper(d, temperature);
            let mut keep = Vec::new();
            let mut mass = 0.0;
            for i in ranked(&t) {
                keep.push(i);
                mass += t.logprobs()[i].exp();
                if mass >= p {
                    break;
                }
            }
            restrict(&t, &keep)
        }
    }
}

fn temper(d: &Dist, temperature: f64) -> Dist {
    if temperature == 1.0 {
        return d.clone();
    }
    let scores: Vec<f64> = d.logprobs().iter().map(|lp| lp / temperature).collect();
    Dist::from_scores(&scores).expect("tempered valid distribution stays valid")
}

/// Tokens with positive mass, most probable first, ties by lowest id.
fn ranked(d: &Dist) -> Vec<usize> {
    let lp = d.logprobs();
    let mut order: Vec<usize> = (0..lp.len()).filter(|&i| lp[i] > f64::NEG_INFINITY).collect();
    order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
    order
}

fn restrict(d: &Dist, keep: &[usize]) -> Dist {
    let mut scores = vec![f64::NEG_INFINITY; d.len()];
    for &i in keep {
        scores[i] = d.logprobs()[i];
    }
    Dist::from_scores(&scores).expect("kept set has positive mass")
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn d(p: &[f64]) -> Dist {
        Dist::from_probs(p).unwrap()
    }

    fn close(a: &Dist, b: &[f64]) -> bool {
        a.probs().iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn temperature_one_is_identity() {
        let x = d(&[0.5, 0.3, 0.2]);
        assert_eq!(transform_dist(&x, &DecoderSpec::Ancestral { temperature: 1.0 }), x);
    }

    #[test]
    fn top_k_and_top_p_examples() {
        let x = d(&[0.5, 0.3, 0.2]);
        let tk = transform_dist(&x, &DecoderSpec::TopK { k: 2, temperature: 1.0 });
        assert!(close(&tk, &[0.625, 0.375, 0.0]));
        let tp = transform_dist(&x, &DecoderSpec::TopP { p: 0.7, temperature: 1.0 });
        assert!(close(&tp, &[0.625, 0.375, 0.0]));
    }

    #[test]
    fn greedy_is_one_hot() {
        let x = d(&[0.2, 0.5, 0.3]);
        assert!(close(&transform_dist(&x, &DecoderSpec::Greedy), &[0.0, 1.0, 0.0]));
        let tie = d(&[0.4, 0.4, 0.2]);
        let k1 = transform_dist(&tie, &DecoderSpec::TopK { k: 1, temperature: 1.0 });
        assert!(close(&k1, &[1.0, 0.0, 0.0]));
    }

    #[test]
    fn temperature_flattens() {
        let x = d(&[0.8, 0.2]);
        let hot = transform_dist(&x, &DecoderSpec::Ancestral { temperature: 2.0 });
        let expected = 0.8f64.sqrt() / (0.8f64.sqrt() + 0.2f64.sqrt());
        assert!((hot.prob(0) - expected).abs() < 1e-12);
    }

    fn any_spec() -> impl Strategy<Value = DecoderSpec> {
        prop_oneof![
            Just(DecoderSpec::Greedy),
            (1usize..4).prop_map(|width| DecoderSpec::Beam { width }),
            (0.1f64..3.0).prop_map(|temperature| DecoderSpec::Ancestral { temperature }),
            (1usize..6, 0.1f64..3.0).prop_map(|(k, temperature)| DecoderSpec::TopK { k, temperature }),
            (0.01f64..=1.0, 0.1f64..3.0).prop_map(|(p, temperature)| DecoderSpec::TopP { p, temperature }),
        ]
    }

    proptest! {
        #[test]
        fn output_is_normalized(w in prop::collection::vec(0.0f64..1.0, 2..8), spec in any_spec()) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let x = Dist::from_weights(&w).unwrap();
            let t = transform_dist(&x, &spec);
            let total: f64 = t.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            if matches!(spec, DecoderSpec::Greedy) {
                prop_assert_eq!(t.entropy(), 0.0);
            }
            // support never grows
            for (a, b) in x.probs().iter().zip(t.probs()) {
                prop_assert!(*a > 0.0 || b == 0.0);
            }
        }
    }
}
