#![allow(dead_code)]

use std::path::PathBuf;

use regretmeter::decoding::{transform_dist, DecoderSpec};
use regretmeter::lm::{kl_between, LanguageModel, ProbabilityFloor};
use regretmeter::TokenId;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.fixture"))
}

/// Brute force over every string in `V^horizon`. Positions after the first
/// eos must also be eos so each finished sequence is counted once. Returns
/// the per-step KL conditional on being active at that step.
pub fn odometer_step_kl(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    driver: &dyn LanguageModel,
    spec: &DecoderSpec,
    horizon: usize,
) -> Vec<f64> {
    let v = model.vocab().size();
    let bos = model.vocab().bos();
    let eos = model.vocab().eos();
    let mut digits = vec![0usize; horizon];
    let mut sums = vec![0.0; horizon];
    let mut mass = vec![0.0; horizon];
    loop {
        let seq: Vec<TokenId> = digits.iter().map(|&d| d as TokenId).collect();
        let first_eos = seq.iter().position(|&t| t == eos);
        let canonical = first_eos.is_none_or(|e| seq[e..].iter().all(|&t| t == eos));
        if canonical {
            let mut ctx = vec![bos];
            let mut prob = 1.0;
            let mut terms = Vec::new();
            for &tok in &seq {
                if ctx.last() == Some(&eos) {
                    break;
                }
                let p = model.next_dist(&ctx).unwrap();
                terms.push(kl_between(&oracle.next_dist(&ctx).unwrap(), &p, ProbabilityFloor::off()));
                prob *= transform_dist(&driver.next_dist(&ctx).unwrap(), spec).prob(tok);
                ctx.push(tok);
            }
            if prob > 0.0 {
                for (t, k) in terms.iter().enumerate() {
                    sums[t] += prob * k;
                    mass[t] += prob;
                }
            }
        }
        let mut i = 0;
        loop {
            if i == horizon {
                return sums.iter().zip(&mass).map(|(s, m)| s / m).collect();
            }
            digits[i] += 1;
            if digits[i] < v {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

pub fn cumsum(xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    xs.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}
