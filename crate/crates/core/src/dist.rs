//! Dense next-token distributions stored as natural-log probabilities.

use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// Tolerance on `|Σ exp(logprob) − 1|` for a valid distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    logprobs: Vec<f64>,
}

impl Dist {
    /// Accepts log-probabilities that already exp-sum to one.
    pub fn from_logprobs(logprobs: Vec<f64>) -> Result<Self> {
        if logprobs.is_empty() {
            return Err(Error::InvalidDist("empty distribution".into()));
        }
        for (i, &lp) in logprobs.iter().enumerate() {
            if lp.is_nan() || lp == f64::INFINITY || lp > 1e-12 {
                return Err(Error::InvalidDist(format!("entry {i} has logprob {lp}")));
            }
        }
        let total: f64 = logprobs.iter().map(|lp| lp.exp()).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDist(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { logprobs })
    }

    /// Accepts probabilities that already sum to one.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDist(format!("entry {i} has probability {p}")));
            }
        }
        Self::from_logprobs(probs.iter().map(|p| p.ln()).collect())
    }

    /// Normalizes non-negative weights. At least one weight must be positive.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDist("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDist("weights sum to zero".into()));
        }
        Self::from_logprobs(weights.iter().map(|w| (w / total).ln()).collect())
    }

    /// Log-softmax of arbitrary scores; `-inf` scores stay impossible.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() || scores.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidDist("scores have no finite maximum".into()));
        }
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        Self::from_logprobs(scores.iter().map(|s| s - lse).collect())
    }

    pub fn one_hot(size: usize, at: TokenId) -> Self {
        let mut logprobs = vec![f64::NEG_INFINITY; size];
        logprobs[at as usize] = 0.0;
        Self { logprobs }
    }

    /// Uniform over every token except `excluded` (normally bos).
    pub fn uniform_except(size: usize, excluded: TokenId) -> Self {
        let lp = -((size - 1) as f64).ln();
        let logprobs = (0..size)
            .map(|i| if i == excluded as usize { f64::NEG_INFINITY } else { lp })
            .collect();
        Self { logprobs }
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn logprob(&self, tok: TokenId) -> f64 {
        self.logprobs[tok as usize]
    }

    pub fn prob(&self, tok: TokenId) -> f64 {
        self.logprobs[tok as usize].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logprobs.iter().map(|lp| lp.exp()).collect()
    }

    /// Most probable token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &lp) in self.logprobs.iter().enumerate() {
            if lp > self.logprobs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .logprobs
            .iter()
            .filter(|lp| lp.is_finite())
            .map(|&lp| lp.exp() * lp)
            .sum::<f64>()
    }

    /// Inverse-CDF draw in token-id order for a uniform variate `u ∈ [0, 1)`.
    pub fn sample_with(&self, u: f64) -> TokenId {
        let mut acc = 0.0;
        let mut last_positive = None;
        for (i, &lp) in self.logprobs.iter().enumerate() {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            acc += lp.exp();
            last_positive = Some(i);
            if u < acc {
                return i as TokenId;
            }
        }
        // rounding left `u` beyond the accumulated mass
        last_positive.expect("valid distribution has positive mass") as TokenId
    }
}
