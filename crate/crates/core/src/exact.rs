//! Exact context distributions, per-step error and regret by enumeration.
//!
//! Intended for tiny vocabularies and horizons, as ground truth for the
//! Monte-Carlo estimators in [`metrics`](crate::metrics). Step-`t` values are
//! conditional on the sequence still being active at `t`, matching the
//! estimators' convention.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::decoding::{beam_search, transform_dist, DecoderSpec};
use crate::error::{Error, Result};
use crate::lm::{ensure_same_vocab, kl_between, LanguageModel, ProbabilityFloor};
use crate::vocab::TokenId;

/// Branches whose probability falls below this are dropped and their mass reported.
pub const PRUNE_BELOW: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumBudget {
    pub cap: u64,
}

impl Default for EnumBudget {
    fn default() -> Self {
        Self { cap: 1_000_000 }
    }
}

impl EnumBudget {
    /// Worst-case number of length-`horizon` paths for `spec`: `V^T` for
    /// stochastic decoders, one for greedy and beam.
    pub fn check(&self, vocab: usize, horizon: usize, spec: &DecoderSpec) -> Result<()> {
        if spec.is_deterministic() {
            return Ok(());
        }
        let paths = u32::try_from(horizon)
            .ok()
            .and_then(|h| (vocab as u64).checked_pow(h))
            .unwrap_or(u64::MAX);
        if paths > self.cap {
            return Err(Error::BudgetExceeded {
                vocab,
                horizon,
                cap: self.cap,
            });
        }
        Ok(())
    }
}

/// Probabilities of every reachable context after `t` decoding steps.
/// Sequences that ended with eos before step `t` appear at their final length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextDist {
    pub contexts: BTreeMap<Vec<TokenId>, f64>,
    pub pruned_mass: f64,
}

impl ContextDist {
    pub fn total_mass(&self) -> f64 {
        self.contexts.values().sum::<f64>() + self.pruned_mass
    }
}

/// Exact per-step loss under some context distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactCurve {
    /// Expected KL at step `t`, conditional on being active at `t`.
    pub step: Vec<f64>,
    /// Running sum of `step`.
    pub cumulative: Vec<f64>,
    /// Probability of still being active at step `t`.
    pub active_mass: Vec<f64>,
    pub pruned_mass: f64,
}

impl ExactCurve {
    fn from_sums(sums: Vec<f64>, mass: Vec<f64>, pruned_mass: f64) -> Self {
        let len = mass.iter().position(|&m| m <= 0.0).unwrap_or(mass.len());
        let step: Vec<f64> = sums[..len].iter().zip(&mass).map(|(s, m)| (s / m).max(0.0)).collect();
        let mut acc = 0.0;
        let cumulative = step
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Self {
            step,
            cumulative,
            active_mass: mass[..len].to_vec(),
            pruned_mass,
        }
    }
}

struct Walk<'a> {
    driver: &'a dyn LanguageModel,
    spec: DecoderSpec,
    horizon: usize,
    eos: TokenId,
    pruned: f64,
}

type Visit<'a> = dyn FnMut(&[TokenId], f64, usize) -> Result<()> + 'a;

impl Walk<'_> {
    /// Depth-first over continuations; `visit(ctx, prob, step)` is called at
    /// every active context, `leaf(ctx, prob)` at every terminal one.
    fn run(
        &mut self,
        ctx: &mut Vec<TokenId>,
        prob: f64,
        step: usize,
        visit: &mut Visit<'_>,
        leaf: &mut dyn FnMut(&[TokenId], f64),
    ) -> Result<()> {
        if step == self.horizon || ctx.last() == Some(&self.eos) {
            leaf(ctx, prob);
            return Ok(());
        }
        visit(ctx, prob, step)?;
        let d = transform_dist(&self.driver.next_dist(ctx)?, &self.spec);
        for (tok, p) in d.probs().into_iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let q = prob * p;
            if q < PRUNE_BELOW {
                self.pruned += q;
                continue;
            }
            ctx.push(tok as TokenId);
            self.run(ctx, q, step + 1, visit, leaf)?;
            ctx.pop();
        }
        Ok(())
    }
}

fn beam_path(model: &dyn LanguageModel, spec: &DecoderSpec, prompt: &[TokenId], horizon: usize) -> Result<Option<Vec<TokenId>>> {
    match *spec {
        DecoderSpec::Beam { width } => {
            let mut path = prompt.to_vec();
            path.extend(beam_search(model, prompt, width, prompt.len() + horizon)?);
            Ok(Some(path))
        }
        _ => Ok(None),
    }
}

fn check_prompt(model: &dyn LanguageModel, prompt: &[TokenId]) -> Result<()> {
    model.vocab().validate_context(prompt)?;
    model.vocab().check_query(prompt)
}

pub fn exact_context_dist(
    model: &dyn LanguageModel,
    spec: &DecoderSpec,
    prompt: &[TokenId],
    t: usize,
    budget: &EnumBudget,
) -> Result<ContextDist> {
    spec.validate()?;
    check_prompt(model, prompt)?;
    budget.check(model.vocab().size(), t, spec)?;
    let mut contexts = BTreeMap::new();
    if let Some(path) = beam_path(model, spec, prompt, t)? {
        contexts.insert(path, 1.0);
        return Ok(ContextDist {
            contexts,
            pruned_mass: 0.0,
        });
    }
    let mut walk = Walk {
        driver: model,
        spec: *spec,
        horizon: t,
        eos: model.vocab().eos(),
        pruned: 0.0,
    };
    walk.run(
        &mut prompt.to_vec(),
        1.0,
        0,
        &mut |_, _, _| Ok(()),
        &mut |ctx, p| *contexts.entry(ctx.to_vec()).or_insert(0.0) += p,
    )?;
    Ok(ContextDist {
        contexts,
        pruned_mass: walk.pruned,
    })
}

/// Expected per-step KL when `driver` under `spec` chooses the contexts.
fn expected_kl(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    driver: &dyn LanguageModel,
    spec: &DecoderSpec,
    prompt: &[TokenId],
    horizon: usize,
    budget: &EnumBudget,
) -> Result<ExactCurve> {
    ensure_same_vocab(oracle, model)?;
    spec.validate()?;
    check_prompt(model, prompt)?;
    budget.check(model.vocab().size(), horizon, spec)?;
    let mut sums = vec![0.0; horizon];
    let mut mass = vec![0.0; horizon];
    let mut visit = |ctx: &[TokenId], p: f64, step: usize| -> Result<()> {
        let kl = kl_between(&oracle.next_dist(ctx)?, &model.next_dist(ctx)?, ProbabilityFloor::off());
        if kl.is_infinite() {
            return Err(Error::InfiniteKl {
                step: step + 1,
                context: ctx.to_vec(),
            });
        }
        sums[step] += p * kl;
        mass[step] += p;
        Ok(())
    };
    if let Some(path) = beam_path(driver, spec, prompt, horizon)? {
        for step in 0..path.len() - prompt.len() {
            visit(&path[..prompt.len() + step], 1.0, step)?;
        }
        return Ok(ExactCurve::from_sums(sums, mass, 0.0));
    }
    let mut walk = Walk {
        driver,
        spec: *spec,
        horizon,
        eos: model.vocab().eos(),
        pruned: 0.0,
    };
    walk.run(&mut prompt.to_vec(), 1.0, 0, &mut visit, &mut |_, _| {})?;
    Ok(ExactCurve::from_sums(sums, mass, walk.pruned))
}

/// Exact regret: expected per-step KL on the model's own contexts under `spec`.
/// `cumulative` is `R_≤l`.
pub fn exact_regret(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    spec: &DecoderSpec,
    prompt: &[TokenId],
    horizon: usize,
    budget: &EnumBudget,
) -> Result<ExactCurve> {
    expected_kl(oracle, model, model, spec, prompt, horizon, budget)
}

/// Exact `ε_t` on contexts drawn from the oracle, starting at bos.
pub fn exact_eps(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    horizon: usize,
    budget: &EnumBudget,
) -> Result<ExactCurve> {
    exact_eps_after(oracle, model, &[oracle.vocab().bos()], horizon, budget)
}

pub fn exact_eps_after(
    oracle: &dyn LanguageModel,
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    horizon: usize,
    budget: &EnumBudget,
) -> Result<ExactCurve> {
    let spec = DecoderSpec::Ancestral { temperature: 1.0 };
    expected_kl(oracle, model, oracle, &spec, prompt, horizon, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;
    use crate::lm::MarkovOracle;
    use crate::vocab::Vocab;

    fn order0(p: [f64; 4]) -> MarkovOracle {
        let v = Vocab::with_symbols(&["a", "b"]).unwrap();
        MarkovOracle::order0(v, Dist::from_probs(&p).unwrap()).unwrap()
    }

    const ANCESTRAL: DecoderSpec = DecoderSpec::Ancestral { temperature: 1.0 };

    #[test]
    fn uniform_pair_gives_four_quarter_contexts() {
        let m = order0([0.0, 0.5, 0.5, 0.0]);
        let d = exact_context_dist(&m, &ANCESTRAL, &[0], 2, &EnumBudget::default()).unwrap();
        assert_eq!(d.contexts.len(), 4);
        assert!(d.contexts.values().all(|&p| p == 0.25));
    }

    #[test]
    fn greedy_and_top1_are_point_masses() {
        let m = order0([0.0, 0.3, 0.6, 0.1]);
        let g = exact_context_dist(&m, &DecoderSpec::Greedy, &[0], 3, &EnumBudget::default()).unwrap();
        assert_eq!(g.contexts.len(), 1);
        assert_eq!(g.contexts.get(&vec![0, 2, 2, 2]), Some(&1.0));
        let k1 = DecoderSpec::TopK { k: 1, temperature: 1.0 };
        assert_eq!(exact_context_dist(&m, &k1, &[0], 3, &EnumBudget::default()).unwrap(), g);
    }

    #[test]
    fn eos_terminated_contexts_keep_their_mass() {
        let m = order0([0.0, 0.5, 0.3, 0.2]);
        let d = exact_context_dist(&m, &ANCESTRAL, &[0], 3, &EnumBudget::default()).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert!((d.contexts[&vec![0, 3]] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn context_free_regret_is_linear() {
        let o = order0([0.0, 0.5, 0.5, 0.0]);
        let p = order0([0.0, 0.25, 0.75, 0.0]);
        let c = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        for spec in DecoderSpec::default_grid() {
            let r = exact_regret(&o, &p, &spec, &[0], 6, &EnumBudget::default()).unwrap();
            for (l, v) in r.cumulative.iter().enumerate() {
                assert!((v - (l + 1) as f64 * c).abs() < 1e-12, "{spec}");
            }
        }
        let e = exact_eps(&o, &p, 6, &EnumBudget::default()).unwrap();
        assert!(e.step.iter().all(|x| (x - c).abs() < 1e-12));
    }

    #[test]
    fn identical_models_have_zero_regret() {
        let o = order0([0.0, 0.4, 0.5, 0.1]);
        let r = exact_regret(&o, &o, &ANCESTRAL, &[0], 5, &EnumBudget::default()).unwrap();
        assert!(r.cumulative.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn budget_is_enforced_for_stochastic_specs() {
        let m = order0([0.0, 0.5, 0.5, 0.0]);
        let small = EnumBudget { cap: 100 };
        assert!(matches!(
            exact_context_dist(&m, &ANCESTRAL, &[0], 4, &small),
            Err(Error::BudgetExceeded { vocab: 4, horizon: 4, cap: 100 })
        ));
        assert!(exact_context_dist(&m, &DecoderSpec::Greedy, &[0], 40, &small).is_ok());
    }
}
