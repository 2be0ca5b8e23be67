//! Built-in oracle/student pairs and the fixture file format.
//!
//! Three pairs ship with the crate:
//!
//! - `context-free`: order-0 oracle `{a: 0.5, b: 0.5}` against order-0
//!   student `{a: 0.25, b: 0.75}`. Every context has the same KL, so regret
//!   is exactly linear.
//! - `tiny`: order-1 oracle over `{a, b, eos}` against an order-0 student.
//!   Small enough to enumerate.
//! - `trap`: order-2 oracle over `{a, b, x, eos}` in which `x` is rare. The
//!   student matches the oracle up to light smoothing except that it
//!   overpredicts `x`, so greedy decoding walks into the `x x` state and stays.
//!
//! A fixture file bundles a pair with a decoder, a horizon and expected vectors:
//!
//! ```text
//! fixture trap
//! spec greedy
//! horizon 64
//! oracle
//! regretmeter-model v1
//! ...
//! end
//! student
//! regretmeter-model v1
//! ...
//! end
//! expected regret 1.2e-2 3.4e-2 ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::decoding::DecoderSpec;
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::exact::{exact_eps, exact_regret, EnumBudget};
use crate::lm::serial::{format_f64, parse_model, perr, Lines};
use crate::lm::{sample_corpus, LanguageModel, MarkovOracle, StoredModel};
use crate::metrics::{estimate_eps, estimate_regret, EstimatorOptions};
use crate::vocab::{TokenId, Vocab};

pub const BUILTIN_NAMES: [&str; 3] = ["context-free", "tiny", "trap"];

/// `KL({0.5, 0.5} ‖ {0.25, 0.75})` in nats.
pub fn context_free_kl() -> f64 {
    0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln()
}

fn ab_vocab() -> Vocab {
    Vocab::with_symbols(&["a", "b"]).expect("static vocabulary")
}

pub fn context_free_pair() -> (MarkovOracle, MarkovOracle) {
    let oracle = MarkovOracle::order0(ab_vocab(), Dist::from_probs(&[0.0, 0.5, 0.5, 0.0]).unwrap());
    let student = MarkovOracle::order0(ab_vocab(), Dist::from_probs(&[0.0, 0.25, 0.75, 0.0]).unwrap());
    (oracle.unwrap(), student.unwrap())
}

pub fn tiny_pair() -> (MarkovOracle, MarkovOracle) {
    let oracle = MarkovOracle::from_fn(ab_vocab(), 1, |s| {
        Dist::from_probs(match s[0] {
            1 => &[0.0, 0.2, 0.7, 0.1],
            2 => &[0.0, 0.5, 0.3, 0.2],
            _ => &[0.0, 0.6, 0.3, 0.1],
        })
    });
    let student = MarkovOracle::order0(ab_vocab(), Dist::from_probs(&[0.0, 0.45, 0.45, 0.1]).unwrap());
    (oracle.unwrap(), student.unwrap())
}

pub mod trap {
    use super::*;

    pub const BOS: TokenId = 0;
    pub const A: TokenId = 1;
    pub const B: TokenId = 2;
    pub const X: TokenId = 3;
    pub const EOS: TokenId = 4;

    pub fn vocab() -> Vocab {
        Vocab::with_symbols(&["a", "b", "x"]).expect("static vocabulary")
    }

    /// Oracle weights over `[a, b, x, eos]` for state `(s1, s2)`.
    fn oracle_weights(s1: TokenId, s2: TokenId) -> [f64; 4] {
        match (s1, s2) {
            (_, BOS) => [0.600, 0.378, 0.020, 0.002],
            (BOS, A) => [0.550, 0.428, 0.020, 0.002],
            (BOS, B) => [0.450, 0.528, 0.020, 0.002],
            (A, A) => [0.300, 0.668, 0.030, 0.002],
            (A, B) => [0.360, 0.608, 0.030, 0.002],
            (B, B) => [0.620, 0.348, 0.030, 0.002],
            (B, A) => [0.500, 0.458, 0.040, 0.002],
            (X, A) => [0.450, 0.508, 0.040, 0.002],
            (X, B) => [0.500, 0.458, 0.040, 0.002],
            _ => [0.520, 0.438, 0.040, 0.002],
        }
    }

    /// Student weights: light smoothing of the oracle everywhere, except
    /// where it prefers `x`.
    fn student_weights(s1: TokenId, s2: TokenId) -> [f64; 4] {
        match (s1, s2) {
            (B, A) => [0.330, 0.300, 0.350, 0.020],
            (_, X) => [0.160, 0.120, 0.700, 0.020],
            _ => {
                let o = oracle_weights(s1, s2);
                o.map(|w| 0.9 * w + 0.1 * 0.25)
            }
        }
    }

    fn build(weights: fn(TokenId, TokenId) -> [f64; 4]) -> MarkovOracle {
        MarkovOracle::from_fn(vocab(), 2, |s| {
            let w = weights(s[0], s[1]);
            Dist::from_weights(&[0.0, w[0], w[1], w[2], w[3]])
        })
        .expect("static table")
    }

    pub fn pair() -> (MarkovOracle, MarkovOracle) {
        (build(oracle_weights), build(student_weights))
    }
}

/// Looks up a built-in pair by name.
pub fn builtin(name: &str) -> Result<(MarkovOracle, MarkovOracle)> {
    match name {
        "context-free" => Ok(context_free_pair()),
        "tiny" => Ok(tiny_pair()),
        "trap" => Ok(trap::pair()),
        _ => Err(Error::param(format!(
            "unknown built-in fixture `{name}`; available: {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

pub const REFERENCE_SEED: u64 = 7;
pub const REFERENCE_SAMPLES: usize = 2000;

/// Rebuilds the reference fixture shipped under `fixtures/<name>.fixture`.
///
/// Exact vectors come from enumeration; `*_mc` vectors are Monte-Carlo
/// estimates with [`REFERENCE_SAMPLES`] samples and [`REFERENCE_SEED`].
pub fn reference_fixture(name: &str) -> Result<Fixture> {
    let (oracle, student) = builtin(name)?;
    let budget = EnumBudget::default();
    let opts = EstimatorOptions::with_seed(REFERENCE_SEED);
    let mut expected = BTreeMap::new();
    let (spec, horizon) = match name {
        "context-free" => {
            let spec = DecoderSpec::Greedy;
            let r = exact_regret(&oracle, &student, &spec, &[oracle.vocab().bos()], 50, &budget)?;
            expected.insert("regret_exact".into(), r.cumulative);
            expected.insert("eps_exact".into(), exact_eps(&oracle, &student, 6, &budget)?.step);
            (spec, 50)
        }
        "tiny" => {
            let spec = DecoderSpec::Ancestral { temperature: 1.0 };
            let r = exact_regret(&oracle, &student, &spec, &[oracle.vocab().bos()], 5, &budget)?;
            expected.insert("regret_exact".into(), r.cumulative);
            expected.insert("eps_exact".into(), exact_eps(&oracle, &student, 5, &budget)?.step);
            (spec, 5)
        }
        _ => {
            let horizon = 64;
            let bos = oracle.vocab().bos();
            let spec = DecoderSpec::Greedy;
            let r = exact_regret(&oracle, &student, &spec, &[bos], horizon, &budget)?;
            expected.insert("regret_exact".into(), r.cumulative);
            expected.insert("eps_exact".into(), exact_eps(&oracle, &student, 8, &budget)?.step);
            let heldout = sample_corpus(&oracle, REFERENCE_SAMPLES, horizon + 1, REFERENCE_SEED)?;
            let eps = estimate_eps(&oracle, &student, &heldout, horizon, &opts)?;
            expected.insert("eps_mc".into(), eps.eps_t);
            expected.insert("eps_mc_stderr".into(), eps.stderr_t);
            let prompts = vec![vec![bos]; REFERENCE_SAMPLES];
            let temp = DecoderSpec::Ancestral { temperature: 1.2 };
            let r = estimate_regret(&oracle, &student, &temp, &prompts, horizon, &opts)?;
            expected.insert("regret_mc_temp1.2".into(), r.r_le_l);
            expected.insert("regret_mc_temp1.2_stderr".into(), r.stderr_le_l);
            (spec, horizon)
        }
    };
    Ok(Fixture {
        name: name.to_string(),
        spec,
        horizon,
        oracle: oracle.into(),
        student: student.into(),
        expected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub spec: DecoderSpec,
    pub horizon: usize,
    pub oracle: StoredModel,
    pub student: StoredModel,
    pub expected: BTreeMap<String, Vec<f64>>,
}

impl Fixture {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "fixture {}", self.name);
        let _ = writeln!(out, "spec {}", self.spec);
        let _ = writeln!(out, "horizon {}", self.horizon);
        out.push_str("oracle\n");
        out.push_str(&self.oracle.to_text());
        out.push_str("student\n");
        out.push_str(&self.student.to_text());
        for (key, vals) in &self.expected {
            let _ = write!(out, "expected {key}");
            for v in vals {
                out.push(' ');
                out.push_str(&format_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text, 0);
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (ln, line) = lines.expect_line(key)?;
            let rest = line
                .strip_prefix(key)
                .map(str::trim)
                .ok_or_else(|| perr(ln, 1, format!("expected `{key}`, found `{line}`")))?;
            Ok((ln, rest.to_string()))
        };
        let (_, name) = field("fixture")?;
        let (ln, spec) = field("spec")?;
        let spec: DecoderSpec = spec.parse().map_err(|e: Error| perr(ln, 6, e.to_string()))?;
        let (ln, horizon) = field("horizon")?;
        let horizon = horizon
            .parse()
            .map_err(|_| perr(ln, 9, format!("cannot parse horizon `{horizon}`")))?;
        field("oracle")?;
        let oracle = parse_model(&mut lines)?;
        let (ln, rest) = lines.expect_line("student")?;
        if rest.trim() != "student" {
            return Err(perr(ln, 1, format!("expected `student`, found `{rest}`")));
        }
        let student = parse_model(&mut lines)?;
        let mut expected = BTreeMap::new();
        while let Some((ln, line)) = lines.next_line() {
            let mut parts = line
                .strip_prefix("expected ")
                .ok_or_else(|| perr(ln, 1, format!("expected `expected <key> <values>`, found `{line}`")))?
                .split_whitespace();
            let key = parts.next().ok_or_else(|| perr(ln, 10, "missing key"))?;
            let vals = parts
                .map(|s| s.parse::<f64>().map_err(|_| perr(ln, 1, format!("cannot parse `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            expected.insert(key.to_string(), vals);
        }
        Ok(Self {
            name,
            spec,
            horizon,
            oracle,
            student,
            expected,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn expected(&self, key: &str) -> Result<&[f64]> {
        self.expected
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::param(format!("fixture `{}` has no expected `{key}`", self.name)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::kl_next;

    #[test]
    fn context_free_constant() {
        let (o, p) = context_free_pair();
        let kl = kl_next(&o, &p, &[0, 1, 2]).unwrap();
        assert!((kl - context_free_kl()).abs() < 1e-15);
        assert!((context_free_kl() - 0.1438).abs() < 5e-5);
    }

    #[test]
    fn trap_student_is_greedy_into_x() {
        let (_, p) = trap::pair();
        let mut ctx = vec![trap::BOS];
        for _ in 0..10 {
            let t = p.next_dist(&ctx).unwrap().argmax();
            ctx.push(t);
        }
        use trap::*;
        assert_eq!(ctx, [BOS, A, A, B, B, A, X, X, X, X, X]);
    }

    #[test]
    fn fixture_text_round_trips() {
        let (o, p) = tiny_pair();
        let mut expected = BTreeMap::new();
        expected.insert("regret".to_string(), vec![0.1, 1.0 / 3.0]);
        let f = Fixture {
            name: "tiny".into(),
            spec: DecoderSpec::TopP { p: 0.9, temperature: 1.2 },
            horizon: 5,
            oracle: o.into(),
            student: p.into(),
            expected,
        };
        assert_eq!(Fixture::parse(&f.to_text()).unwrap(), f);
    }

    #[test]
    fn unknown_builtin_lists_names() {
        let msg = builtin("nope").unwrap_err().to_string();
        assert!(msg.contains("context-free, tiny, trap"));
    }
}
