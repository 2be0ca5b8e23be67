use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A decoding strategy and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DecoderSpec {
    Greedy,
    Beam { width: usize },
    Ancestral { temperature: f64 },
    TopK { k: usize, temperature: f64 },
    TopP { p: f64, temperature: f64 },
}

impl DecoderSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::param(m));
        match *self {
            DecoderSpec::Greedy => Ok(()),
            DecoderSpec::Beam { width: 0 } => bad("beam width must be ≥ 1".into()),
            DecoderSpec::TopK { k: 0, .. } => bad("top-k k must be ≥ 1".into()),
            DecoderSpec::TopP { p, .. } if !(p > 0.0 && p <= 1.0) => {
                bad(format!("top-p p must lie in (0, 1], got {p}"))
            }
            DecoderSpec::Ancestral { temperature }
            | DecoderSpec::TopK { temperature, .. }
            | DecoderSpec::TopP { temperature, .. }
                if !(temperature > 0.0 && temperature.is_finite()) =>
            {
                bad(format!("temperature must be > 0, got {temperature}"))
            }
            _ => Ok(()),
        }
    }

    /// Greedy and beam search never consume randomness.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, DecoderSpec::Greedy | DecoderSpec::Beam { .. })
    }

    /// Filesystem-safe label, e.g. `temp_t1.2`.
    pub fn label(&self) -> String {
        self.to_string().replace([':', '='], "_").replace(',', "-")
    }

    /// greedy, beam:k=5, temp:t=1, temp:t=1.2, topk:k=100, topp:p=0.94
    pub fn default_grid() -> Vec<DecoderSpec> {
        vec![
            DecoderSpec::Greedy,
            DecoderSpec::Beam { width: 5 },
            DecoderSpec::Ancestral { temperature: 1.0 },
            DecoderSpec::Ancestral { temperature: 1.2 },
            DecoderSpec::TopK { k: 100, temperature: 1.0 },
            DecoderSpec::TopP { p: 0.94, temperature: 1.0 },
        ]
    }

    /// Comma-separated list; parameters inside one spec are also
    /// comma-separated, so `topk:k=10,t=0.8,greedy` parses as two specs.
    pub fn parse_list(input: &str) -> Result<Vec<DecoderSpec>> {
        let mut specs: Vec<String> = Vec::new();
        for part in input.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let is_param = !part.contains(':') && part.contains('=');
            match specs.last_mut() {
                Some(last) if is_param => {
                    last.push(',');
                    last.push_str(part);
                }
                _ => specs.push(part.to_string()),
            }
        }
        if specs.is_empty() {
            return Err(Error::SpecParse {
                input: input.to_string(),
                message: "empty spec list".into(),
            });
        }
        specs.iter().map(|s| s.parse()).collect()
    }
}

impl fmt::Display for DecoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let temp = |t: f64| if t == 1.0 { String::new() } else { format!(",t={t}") };
        match *self {
            DecoderSpec::Greedy => write!(f, "greedy"),
            DecoderSpec::Beam { width } => write!(f, "beam:k={width}"),
            DecoderSpec::Ancestral { temperature } => write!(f, "temp:t={temperature}"),
            DecoderSpec::TopK { k, temperature } => write!(f, "topk:k={k}{}", temp(temperature)),
            DecoderSpec::TopP { p, temperature } => write!(f, "topp:p={p}{}", temp(temperature)),
        }
    }
}

impl FromStr for DecoderSpec {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        let fail = |message: &str| Error::SpecParse {
            input: input.to_string(),
            message: message.to_string(),
        };
        let s = input.trim();
        let (kind, params) = match s.split_once(':') {
            Some((k, p)) => (k, p),
            None => (s, ""),
        };
        let mut k_val: Option<usize> = None;
        let mut t_val: Option<f64> = None;
        let mut p_val: Option<f64> = None;
        for kv in params.split(',').filter(|kv| !kv.is_empty()) {
            let (key, val) = kv.split_once('=').ok_or_else(|| fail("expected key=value"))?;
            let dup = match key {
                "k" => k_val
                    .replace(val.parse().map_err(|_| fail("k must be a positive integer"))?)
                    .is_some(),
                "t" => t_val
                    .replace(val.parse().map_err(|_| fail("t must be a number"))?)
                    .is_some(),
                "p" => p_val
                    .replace(val.parse().map_err(|_| fail("p must be a number"))?)
                    .is_some(),
                _ => return Err(fail(&format!("unknown parameter `{key}`"))),
            };
            if dup {
                return Err(fail(&format!("parameter `{key}` given twice")));
            }
        }
        let allow = |ok_k: bool, ok_t: bool, ok_p: bool| -> Result<()> {
            if (k_val.is_some() && !ok_k) || (t_val.is_some() && !ok_t) || (p_val.is_some() && !ok_p) {
                Err(fail(&format!("parameter not accepted by `{kind}`")))
            } else {
                Ok(())
            }
        };
        let spec = match kind {
            "greedy" => {
                allow(false, false, false)?;
                DecoderSpec::Greedy
            }
            "beam" => {
                allow(true, false, false)?;
                DecoderSpec::Beam {
                    width: k_val.ok_or_else(|| fail("beam requires k"))?,
                }
            }
            "temp" => {
                allow(false, true, false)?;
                DecoderSpec::Ancestral {
                    temperature: t_val.ok_or_else(|| fail("temp requires t"))?,
                }
            }
            "topk" => {
                allow(true, true, false)?;
                DecoderSpec::TopK {
                    k: k_val.ok_or_else(|| fail("topk requires k"))?,
                    temperature: t_val.unwrap_or(1.0),
                }
            }
            "topp" => {
                allow(false, true, true)?;
                DecoderSpec::TopP {
                    p: p_val.ok_or_else(|| fail("topp requires p"))?,
                    temperature: t_val.unwrap_or(1.0),
                }
            }
            _ => return Err(fail(&format!("unknown decoder `{kind}`"))),
        };
        spec.validate().map_err(|e| fail(&e.to_string()))?;
        Ok(spec)
    }
}

impl From<DecoderSpec> for String {
    fn from(s: DecoderSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for DecoderSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
