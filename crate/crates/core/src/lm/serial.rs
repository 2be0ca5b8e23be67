//! Versioned flat text format for tabular models.
//!
//! ```text
//! regretmeter-model v1
//! kind markov            # or: ngram
//! vocab 4 bos 0 eos 3
//! token 0 <bos>
//! token 1 a
//! ...
//! order 1
//! lambda 1.0000000000000000e0   # ngram only
//! row 0 : -inf -6.9314718055994529e-1 ...
//! end
//! ```
//!
//! Log-probabilities are written with 17 significant digits so that parsing
//! reproduces every value bit for bit. Markov tables list all `V^m` rows in
//! canonical order; n-gram tables list only observed states.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{LanguageModel, MarkovOracle, NGramStudent};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocab};

pub const MAGIC: &str = "regretmeter-model v1";

/// A tabular model loaded from (or destined for) the text format.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Markov(MarkovOracle),
    NGram(NGramStudent),
}

impl StoredModel {
    pub fn to_text(&self) -> String {
        match self {
            StoredModel::Markov(m) => write_markov(m),
            StoredModel::NGram(n) => write_ngram(n),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_model(&mut Lines::new(text, 0))
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

    pub fn as_model(&self) -> &dyn LanguageModel {
        match self {
            StoredModel::Markov(m) => m,
            StoredModel::NGram(n) => n,
        }
    }
}

impl LanguageModel for StoredModel {
    fn vocab(&self) -> &Vocab {
        self.as_model().vocab()
    }
    fn next_dist(&self, ctx: &[TokenId]) -> Result<Dist> {
        self.as_model().next_dist(ctx)
    }
    fn model_id(&self) -> String {
        self.as_model().model_id()
    }
}

impl From<MarkovOracle> for StoredModel {
    fn from(m: MarkovOracle) -> Self {
        StoredModel::Markov(m)
    }
}

impl From<NGramStudent> for StoredModel {
    fn from(n: NGramStudent) -> Self {
        StoredModel::NGram(n)
    }
}

pub fn format_f64(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub(crate) fn escape_token(tok: &str) -> String {
    let mut out = String::with_capacity(tok.len());
    for c in tok.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_token(raw: &str) -> Option<String> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            's' => ' ',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

fn write_header(out: &mut String, kind: &str, vocab: &Vocab, order: usize) {
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "kind {kind}");
    let _ = writeln!(out, "vocab {} bos {} eos {}", vocab.size(), vocab.bos(), vocab.eos());
    for (id, tok) in vocab.tokens().iter().enumerate() {
        let _ = writeln!(out, "token {id} {}", escape_token(tok));
    }
    let _ = writeln!(out, "order {order}");
}

fn write_row(out: &mut String, label: &str, state: &[TokenId], dist: &Dist) {
    out.push_str(label);
    for s in state {
        let _ = write!(out, " {s}");
    }
    out.push_str(" :");
    for &lp in dist.logprobs() {
        out.push(' ');
        out.push_str(&format_f64(lp));
    }
    out.push('\n');
}

pub(crate) fn write_markov(m: &MarkovOracle) -> String {
    let mut out = String::new();
    write_header(&mut out, "markov", m.vocab(), m.order());
    for (state, row) in m.states().zip(m.rows()) {
        write_row(&mut out, "row", &state, row);
    }
    out.push_str("end\n");
    out
}

pub(crate) fn write_ngram(n: &NGramStudent) -> String {
    let mut out = String::new();
    write_header(&mut out, "ngram", n.vocab(), n.order());
    let _ = writeln!(out, "lambda {}", format_f64(n.lambda()));
    for (state, row) in n.rows() {
        write_row(&mut out, "row", state, row);
    }
    out.push_str("end\n");
    out
}

/// Line cursor that reports 1-based positions relative to the whole file.
pub(crate) struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    offset: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str, offset: usize) -> Self {
        Self {
            inner: text.lines().enumerate().peekable(),
            offset,
        }
    }

    /// Next non-blank line that is not a `#` comment, with its line number.
    pub(crate) fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim_end_matches('\r');
            if t.trim().is_empty() || t.trim_start().starts_with('#') {
                continue;
            }
            return Some((i + 1 + self.offset, t));
        }
        None
    }

    pub(crate) fn expect_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next_line().ok_or_else(|| Error::Parse {
            line: 0,
            column: 0,
            message: format!("unexpected end of input, expected {what}"),
        })
    }
}

pub(crate) fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn keyed<'a>(line_no: usize, line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| perr(line_no, 1, format!("expected `{key} ...`, found `{line}`")))
}

fn parse_num<T: std::str::FromStr>(line_no: usize, line: &str, field: &str) -> Result<T> {
    let col = line.find(field).map_or(1, |c| c + 1);
    field
        .parse()
        .map_err(|_| perr(line_no, col, format!("cannot parse `{field}`")))
}

pub(crate) fn parse_model(lines: &mut Lines<'_>) -> Result<StoredModel> {
    let (ln, magic) = lines.expect_line("model header")?;
    if magic.trim() != MAGIC {
        return Err(perr(ln, 1, format!("expected `{MAGIC}`, found `{magic}`")));
    }
    let (ln, line) = lines.expect_line("kind")?;
    let kind = keyed(ln, line, "kind")?.trim().to_string();
    if kind != "markov" && kind != "ngram" {
        return Err(perr(ln, 6, format!("unknown model kind `{kind}`")));
    }

    let (ln, line) = lines.expect_line("vocab")?;
    let fields: Vec<&str> = keyed(ln, line, "vocab")?.split(' ').collect();
    if fields.len() != 5 || fields[1] != "bos" || fields[3] != "eos" {
        return Err(perr(ln, 1, "expected `vocab <V> bos <id> eos <id>`"));
    }
    let size: usize = parse_num(ln, line, fields[0])?;
    let bos: TokenId = parse_num(ln, line, fields[2])?;
    let eos: TokenId = parse_num(ln, line, fields[4])?;

    let mut tokens = Vec::with_capacity(size);
    for id in 0..size {
        let (ln, line) = lines.expect_line("token")?;
        let rest = keyed(ln, line, "token")?;
        let (idx, raw) = rest
            .split_once(' ')
            .ok_or_else(|| perr(ln, 7, "expected `token <id> <text>`"))?;
        let idx: usize = parse_num(ln, line, idx)?;
        if idx != id {
            return Err(perr(ln, 7, format!("expected token id {id}, found {idx}")));
        }
        let tok = unescape_token(raw).ok_or_else(|| perr(ln, 8 + idx.to_string().len(), "bad escape"))?;
        tokens.push(tok);
    }
    let vocab = Vocab::new(tokens, bos, eos)?;

    let (ln, line) = lines.expect_line("order")?;
    let order: usize = parse_num(ln, line, keyed(ln, line, "order")?.trim())?;

    let lambda = if kind == "ngram" {
        let (ln, line) = lines.expect_line("lambda")?;
        Some(parse_num::<f64>(ln, line, keyed(ln, line, "lambda")?.trim())?)
    } else {
        None
    };

    let mut rows: Vec<(Vec<TokenId>, Dist)> = Vec::new();
    loop {
        let (ln, line) = lines.expect_line("row or end")?;
        if line.trim() == "end" {
            break;
        }
        let rest = keyed(ln, line, "row")?;
        let (state_part, probs_part) = rest
            .split_once(':')
            .ok_or_else(|| perr(ln, 1, "row is missing `:`"))?;
        let state = state_part
            .split_whitespace()
            .map(|s| parse_num::<TokenId>(ln, line, s))
            .collect::<Result<Vec<_>>>()?;
        if state.len() != order || state.iter().any(|&t| t as usize >= size) {
            return Err(perr(ln, 5, format!("state {state:?} invalid for order {order}")));
        }
        let logprobs = probs_part
            .split_whitespace()
            .map(|s| parse_num::<f64>(ln, line, s))
            .collect::<Result<Vec<_>>>()?;
        if logprobs.len() != size {
            return Err(perr(
                ln,
                1,
                format!("row has {} entries, vocabulary has {size}", logprobs.len()),
            ));
        }
        let dist = Dist::from_logprobs(logprobs).map_err(|e| perr(ln, 1, e.to_string()))?;
        rows.push((state, dist));
    }

    match lambda {
        None => {
            let expected: Vec<Vec<TokenId>> = {
                let probe = MarkovOracle::from_fn(vocab.clone(), order, |_| {
                    Ok(Dist::uniform_except(size, bos))
                })?;
                probe.states().collect()
            };
            if expected.len() != rows.len()
                || expected.iter().zip(&rows).any(|(e, (s, _))| e != s)
            {
                return Err(perr(
                    0,
                    0,
                    format!(
                        "markov table must list all {} states in canonical order",
                        expected.len()
                    ),
                ));
            }
            let dists = rows.into_iter().map(|(_, d)| d).collect();
            Ok(StoredModel::Markov(MarkovOracle::from_rows(vocab, order, dists)?))
        }
        Some(lambda) => {
            let mut map = BTreeMap::new();
            for (state, dist) in rows {
                if map.insert(state.clone(), dist).is_some() {
                    return Err(perr(0, 0, format!("duplicate row for state {state:?}")));
                }
            }
            Ok(StoredModel::NGram(NGramStudent::from_parts(vocab, order, lambda, map)))
        }
    }
}
