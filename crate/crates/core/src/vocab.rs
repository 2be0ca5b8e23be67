//! Token vocabulary with distinguished start and end tokens.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Ordered token set. Ids are dense in `0..size()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    bos: TokenId,
    eos: TokenId,
}

impl Vocab {
    pub fn new(tokens: Vec<String>, bos: TokenId, eos: TokenId) -> Result<Self> {
        let size = tokens.len();
        if size < 2 {
            return Err(Error::param("vocabulary needs at least bos and eos"));
        }
        if bos as usize >= size || eos as usize >= size {
            return Err(Error::param(format!(
                "bos {bos} / eos {eos} out of range for vocabulary of size {size}"
            )));
        }
        if bos == eos {
            return Err(Error::param("bos and eos must differ"));
        }
        let mut index = HashMap::with_capacity(size);
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::param(format!("token {id} is empty")));
            }
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::param(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Self {
            tokens,
            index,
            bos,
            eos,
        })
    }

    /// `<bos>`, the given symbols in order, then `<eos>`.
    pub fn with_symbols<S: AsRef<str>>(symbols: &[S]) -> Result<Self> {
        let mut tokens = Vec::with_capacity(symbols.len() + 2);
        tokens.push("<bos>".to_string());
        tokens.extend(symbols.iter().map(|s| s.as_ref().to_string()));
        tokens.push("<eos>".to_string());
        let eos = (tokens.len() - 1) as TokenId;
        Self::new(tokens, 0, eos)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    /// Number of tokens a model may emit (everything except bos).
    pub fn emittable(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    /// Cheap check run on every model query: bos-initiated and non-terminal.
    pub fn check_query(&self, ctx: &[TokenId]) -> Result<()> {
        match (ctx.first(), ctx.last()) {
            (Some(&first), _) if first != self.bos => Err(Error::InvalidContext(format!(
                "context must start with bos ({}), found {first}",
                self.bos
            ))),
            (None, _) => Err(Error::InvalidContext("empty context".into())),
            (_, Some(&last)) if last == self.eos => Err(Error::TerminalContext),
            _ => Ok(()),
        }
    }

    /// Full validation of a context: leading bos, no interior bos, eos only in last place.
    pub fn validate_context(&self, ctx: &[TokenId]) -> Result<()> {
        if ctx.first() != Some(&self.bos) {
            return Err(Error::InvalidContext("context must start with bos".into()));
        }
        for (i, &tok) in ctx.iter().enumerate().skip(1) {
            if !self.contains(tok) {
                return Err(Error::InvalidContext(format!(
                    "token {tok} at position {i} outside vocabulary of size {}",
                    self.size()
                )));
            }
            if tok == self.bos {
                return Err(Error::InvalidContext(format!("bos at position {i}")));
            }
            if tok == self.eos && i + 1 != ctx.len() {
                return Err(Error::InvalidContext(format!(
                    "eos at position {i} is not the final token"
                )));
            }
        }
        Ok(())
    }
}

/// A validated, bos-initiated token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context(Vec<TokenId>);

impl Context {
    pub fn new(vocab: &Vocab, ids: Vec<TokenId>) -> Result<Self> {
        vocab.validate_context(&ids)?;
        Ok(Self(ids))
    }

    pub fn start(vocab: &Vocab) -> Self {
        Self(vec![vocab.bos()])
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<TokenId> {
        self.0
    }
}

impl AsRef<[TokenId]> for Context {
    fn as_ref(&self) -> &[TokenId] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_layout() {
        let v = Vocab::with_symbols(&["a", "b"]).unwrap();
        assert_eq!(v.size(), 4);
        assert_eq!(v.bos(), 0);
        assert_eq!(v.eos(), 3);
        assert_eq!(v.id("b"), Some(2));
        assert_eq!(v.emittable(), 3);
    }

    #[test]
    fn rejects_bad_vocab() {
        assert!(Vocab::new(vec!["x".into(), "y".into()], 0, 0).is_err());
        assert!(Vocab::new(vec!["x".into(), "x".into()], 0, 1).is_err());
        assert!(Vocab::new(vec!["x".into(), "y".into()], 0, 5).is_err());
    }

    #[test]
    fn context_rules() {
        let v = Vocab::with_symbols(&["a", "b"]).unwrap();
        assert!(Context::new(&v, vec![0, 1, 2, 3]).is_ok());
        assert!(Context::new(&v, vec![1, 2]).is_err());
        assert!(Context::new(&v, vec![0, 3, 1]).is_err());
        assert!(Context::new(&v, vec![0, 1, 0]).is_err());
        assert!(matches!(v.check_query(&[0, 1, 3]), Err(Error::TerminalContext)));
    }
}
