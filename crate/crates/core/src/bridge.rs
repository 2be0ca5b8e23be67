//! Client for remote next-token log-probability servers.
//!
//! Newline-delimited JSON over TCP (`host:port`) or over the stdin/stdout of
//! a child process (`stdio:<shell command>`). One request in flight per
//! connection; replies are matched by order.
//!
//! ```text
//! → {"v":1,"op":"hello"}
//! ← {"v":1,"V":50257,"model":"gpt2","bos":50256,"eos":50256}
//! → {"v":1,"op":"dists","ctxs":[[0,5,9],[0]]}
//! ← {"v":1,"logprobs":[[...],[...]]}
//! ← {"v":1,"error":{"code":"bad_request","message":"..."}}
//! ```
//!
//! Log-probabilities are natural logs; `null` stands for `-inf`. Each vector
//! must exp-sum to 1 within [`NORMALIZATION_TOL`] and is renormalized on
//! arrival. [`serve`] and [`serve_stream`] implement the server side for any
//! local [`LanguageModel`].

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dist::Dist;
use crate::error::Result;
use crate::lm::LanguageModel;
use crate::vocab::{TokenId, Vocab};

pub const PROTOCOL_VERSION: u64 = 1;
pub const ADDR_ENV: &str = "REGRETMETER_BRIDGE_ADDR";
pub const NORMALIZATION_TOL: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("cannot reach bridge at {addr}: {message}")]
    Connect { addr: String, message: String },

    #[error("bridge timed out after {0:?}")]
    Timeout(Duration),

    #[error("bridge connection closed")]
    Closed,

    #[error("bridge I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed bridge reply: {0}")]
    Malformed(String),

    #[error("unsupported protocol version {got}; this client speaks version {PROTOCOL_VERSION}")]
    Version { got: u64 },

    #[error("length mismatch: expected {expected} log-probabilities, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("reply carries {got} distributions for {expected} contexts")]
    CountMismatch { expected: usize, got: usize },

    #[error("distribution {index} is not normalized: probabilities sum to {sum}")]
    NotNormalized { index: usize, sum: f64 },

    #[error("server error {code}: {message}")]
    Server { code: String, message: String },

    #[error("batch of {got} contexts exceeds the maximum of {max}")]
    BatchTooLarge { got: usize, max: usize },

    #[error("handshake mismatch: {0}")]
    Handshake(String),

    #[error("no bridge address given and {ADDR_ENV} is unset")]
    NoAddress,
}

type BResult<T> = std::result::Result<T, BridgeError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeEndpoint {
    pub address: String,
    pub timeout: Duration,
    pub max_batch: usize,
}

impl BridgeEndpoint {
    pub fn new(address: impl Into<String>) -> Self {
        Self {
            address: address.into(),
            timeout: Duration::from_secs(30),
            max_batch: 64,
        }
    }

    /// Address from `REGRETMETER_BRIDGE_ADDR`.
    pub fn from_env() -> BResult<Self> {
        std::env::var(ADDR_ENV).map(Self::new).map_err(|_| BridgeError::NoAddress)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    #[serde(rename = "V")]
    pub vocab_size: usize,
    pub model: String,
    pub bos: TokenId,
    pub eos: TokenId,
}

enum Transport {
    Tcp(TcpStream),
    Stdio(Child),
}

/// A single connection that has completed the handshake.
pub struct BridgeClient {
    endpoint: BridgeEndpoint,
    handshake: Handshake,
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    transport: Transport,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient")
            .field("endpoint", &self.endpoint)
            .field("handshake", &self.handshake)
            .finish_non_exhaustive()
    }
}

/// Reads lines on a helper thread so every receive can time out.
fn line_pump<R: Read + Send + 'static>(reader: R) -> Receiver<io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(reader);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

fn connect_tcp(addr: &str, timeout: Duration) -> BResult<TcpStream> {
    let fail = |message: String| BridgeError::Connect {
        addr: addr.to_string(),
        message,
    };
    let addrs: Vec<_> = addr.to_socket_addrs().map_err(|e| fail(e.to_string()))?.collect();
    let mut last = String::from("no addresses resolved");
    for a in addrs {
        match TcpStream::connect_timeout(&a, timeout) {
            Ok(s) => return Ok(s),
            Err(e) if e.kind() == io::ErrorKind::TimedOut => return Err(BridgeError::Timeout(timeout)),
            Err(e) => last = e.to_string(),
        }
    }
    Err(fail(last))
}

impl BridgeClient {
    pub fn connect(endpoint: &BridgeEndpoint) -> BResult<Self> {
        let (writer, lines, transport): (Box<dyn Write + Send>, _, _) =
            if let Some(cmd) = endpoint.address.strip_prefix("stdio:") {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| BridgeError::Connect {
                        addr: endpoint.address.clone(),
                        message: e.to_string(),
                    })?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdin), line_pump(stdout), Transport::Stdio(child))
            } else {
                let stream = connect_tcp(&endpoint.address, endpoint.timeout)?;
                stream.set_nodelay(true)?;
                let reader = stream.try_clone()?;
                (Box::new(stream.try_clone()?), line_pump(reader), Transport::Tcp(stream))
            };
        let mut client = Self {
            endpoint: endpoint.clone(),
            handshake: Handshake {
                vocab_size: 0,
                model: String::new(),
                bos: 0,
                eos: 0,
            },
            writer,
            lines,
            transport,
        };
        let reply = client.call(&json!({"v": PROTOCOL_VERSION, "op": "hello"}))?;
        let hs: Handshake =
            serde_json::from_value(reply).map_err(|e| BridgeError::Malformed(format!("handshake: {e}")))?;
        if hs.vocab_size < 2 || hs.bos as usize >= hs.vocab_size || hs.eos as usize >= hs.vocab_size {
            return Err(BridgeError::Handshake(format!(
                "server declared V={} bos={} eos={}",
                hs.vocab_size, hs.bos, hs.eos
            )));
        }
        client.handshake = hs;
        Ok(client)
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn endpoint(&self) -> &BridgeEndpoint {
        &self.endpoint
    }

    fn call(&mut self, request: &Value) -> BResult<Value> {
        let mut line = serde_json::to_string(request).map_err(|e| BridgeError::Malformed(e.to_string()))?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        let reply = match self.lines.recv_timeout(self.endpoint.timeout) {
            Ok(r) => r?,
            Err(RecvTimeoutError::Timeout) => return Err(BridgeError::Timeout(self.endpoint.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(BridgeError::Closed),
        };
        let value: Value =
            serde_json::from_str(reply.trim_end()).map_err(|e| BridgeError::Malformed(e.to_string()))?;
        match value.get("v").and_then(Value::as_u64) {
            Some(PROTOCOL_VERSION) => {}
            Some(got) => return Err(BridgeError::Version { got }),
            None => return Err(BridgeError::Malformed("reply has no protocol version `v`".into())),
        }
        if let Some(err) = value.get("error") {
            return Err(BridgeError::Server {
                code: err.get("code").and_then(Value::as_str).unwrap_or("unknown").to_string(),
                message: err.get("message").and_then(Value::as_str).unwrap_or("").to_string(),
            });
        }
        Ok(value)
    }

    /// One normalized log-probability vector per context, in request order.
    pub fn remote_next_dists(&mut self, ctxs: &[&[TokenId]]) -> BResult<Vec<Vec<f64>>> {
        if ctxs.len() > self.endpoint.max_batch {
            return Err(BridgeError::BatchTooLarge {
                got: ctxs.len(),
                max: self.endpoint.max_batch,
            });
        }
        let reply = self.call(&json!({"v": PROTOCOL_VERSION, "op": "dists", "ctxs": ctxs}))?;
        let rows = reply
            .get("logprobs")
            .and_then(Value::as_array)
            .ok_or_else(|| BridgeError::Malformed("reply has no `logprobs` array".into()))?;
        if rows.len() != ctxs.len() {
            return Err(BridgeError::CountMismatch {
                expected: ctxs.len(),
                got: rows.len(),
            });
        }
        let v = self.handshake.vocab_size;
        rows.iter()
            .enumerate()
            .map(|(index, row)| {
                let row = row
                    .as_array()
                    .ok_or_else(|| BridgeError::Malformed(format!("logprobs[{index}] is not an array")))?;
                if row.len() != v {
                    return Err(BridgeError::LengthMismatch {
                        expected: v,
                        got: row.len(),
                    });
                }
                let lps = row
                    .iter()
                    .map(|x| match x {
                        Value::Null => Ok(f64::NEG_INFINITY),
                        _ => x
                            .as_f64()
                            .filter(|f| !f.is_nan() && *f != f64::INFINITY)
                            .ok_or_else(|| BridgeError::Malformed(format!("logprobs[{index}] holds {x}"))),
                    })
                    .collect::<BResult<Vec<f64>>>()?;
                renormalize(lps, index)
            })
            .collect()
    }
}

fn renormalize(mut lps: Vec<f64>, index: usize) -> BResult<Vec<f64>> {
    let max = lps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = if max == f64::NEG_INFINITY {
        0.0
    } else {
        lps.iter().map(|&x| (x - max).exp()).sum::<f64>() * max.exp()
    };
    if (sum - 1.0).abs() > NORMALIZATION_TOL || !sum.is_finite() {
        return Err(BridgeError::NotNormalized { index, sum });
    }
    if (sum - 1.0).abs() > crate::dist::NORMALIZATION_TOL {
        let log_z = sum.ln();
        lps.iter_mut().for_each(|x| *x -= log_z);
    }
    Ok(lps)
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        match &mut self.transport {
            Transport::Tcp(s) => {
                let _ = s.shutdown(std::net::Shutdown::Both);
            }
            Transport::Stdio(child) => {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

/// A remote model usable anywhere a local [`LanguageModel`] is.
///
/// Replies are cached by context, so repeated queries within a run return
/// bit-identical distributions.
pub struct BridgeModel {
    vocab: Vocab,
    model: String,
    client: Mutex<BridgeClient>,
    cache: Mutex<HashMap<Vec<TokenId>, Dist>>,
}

impl std::fmt::Debug for BridgeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeModel").field("model", &self.model).finish_non_exhaustive()
    }
}

impl BridgeModel {
    /// Connects and checks the handshake against `expected` if given. Without
    /// an expected vocabulary, tokens are named by id.
    pub fn connect(endpoint: &BridgeEndpoint, expected: Option<&Vocab>) -> Result<Self> {
        let client = BridgeClient::connect(endpoint)?;
        let hs = client.handshake().clone();
        let vocab = match expected {
            Some(v) => {
                if v.size() != hs.vocab_size || v.bos() != hs.bos || v.eos() != hs.eos {
                    return Err(BridgeError::Handshake(format!(
                        "server has V={} bos={} eos={}, expected V={} bos={} eos={}",
                        hs.vocab_size,
                        hs.bos,
                        hs.eos,
                        v.size(),
                        v.bos(),
                        v.eos()
                    ))
                    .into());
                }
                v.clone()
            }
            None => {
                let tokens = (0..hs.vocab_size)
                    .map(|i| match i as TokenId {
                        t if t == hs.bos => "<bos>".to_string(),
                        t if t == hs.eos => "<eos>".to_string(),
                        t => format!("<{t}>"),
                    })
                    .collect();
                Vocab::new(tokens, hs.bos, hs.eos)?
            }
        };
        Ok(Self {
            vocab,
            model: hs.model,
            client: Mutex::new(client),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn remote_model(&self) -> &str {
        &self.model
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl LanguageModel for BridgeModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn next_dist(&self, ctx: &[TokenId]) -> Result<Dist> {
        Ok(self.next_dists(&[ctx])?.remove(0))
    }

    fn next_dists(&self, ctxs: &[&[TokenId]]) -> Result<Vec<Dist>> {
        for c in ctxs {
            self.vocab.check_query(c)?;
        }
        let missing: Vec<&[TokenId]> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            ctxs.iter().copied().filter(|c| !cache.contains_key(*c) && seen.insert(*c)).collect()
        };
        if !missing.is_empty() {
            let mut client = self.client.lock().expect("client lock");
            let max = client.endpoint().max_batch;
            for batch in missing.chunks(max) {
                let rows = client.remote_next_dists(batch)?;
                let mut cache = self.cache.lock().expect("cache lock");
                for (c, lps) in batch.iter().zip(rows) {
                    cache.insert(c.to_vec(), Dist::from_logprobs(lps)?);
                }
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(ctxs.iter().map(|c| cache[*c].clone()).collect())
    }

    fn model_id(&self) -> String {
        format!("bridge:{}", self.model)
    }
}

fn error_reply(code: &str, message: impl Into<String>) -> Value {
    json!({"v": PROTOCOL_VERSION, "error": {"code": code, "message": message.into()}})
}

/// Answers one request line for `model`.
pub fn handle_request(model: &dyn LanguageModel, line: &str) -> Value {
    let req: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return error_reply("bad_request", format!("invalid JSON: {e}")),
    };
    if req.get("v").and_then(Value::as_u64) != Some(PROTOCOL_VERSION) {
        return error_reply("unsupported_version", format!("server speaks version {PROTOCOL_VERSION}"));
    }
    let vocab = model.vocab();
    match req.get("op").and_then(Value::as_str) {
        Some("hello") => json!({
            "v": PROTOCOL_VERSION,
            "V": vocab.size(),
            "model": model.model_id(),
            "bos": vocab.bos(),
            "eos": vocab.eos(),
        }),
        Some("dists") => {
            let ctxs: Vec<Vec<TokenId>> = match req.get("ctxs").cloned().map(serde_json::from_value) {
                Some(Ok(c)) => c,
                _ => return error_reply("bad_request", "`ctxs` must be a list of token-id lists"),
            };
            let refs: Vec<&[TokenId]> = ctxs.iter().map(Vec::as_slice).collect();
            for c in &refs {
                if let Err(e) = vocab.validate_context(c).and_then(|_| vocab.check_query(c)) {
                    return error_reply("bad_context", e.to_string());
                }
            }
            match model.next_dists(&refs) {
                Ok(ds) => {
                    let rows: Vec<Vec<Value>> = ds
                        .iter()
                        .map(|d| {
                            d.logprobs()
                                .iter()
                                .map(|&x| if x == f64::NEG_INFINITY { Value::Null } else { json!(x) })
                                .collect()
                        })
                        .collect();
                    json!({"v": PROTOCOL_VERSION, "logprobs": rows})
                }
                Err(e) => error_reply("model_error", e.to_string()),
            }
        }
        _ => error_reply("bad_request", "unknown `op`; expected hello or dists"),
    }
}

/// Serves requests from `reader` until end of input.
pub fn serve_stream<R: BufRead, W: Write>(model: &dyn LanguageModel, reader: R, mut writer: W) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut out = handle_request(model, &line).to_string();
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection.
pub fn serve(listener: TcpListener, model: Arc<dyn LanguageModel>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let model = Arc::clone(&model);
        thread::spawn(move || {
            if let Ok(reader) = stream.try_clone() {
                let _ = serve_stream(model.as_ref(), BufReader::new(reader), stream);
            }
        });
    }
    Ok(())
}

/// Binds `127.0.0.1` on a free port and serves `model` on a background thread.
pub fn spawn_loopback(model: Arc<dyn LanguageModel>) -> io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?.to_string();
    thread::spawn(move || serve(listener, model));
    Ok(addr)
}
