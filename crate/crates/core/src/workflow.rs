//! End-to-end commands behind the `regretmeter` binary.
//!
//! Every command is a plain function so it can be driven from tests and
//! examples as well as from the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::bridge::{BridgeClient, BridgeEndpoint, BridgeModel, Handshake};
use crate::corpus_io::{chunk_and_prompt, read_tokens, write_tokens, TokenizerMode, TokenizerSpec};
use crate::decoding::DecoderSpec;
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::fixtures::{builtin, reference_fixture};
use crate::lm::{sample_corpus, train_ngram, LanguageModel, MarkovOracle, ProbabilityFloor, StoredModel};
use crate::metrics::report::{self, fmt_float, ReportRow, NA};
use crate::metrics::{estimate_eps_after, run_rollouts, EstimatorOptions, ExposureReport, RegretCurve, ReportMetadata};
use crate::rng::{fnv1a64, splitmix64, substream};
use crate::textqual::{quality_csv, Completion, QualityOptions, QualityReport, QualityRow};
use crate::vocab::{TokenId, Vocab};

/// Where a model comes from.
///
/// - `builtin:<name>:oracle` / `builtin:<name>:student` for the shipped pairs
///   (`builtin:<name>` alone means the oracle)
/// - `file:<path>` (or a bare path) for the text model format
/// - `bridge:<address>`, or `bridge` for the address in `REGRETMETER_BRIDGE_ADDR`
/// - `ngram` (student only): train on oracle samples with `student_order`
///   and `student_lambda`
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    Builtin { name: String, student: bool },
    File(PathBuf),
    Bridge(Option<String>),
    NGram,
}

impl FromStr for ModelSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "ngram" {
            return Ok(Self::NGram);
        }
        if s == "bridge" {
            return Ok(Self::Bridge(None));
        }
        if let Some(addr) = s.strip_prefix("bridge:") {
            return Ok(Self::Bridge(Some(addr.to_string())));
        }
        if let Some(rest) = s.strip_prefix("builtin:") {
            let (name, role) = rest.split_once(':').unwrap_or((rest, "oracle"));
            if !crate::fixtures::BUILTIN_NAMES.contains(&name) {
                return Err(format!(
                    "unknown builtin `{name}`; available: {}",
                    crate::fixtures::BUILTIN_NAMES.join(", ")
                ));
            }
            return match role {
                "oracle" | "student" => Ok(Self::Builtin {
                    name: name.to_string(),
                    student: role == "student",
                }),
                _ => Err(format!("builtin role must be oracle or student, got `{role}`")),
            };
        }
        let path = s.strip_prefix("file:").unwrap_or(s);
        if path.is_empty() {
            return Err("empty model source".into());
        }
        Ok(Self::File(PathBuf::from(path)))
    }
}

impl std::fmt::Display for ModelSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Builtin { name, student } => {
                write!(f, "builtin:{name}:{}", if *student { "student" } else { "oracle" })
            }
            Self::File(p) => write!(f, "file:{}", p.display()),
            Self::Bridge(None) => f.write_str("bridge"),
            Self::Bridge(Some(a)) => write!(f, "bridge:{a}"),
            Self::NGram => f.write_str("ngram"),
        }
    }
}

/// Everything `eval` needs. Parsed from a flat `key = value` file; later
/// sources (command-line flags) override earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub oracle: ModelSource,
    pub student: ModelSource,
    pub student_order: usize,
    pub student_lambda: f64,
    pub train_sequences: usize,
    pub specs: Vec<DecoderSpec>,
    pub horizon: usize,
    pub prompts: usize,
    /// Tokens after bos in each prompt; 0 means prompts are just bos.
    pub prompt_len: usize,
    /// Optional ids file to chunk into prompts instead of sampling them.
    pub prompt_file: Option<PathBuf>,
    pub heldout: usize,
    pub bootstrap: usize,
    pub workers: usize,
    pub floor: ProbabilityFloor,
    pub rep_window: usize,
    pub rep_include_prompt: bool,
    pub bridge_timeout_ms: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            oracle: ModelSource::Builtin {
                name: "trap".into(),
                student: false,
            },
            student: ModelSource::Builtin {
                name: "trap".into(),
                student: true,
            },
            student_order: 2,
            student_lambda: 0.1,
            train_sequences: 2000,
            specs: DecoderSpec::default_grid(),
            horizon: 64,
            prompts: 2000,
            prompt_len: 0,
            prompt_file: None,
            heldout: 2000,
            bootstrap: 1000,
            workers: 1,
            floor: ProbabilityFloor::off(),
            rep_window: 128,
            rep_include_prompt: true,
            bridge_timeout_ms: 30_000,
            out: PathBuf::from("out"),
        }
    }
}

pub const CONFIG_KEYS: [&str; 19] = [
    "seed",
    "oracle",
    "student",
    "student_order",
    "student_lambda",
    "train_sequences",
    "specs",
    "horizon",
    "prompts",
    "prompt_len",
    "prompt_file",
    "heldout",
    "bootstrap",
    "workers",
    "floor",
    "rep_window",
    "rep_include_prompt",
    "bridge_timeout_ms",
    "out",
];

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            column: 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::param(format!("expected key=value, found `{s}`")))
}

impl RunConfig {
    /// Applies `pairs` in order over the defaults. Every invalid key or value
    /// is reported, not just the first.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut cfg = Self::default();
        let mut errors = Vec::new();
        for (k, v) in pairs {
            if let Err(e) = cfg.set(k.as_ref(), v.as_ref()) {
                errors.push(e);
            }
        }
        errors.extend(cfg.problems());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = parse_pairs(&text)?;
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(pairs)
    }

    /// Reads the configuration stored in a report's JSON sidecar.
    pub fn from_sidecar(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let map: BTreeMap<String, String> = serde_json::from_value(v["metadata"]["run_config"].clone())?;
        Self::from_pairs(map)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse `{v}`"))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "oracle" => self.oracle = value.parse().map_err(|e| format!("oracle: {e}"))?,
            "student" => self.student = value.parse().map_err(|e| format!("student: {e}"))?,
            "student_order" => self.student_order = num(key, value)?,
            "student_lambda" => self.student_lambda = num(key, value)?,
            "train_sequences" => self.train_sequences = num(key, value)?,
            "specs" => self.specs = DecoderSpec::parse_list(value).map_err(|e| format!("specs: {e}"))?,
            "horizon" => self.horizon = num(key, value)?,
            "prompts" => self.prompts = num(key, value)?,
            "prompt_len" => self.prompt_len = num(key, value)?,
            "prompt_file" => self.prompt_file = (!value.is_empty()).then(|| PathBuf::from(value)),
            "heldout" => self.heldout = num(key, value)?,
            "bootstrap" => self.bootstrap = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "floor" => {
                self.floor = if value == "off" {
                    ProbabilityFloor::off()
                } else {
                    ProbabilityFloor::at(num(key, value)?)
                }
            }
            "rep_window" => self.rep_window = num(key, value)?,
            "rep_include_prompt" => self.rep_include_prompt = num(key, value)?,
            "bridge_timeout_ms" => self.bridge_timeout_ms = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(format!("unknown key `{key}`; valid keys: {}", CONFIG_KEYS.join(", "))),
        }
        Ok(())
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.horizon == 0 {
            p.push("horizon: must be ≥ 1".into());
        }
        if self.prompts == 0 {
            p.push("prompts: must be ≥ 1".into());
        }
        if self.heldout == 0 {
            p.push("heldout: must be ≥ 1".into());
        }
        if self.workers == 0 {
            p.push("workers: must be ≥ 1".into());
        }
        if self.rep_window == 0 {
            p.push("rep_window: must be ≥ 1".into());
        }
        if !(self.student_lambda >= 0.0 && self.student_lambda.is_finite()) {
            p.push(format!("student_lambda: must be ≥ 0, got {}", self.student_lambda));
        }
        if let Some(f) = self.floor.0 {
            if !(f > 0.0 && f < 1.0) {
                p.push(format!("floor: must lie in (0, 1), got {f}"));
            }
        }
        if self.oracle == ModelSource::NGram {
            p.push("oracle: `ngram` is only valid for the student".into());
        }
        if self.student == ModelSource::NGram && self.train_sequences == 0 {
            p.push("train_sequences: must be ≥ 1 to train an n-gram student".into());
        }
        if self.prompt_file.is_some() && self.prompt_len == 0 {
            p.push("prompt_len: must be ≥ 1 when prompt_file is set".into());
        }
        p
    }

    /// Every field as strings; feeding this back through
    /// [`from_pairs`](Self::from_pairs) reproduces the configuration.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let specs: Vec<String> = self.specs.iter().map(ToString::to_string).collect();
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        put("oracle", self.oracle.to_string());
        put("student", self.student.to_string());
        put("student_order", self.student_order.to_string());
        put("student_lambda", self.student_lambda.to_string());
        put("train_sequences", self.train_sequences.to_string());
        put("specs", specs.join(","));
        put("horizon", self.horizon.to_string());
        put("prompts", self.prompts.to_string());
        put("prompt_len", self.prompt_len.to_string());
        put(
            "prompt_file",
            self.prompt_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        put("heldout", self.heldout.to_string());
        put("bootstrap", self.bootstrap.to_string());
        put("workers", self.workers.to_string());
        put("floor", self.floor.0.map_or("off".to_string(), |f| f.to_string()));
        put("rep_window", self.rep_window.to_string());
        put("rep_include_prompt", self.rep_include_prompt.to_string());
        put("bridge_timeout_ms", self.bridge_timeout_ms.to_string());
        put("out", self.out.display().to_string());
        m
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_map() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            seed: self.seed,
            workers: self.workers,
            bootstrap_resamples: self.bootstrap,
            floor: self.floor,
        }
    }
}

/// Seed for a named sub-task of a run.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a64(label.as_bytes()))
}

pub fn load_model(source: &ModelSource, expected: Option<&Vocab>, timeout: Duration) -> Result<Box<dyn LanguageModel>> {
    match source {
        ModelSource::Builtin { name, student } => {
            let (o, s) = builtin(name)?;
            Ok(Box::new(if *student { s } else { o }))
        }
        ModelSource::File(p) => Ok(Box::new(StoredModel::load(p)?)),
        ModelSource::Bridge(addr) => {
            let ep = match addr {
                Some(a) => BridgeEndpoint::new(a.clone()),
                None => BridgeEndpoint::from_env()?,
            };
            Ok(Box::new(BridgeModel::connect(&ep.with_timeout(timeout), expected)?))
        }
        ModelSource::NGram => Err(Error::param("an n-gram model must be trained, not loaded")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Prompts {
    prompts: Vec<Vec<TokenId>>,
    golds: Option<Vec<Vec<TokenId>>>,
}

fn build_prompts(cfg: &RunConfig, oracle: &dyn LanguageModel) -> Result<Prompts> {
    let vocab = oracle.vocab();
    if cfg.prompt_len == 0 {
        return Ok(Prompts {
            prompts: vec![vec![vocab.bos()]; cfg.prompts],
            golds: None,
        });
    }
    let chunk_len = cfg.prompt_len + cfg.horizon;
    let mut set = match &cfg.prompt_file {
        Some(path) => {
            let corpus = read_tokens(path, &TokenizerSpec::new(TokenizerMode::Ids, vocab.clone()))?;
            chunk_and_prompt(&corpus, vocab, chunk_len, cfg.prompt_len)?
        }
        None => {
            let corpus = sample_corpus(oracle, cfg.prompts, chunk_len + 1, derive_seed(cfg.seed, "prompts"))?;
            let mut prompts = Vec::new();
            let mut golds = Vec::new();
            for seq in corpus.sequences() {
                let body: Vec<TokenId> = seq[1..].iter().copied().filter(|&t| t != vocab.eos()).collect();
                if body.len() > cfg.prompt_len {
                    prompts.push(seq[..=cfg.prompt_len].to_vec());
                    golds.push(body[cfg.prompt_len..].to_vec());
                }
            }
            crate::corpus_io::PromptSet {
                prompts,
                golds,
                chunk_len,
                prompt_len: cfg.prompt_len,
            }
        }
    };
    set.truncate(cfg.prompts);
    if set.is_empty() {
        return Err(Error::param(format!(
            "no prompt of {} tokens could be formed",
            cfg.prompt_len
        )));
    }
    Ok(Prompts {
        prompts: set.prompts,
        golds: Some(set.golds),
    })
}

/// One decoder's results within an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecOutcome {
    pub spec: String,
    pub report_csv: PathBuf,
    pub report_json: PathBuf,
    pub pct_ex_acc_err: Option<f64>,
    pub quality: QualityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub oracle_id: String,
    pub model_id: String,
    pub horizon: usize,
    pub outcomes: Vec<SpecOutcome>,
    pub quality_csv: PathBuf,
}

/// Estimates ε on held-out oracle samples, rolls out every decoder, and
/// writes `report_<label>.csv/.json` per decoder plus `quality.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalSummary> {
    let timeout = Duration::from_millis(cfg.bridge_timeout_ms);
    let oracle = load_model(&cfg.oracle, None, timeout)?;
    let oracle: &dyn LanguageModel = oracle.as_ref();
    let student: Box<dyn LanguageModel> = match &cfg.student {
        ModelSource::NGram => {
            let train = sample_corpus(
                oracle,
                cfg.train_sequences,
                cfg.prompt_len + cfg.horizon + 1,
                derive_seed(cfg.seed, "train"),
            )?;
            Box::new(train_ngram(&train, oracle.vocab(), cfg.student_order, cfg.student_lambda)?)
        }
        src => load_model(src, Some(oracle.vocab()), timeout)?,
    };
    let student: &dyn LanguageModel = student.as_ref();
    let opts = cfg.estimator_options();

    let prompts = build_prompts(cfg, oracle)?;
    let heldout = sample_corpus(
        oracle,
        cfg.heldout,
        cfg.prompt_len + cfg.horizon + 1,
        derive_seed(cfg.seed, "heldout"),
    )?;
    let eps = estimate_eps_after(oracle, student, heldout.sequences(), cfg.prompt_len + 1, cfg.horizon, &opts)?;

    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let qopts = QualityOptions {
        window: cfg.rep_window,
        include_prompt: cfg.rep_include_prompt,
        excluded: vec![oracle.vocab().bos(), oracle.vocab().eos()],
    };
    let mut outcomes = Vec::new();
    let mut quality_rows = Vec::new();
    for spec in &cfg.specs {
        let rollouts = run_rollouts(student, oracle, spec, &prompts.prompts, cfg.horizon, &opts)?;
        let curve = RegretCurve::from_rollouts(&rollouts, cfg.bootstrap, cfg.seed)?;
        let meta = ReportMetadata {
            spec: spec.to_string(),
            seed: cfg.seed,
            horizon: cfg.horizon,
            prompts: prompts.prompts.len(),
            heldout_sequences: heldout.len(),
            bootstrap_resamples: cfg.bootstrap,
            oracle_id: oracle.model_id(),
            model_id: student.model_id(),
            run_config: cfg.to_map(),
        };
        let report = ExposureReport::new(&eps, &curve, meta)?;
        let (csv, json) = report.write(&cfg.out, &format!("report_{}", spec.label()))?;
        let completions: Vec<Completion> = rollouts.iter().map(Completion::from).collect();
        let quality = QualityReport::compute(&completions, prompts.golds.as_deref(), &qopts);
        let pct = report.rows.last().and_then(|r| r.pct_ex_acc_err);
        quality_rows.push(QualityRow {
            model: student.model_id(),
            spec: spec.to_string(),
            pct_ex_acc_err: pct,
            quality,
        });
        outcomes.push(SpecOutcome {
            spec: spec.to_string(),
            report_csv: csv,
            report_json: json,
            pct_ex_acc_err: pct,
            quality,
        });
    }
    let quality_path = cfg.out.join("quality.csv");
    fs::write(&quality_path, quality_csv(&quality_rows)).map_err(|e| Error::io(&quality_path, e))?;
    Ok(EvalSummary {
        oracle_id: oracle.model_id(),
        model_id: student.model_id(),
        horizon: cfg.horizon,
        outcomes,
        quality_csv: quality_path,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutputs {
    pub table: PathBuf,
    pub curves: PathBuf,
    pub specs: Vec<String>,
}

pub const TABLE_COLUMNS: [&str; 9] = [
    "spec",
    "l",
    "pct_ex_acc_err",
    "stderr_pct_ex_acc_err",
    "acc_err",
    "seq_rep_4",
    "rep128",
    "wrep128",
    "uniq",
];

pub const CURVE_METRICS: [&str; 6] = ["acc_err", "pct_ex_acc_err", "eps_le_l", "R_le_l", "R_over_l", "H_le_l"];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), fmt_float)
}

/// Merges `quality.csv` and the per-decoder report CSVs in `dir` into
/// `table1.csv` (one row per decoder at the final length) and
/// `curves_long.csv` (`spec,l,metric,value`). Reads only those CSVs.
pub fn cmd_report(dir: &Path) -> Result<ReportOutputs> {
    let qpath = dir.join("quality.csv");
    let qtext = fs::read_to_string(&qpath).map_err(|e| Error::io(&qpath, e))?;
    let in_file = |e: Error| match e {
        Error::Parse { line, column, message } => Error::Parse {
            line,
            column,
            message: format!("{}: {message}", qpath.display()),
        },
        e => e,
    };
    let quality = report::read_records(&qtext, &crate::textqual::QUALITY_COLUMNS).map_err(in_file)?;
    let mut table = Vec::new();
    let mut curves = Vec::new();
    let mut specs = Vec::new();
    for (_, f) in quality {
        let spec: DecoderSpec = f[1].parse()?;
        let rpath = dir.join(format!("report_{}.csv", spec.label()));
        let rtext = fs::read_to_string(&rpath).map_err(|e| Error::io(&rpath, e))?;
        let rows: Vec<ReportRow> = report::parse_csv(&rtext)?;
        let last = rows.last().ok_or_else(|| Error::param(format!("{} has no rows", rpath.display())))?;
        table.push(vec![
            f[1].clone(),
            last.l.to_string(),
            opt(last.pct_ex_acc_err),
            opt(last.stderr_pct_ex_acc_err),
            opt(last.acc_err),
            f[3].clone(),
            f[4].clone(),
            f[5].clone(),
            f[6].clone(),
        ]);
        for r in &rows {
            let vals = [
                opt(r.acc_err),
                opt(r.pct_ex_acc_err),
                fmt_float(r.eps_le_l),
                fmt_float(r.r_le_l),
                fmt_float(r.r_le_l / r.l as f64),
                fmt_float(r.h_le_l),
            ];
            for (m, v) in CURVE_METRICS.iter().zip(vals) {
                curves.push(vec![f[1].clone(), r.l.to_string(), m.to_string(), v]);
            }
        }
        specs.push(f[1].clone());
    }
    let table_path = dir.join("table1.csv");
    let curves_path = dir.join("curves_long.csv");
    let table = report::write_records(&TABLE_COLUMNS, &table);
    let curves = report::write_records(&["spec", "l", "metric", "value"], &curves);
    fs::write(&table_path, table).map_err(|e| Error::io(&table_path, e))?;
    fs::write(&curves_path, curves).map_err(|e| Error::io(&curves_path, e))?;
    Ok(ReportOutputs {
        table: table_path,
        curves: curves_path,
        specs,
    })
}

/// Options for building an oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleRecipe {
    /// A shipped pair; writes the oracle and, if requested, the student.
    Builtin(String),
    /// Random Markov table: each row drawn from a symmetric Dirichlet over
    /// the symbols, then mixed with `eos_prob` of eos.
    Random {
        symbols: usize,
        order: usize,
        concentration: f64,
        eos_prob: f64,
        seed: u64,
    },
}

pub fn random_oracle(symbols: usize, order: usize, concentration: f64, eos_prob: f64, seed: u64) -> Result<MarkovOracle> {
    if symbols == 0 {
        return Err(Error::param("need at least one symbol"));
    }
    if !(eos_prob > 0.0 && eos_prob < 1.0) {
        return Err(Error::param(format!("eos probability must lie in (0, 1), got {eos_prob}")));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|_| Error::param(format!("concentration must be > 0, got {concentration}")))?;
    let names: Vec<String> = (0..symbols).map(|i| format!("s{i}")).collect();
    let vocab = Vocab::with_symbols(&names)?;
    let mut rng = substream(seed, "oracle", 0);
    MarkovOracle::from_fn(vocab, order, |_| {
        let mut w = vec![0.0; symbols + 2];
        let draws: Vec<f64> = (0..symbols).map(|_| gamma.sample(&mut rng).max(1e-300)).collect();
        let total: f64 = draws.iter().sum();
        for (i, d) in draws.iter().enumerate() {
            w[i + 1] = (1.0 - eos_prob) * d / total;
        }
        w[symbols + 1] = eos_prob;
        Dist::from_weights(&w)
    })
}

/// Writes the oracle (and optionally a student and a fixture file).
pub fn cmd_oracle_make(recipe: &OracleRecipe, out: &Path, student_out: Option<&Path>, fixture_out: Option<&Path>) -> Result<String> {
    let (oracle, student) = match recipe {
        OracleRecipe::Builtin(name) => {
            let (o, s) = builtin(name)?;
            (o, Some(s))
        }
        OracleRecipe::Random {
            symbols,
            order,
            concentration,
            eos_prob,
            seed,
        } => (random_oracle(*symbols, *order, *concentration, *eos_prob, *seed)?, None),
    };
    StoredModel::from(oracle.clone()).save(out)?;
    if let Some(p) = student_out {
        let s = student.ok_or_else(|| Error::param("only builtin recipes come with a student"))?;
        StoredModel::from(s).save(p)?;
    }
    if let Some(p) = fixture_out {
        match recipe {
            OracleRecipe::Builtin(name) => reference_fixture(name)?.save(p)?,
            _ => return Err(Error::param("only builtin recipes have reference fixtures")),
        }
    }
    Ok(oracle.model_id())
}

/// Samples `n` sequences of at most `max_len` tokens (bos included) and writes them as ids.
pub fn cmd_corpus_sample(model: &ModelSource, n: usize, max_len: usize, seed: u64, out: &Path) -> Result<usize> {
    let m = load_model(model, None, Duration::from_secs(30))?;
    let corpus = sample_corpus(m.as_ref(), n, max_len, seed)?;
    write_tokens(&corpus, out)?;
    Ok(corpus.token_count())
}

/// Trains an additively smoothed n-gram on an ids file. The vocabulary comes
/// from `vocab_model`.
pub fn cmd_train(corpus: &Path, vocab_model: &ModelSource, order: usize, lambda: f64, out: &Path) -> Result<String> {
    let m = load_model(vocab_model, None, Duration::from_secs(30))?;
    let vocab = m.vocab().clone();
    let data = read_tokens(corpus, &TokenizerSpec::new(TokenizerMode::Ids, vocab.clone()))?;
    let student = train_ngram(&data, &vocab, order, lambda)?;
    let id = student.model_id();
    StoredModel::from(student).save(out)?;
    Ok(id)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub address: String,
    pub handshake: Handshake,
    pub probability_sum: f64,
    pub round_trip_ms: f64,
}

/// Handshakes and asks for the distribution after bos.
pub fn cmd_bridge_probe(endpoint: &BridgeEndpoint) -> Result<ProbeResult> {
    let start = Instant::now();
    let mut client = BridgeClient::connect(endpoint)?;
    let hs = client.handshake().clone();
    let rows = client.remote_next_dists(&[&[hs.bos]])?;
    let sum = rows[0].iter().map(|x| x.exp()).sum();
    Ok(ProbeResult {
        address: endpoint.address.clone(),
        handshake: hs,
        probability_sum: sum,
        round_trip_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Serves `model` over TCP on `listen` until the process exits.
pub fn cmd_bridge_serve_tcp(model: Box<dyn LanguageModel>, listen: &str) -> Result<()> {
    let listener = std::net::TcpListener::bind(listen).map_err(|e| Error::io(listen, e))?;
    eprintln!("serving {} on {}", model.model_id(), listener.local_addr().map_err(|e| Error::io(listen, e))?);
    crate::bridge::serve(listener, Arc::from(model)).map_err(|e| Error::io(listen, e))
}

/// Serves `model` on stdin/stdout until end of input.
pub fn cmd_bridge_serve_stdio(model: &dyn LanguageModel) -> Result<()> {
    let stdin = std::io::stdin();
    crate::bridge::serve_stream(model, stdin.lock(), std::io::stdout().lock()).map_err(|e| Error::io("<stdio>", e))
}
