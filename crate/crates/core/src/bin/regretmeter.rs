use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use regretmeter::bridge::BridgeEndpoint;
use regretmeter::workflow::{self, parse_assignment, ModelSource, OracleRecipe, RunConfig};
use regretmeter::Result;

#[derive(Parser)]
#[command(name = "regretmeter", version, about = "Exposure bias measured as imitation-learning regret")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build oracles
    Oracle {
        #[command(subcommand)]
        action: OracleCmd,
    },
    /// Sample corpora from a model
    Corpus {
        #[command(subcommand)]
        action: CorpusCmd,
    },
    /// Train an additively smoothed n-gram student on an ids file
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Model whose vocabulary the corpus uses
        #[arg(long)]
        vocab_from: String,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate per-step error and regret for every decoder and write reports
    Eval(EvalArgs),
    /// Merge eval outputs into table1.csv and curves_long.csv
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Talk to a next-token log-probability server
    Bridge {
        #[command(subcommand)]
        action: BridgeCmd,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    Make {
        /// Shipped pair: context-free, tiny or trap
        #[arg(long, conflicts_with = "symbols")]
        builtin: Option<String>,
        #[arg(long, default_value_t = 4)]
        symbols: usize,
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long, default_value_t = 0.5)]
        concentration: f64,
        #[arg(long, default_value_t = 0.02)]
        eos_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        student_out: Option<PathBuf>,
        /// Also write the reference fixture with expected curves
        #[arg(long)]
        fixture_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    Sample {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Maximum sequence length, bos included
        #[arg(long, default_value_t = 65)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rebuild the configuration from a report's JSON sidecar
    #[arg(long, conflicts_with = "config")]
    replay: Option<PathBuf>,
    /// Override any configuration key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    specs: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BridgeCmd {
    /// Handshake and one query
    Probe {
        /// host:port or stdio:<command>; defaults to REGRETMETER_BRIDGE_ADDR
        #[arg(long)]
        addr: Option<String>,
        #[arg(long, default_value_t = 5000)]
        timeout_ms: u64,
    },
    /// Serve a local model over the bridge protocol
    Serve {
        #[arg(long)]
        model: String,
        #[arg(long, conflicts_with = "stdio")]
        listen: Option<String>,
        #[arg(long)]
        stdio: bool,
    },
}

fn model_source(s: &str) -> Result<ModelSource> {
    s.parse().map_err(regretmeter::Error::InvalidParameter)
}

fn eval_config(a: EvalArgs) -> Result<RunConfig> {
    let mut overrides = Vec::new();
    for s in &a.set {
        overrides.push(parse_assignment(s)?);
    }
    let named = [
        ("specs", a.specs),
        ("seed", a.seed.map(|x| x.to_string())),
        ("workers", a.workers.map(|x| x.to_string())),
        ("horizon", a.horizon.map(|x| x.to_string())),
        ("out", a.out.map(|p| p.display().to_string())),
    ];
    overrides.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    match (a.config, a.replay) {
        (Some(path), _) => RunConfig::load(path, &overrides),
        (None, Some(sidecar)) => {
            let mut pairs: Vec<(String, String)> = RunConfig::from_sidecar(sidecar)?.to_map().into_iter().collect();
            pairs.extend(overrides);
            RunConfig::from_pairs(pairs)
        }
        (None, None) => RunConfig::from_pairs(overrides),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Oracle {
            action:
                OracleCmd::Make {
                    builtin,
                    symbols,
                    order,
                    concentration,
                    eos_prob,
                    seed,
                    out,
                    student_out,
                    fixture_out,
                },
        } => {
            let recipe = match builtin {
                Some(name) => OracleRecipe::Builtin(name),
                None => OracleRecipe::Random {
                    symbols,
                    order,
                    concentration,
                    eos_prob,
                    seed,
                },
            };
            let id = workflow::cmd_oracle_make(&recipe, &out, student_out.as_deref(), fixture_out.as_deref())?;
            println!("{id} -> {}", out.display());
        }
        Command::Corpus {
            action: CorpusCmd::Sample {
                model,
                n,
                max_len,
                seed,
                out,
            },
        } => {
            let tokens = workflow::cmd_corpus_sample(&model_source(&model)?, n, max_len, seed, &out)?;
            println!("{n} sequences, {tokens} tokens -> {}", out.display());
        }
        Command::Train {
            corpus,
            vocab_from,
            order,
            lambda,
            out,
        } => {
            let id = workflow::cmd_train(&corpus, &model_source(&vocab_from)?, order, lambda, &out)?;
            println!("{id} -> {}", out.display());
        }
        Command::Eval(args) => {
            let cfg = eval_config(args)?;
            let summary = workflow::cmd_eval(&cfg)?;
            println!("oracle {}  model {}  T={}", summary.oracle_id, summary.model_id, summary.horizon);
            for o in &summary.outcomes {
                let pct = o.pct_ex_acc_err.map_or("NA".to_string(), |p| format!("{p:.2}"));
                println!("{:<16} %ExAccErr={pct:<10} {}", o.spec, o.report_csv.display());
            }
            println!("quality -> {}", summary.quality_csv.display());
        }
        Command::Report { dir } => {
            let out = workflow::cmd_report(&dir)?;
            println!("{} decoders -> {}, {}", out.specs.len(), out.table.display(), out.curves.display());
        }
        Command::Bridge {
            action: BridgeCmd::Probe { addr, timeout_ms },
        } => {
            let ep = match addr {
                Some(a) => BridgeEndpoint::new(a),
                None => BridgeEndpoint::from_env()?,
            }
            .with_timeout(Duration::from_millis(timeout_ms));
            let r = workflow::cmd_bridge_probe(&ep)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Bridge {
            action: BridgeCmd::Serve { model, listen, stdio },
        } => {
            let m = workflow::load_model(&model_source(&model)?, None, Duration::from_secs(30))?;
            if stdio {
                workflow::cmd_bridge_serve_stdio(m.as_ref())?;
            } else {
                workflow::cmd_bridge_serve_tcp(m, listen.as_deref().unwrap_or("127.0.0.1:7878"))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
