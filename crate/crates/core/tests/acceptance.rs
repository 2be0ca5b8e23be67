//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regretmeter::decoding::DecoderSpec;
use regretmeter::exact::{exact_eps, exact_regret, EnumBudget};
use regretmeter::fixtures::{self, context_free_kl, Fixture};
use regretmeter::lm::{sample_corpus, train_ngram, LanguageModel, MarkovOracle};
use regretmeter::metrics::{
    acc_err, bound_diagnostic, estimate_eps, estimate_regret, pearson, perplexity_identity_check,
    EstimatorOptions, ExposureReport, ReportMetadata,
};
use regretmeter::textqual::{rep, seq_rep_4, uniq, wrep, Completion, QualityOptions};
use regretmeter::workflow::{cmd_eval, RunConfig};

use common::{cumsum, fixture_path, odometer_step_kl};

/// Standard errors of exactly zero come from zero-variance estimates; a
/// band of three times this value absorbs floating-point noise only.
const SE_FLOOR: f64 = 1e-9;

type Check = std::result::Result<String, String>;

fn within_3se(what: &str, est: f64, truth: f64, se: f64) -> std::result::Result<(), String> {
    let band = 3.0 * se.max(SE_FLOOR);
    if (est - truth).abs() <= band {
        Ok(())
    } else {
        Err(format!("{what}: estimate {est} vs {truth}, |diff| {} > 3 SE = {band}", (est - truth).abs()))
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn opts(seed: u64) -> EstimatorOptions {
    EstimatorOptions {
        workers: 4,
        ..EstimatorOptions::with_seed(seed)
    }
}

fn meta(spec: &DecoderSpec, horizon: usize, o: &dyn LanguageModel, p: &dyn LanguageModel) -> ReportMetadata {
    ReportMetadata {
        spec: spec.to_string(),
        seed: 0,
        horizon,
        prompts: 0,
        heldout_sequences: 0,
        bootstrap_resamples: 1000,
        oracle_id: o.model_id(),
        model_id: p.model_id(),
        run_config: BTreeMap::new(),
    }
}

fn criterion_1() -> Check {
    let pairs: Vec<(&str, MarkovOracle)> = fixtures::BUILTIN_NAMES
        .iter()
        .map(|n| (*n, fixtures::builtin(n).unwrap().0))
        .collect();
    let mut checked = 0;
    for (name, o) in &pairs {
        let heldout = sample_corpus(o, 300, 33, 1).map_err(|e| e.to_string())?;
        let eps = estimate_eps(o, o, &heldout, 32, &opts(1)).map_err(|e| e.to_string())?;
        ensure(eps.eps_t.iter().all(|&e| e == 0.0), || format!("{name}: eps not zero"))?;
        let prompts = vec![vec![o.vocab().bos()]; 300];
        for spec in DecoderSpec::default_grid() {
            let r = estimate_regret(o, o, &spec, &prompts, 32, &opts(1)).map_err(|e| e.to_string())?;
            ensure(r.r_le_l.iter().all(|&x| x.abs() <= 1e-12), || format!("{name} {spec}: regret not zero"))?;
            let len = r.len().min(eps.len());
            for l in 1..=len {
                let b = bound_diagnostic(&eps.eps_t, &r.r_le_l, l);
                ensure(b.lower.abs() <= 1e-12 && b.upper.abs() <= 1e-12, || {
                    format!("{name} {spec}: bounds at {l} are {} / {}", b.lower, b.upper)
                })?;
            }
            ensure(acc_err(&r.r_le_l[..len], &eps.eps_t[..len]).iter().all(Option::is_none), || {
                format!("{name} {spec}: AccErr defined at zero error")
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} fixture/decoder pairs exactly zero"))
}

fn criterion_2() -> Check {
    let (o, p) = fixtures::context_free_pair();
    let c = context_free_kl();
    let horizon = 50;
    let heldout = sample_corpus(&o, 2000, horizon + 1, 2).map_err(|e| e.to_string())?;
    let eps = estimate_eps(&o, &p, &heldout, horizon, &opts(2)).map_err(|e| e.to_string())?;
    let prompts = vec![vec![o.vocab().bos()]; 2000];
    let mut worst = 0.0f64;
    for spec in DecoderSpec::default_grid() {
        let curve = estimate_regret(&o, &p, &spec, &prompts, horizon, &opts(2)).map_err(|e| e.to_string())?;
        let report = ExposureReport::new(&eps, &curve, meta(&spec, horizon, &o, &p)).map_err(|e| e.to_string())?;
        ensure(report.rows.len() == horizon, || format!("{spec}: curve has {} steps", report.rows.len()))?;
        for row in &report.rows {
            let pct = row.pct_ex_acc_err.ok_or(format!("{spec}: %ExAccErr undefined at {}", row.l))?;
            let se = row.stderr_pct_ex_acc_err.unwrap_or(0.0);
            within_3se(&format!("{spec} %ExAccErr at l={}", row.l), pct, 0.0, se)?;
            worst = worst.max(pct.abs());
        }
        let last = report.row(horizon).unwrap();
        within_3se(&format!("{spec} R_50"), last.r_le_l, horizon as f64 * c, last.stderr)?;
    }
    Ok(format!("6 decoders, max |%ExAccErr| = {worst:.3e}, R_50 = 50 × {c:.4}"))
}

fn criterion_3() -> Check {
    let fixture = Fixture::load(fixture_path("tiny")).map_err(|e| e.to_string())?;
    let (o, p) = (fixture.oracle.as_model(), fixture.student.as_model());
    let spec = DecoderSpec::Ancestral { temperature: 1.0 };
    let horizon = 5;
    let budget = EnumBudget::default();
    let bos = o.vocab().bos();

    let exact_r = exact_regret(o, p, &spec, &[bos], horizon, &budget).map_err(|e| e.to_string())?;
    let exact_e = exact_eps(o, p, horizon, &budget).map_err(|e| e.to_string())?;
    let odo_r = cumsum(&odometer_step_kl(o, p, p, &spec, horizon));
    let odo_e = odometer_step_kl(o, p, o, &spec, horizon);
    let frozen_r = fixture.expected("regret_exact").map_err(|e| e.to_string())?;
    let frozen_e = fixture.expected("eps_exact").map_err(|e| e.to_string())?;
    for l in 0..horizon {
        for (name, a, b) in [
            ("regret enum/odometer", exact_r.cumulative[l], odo_r[l]),
            ("regret enum/frozen", exact_r.cumulative[l], frozen_r[l]),
            ("eps enum/odometer", exact_e.step[l], odo_e[l]),
            ("eps enum/frozen", exact_e.step[l], frozen_e[l]),
        ] {
            ensure((a - b).abs() <= 1e-12, || format!("{name} at {}: {a} vs {b}", l + 1))?;
        }
    }

    let heldout = sample_corpus(o, 2000, horizon + 1, 3).map_err(|e| e.to_string())?;
    let eps = estimate_eps(o, p, &heldout, horizon, &opts(3)).map_err(|e| e.to_string())?;
    let prompts = vec![vec![bos]; 2000];
    let r = estimate_regret(o, p, &spec, &prompts, horizon, &opts(3)).map_err(|e| e.to_string())?;
    let mut z_max = 0.0f64;
    for t in 0..horizon {
        within_3se(&format!("eps_{}", t + 1), eps.eps_t[t], exact_e.step[t], eps.stderr_t[t])?;
        within_3se(&format!("R_<={}", t + 1), r.r_le_l[t], exact_r.cumulative[t], r.stderr_le_l[t])?;
        z_max = z_max
            .max((eps.eps_t[t] - exact_e.step[t]).abs() / eps.stderr_t[t])
            .max((r.r_le_l[t] - exact_r.cumulative[t]).abs() / r.stderr_le_l[t]);
    }
    Ok(format!("10 estimates within 3 SE of enumeration, max |z| = {z_max:.2}"))
}

fn criterion_4() -> Check {
    let (o, _) = fixtures::trap::pair();
    let train = sample_corpus(&o, 2000, 65, 40).map_err(|e| e.to_string())?;
    let heldout = sample_corpus(&o, 1800, 65, 41).map_err(|e| e.to_string())?;
    ensure(heldout.token_count() >= 100_000, || format!("held-out has {} tokens", heldout.token_count()))?;
    let mut h = Vec::new();
    let mut e = Vec::new();
    let mut worst_z = 0.0f64;
    for lambda in [0.01, 0.1, 1.0, 10.0, 100.0] {
        let student = train_ngram(&train, o.vocab(), 2, lambda).map_err(|e| e.to_string())?;
        let id = perplexity_identity_check(&o, &student, &heldout, &opts(4)).map_err(|e| e.to_string())?;
        within_3se(&format!("identity residual at lambda={lambda}"), id.residual, 0.0, id.stderr)?;
        worst_z = worst_z.max(id.residual / id.stderr);
        h.push(id.h_model);
        e.push(id.mean_eps);
    }
    let rho = pearson(&h, &e).map_err(|e| e.to_string())?;
    ensure(rho >= 0.99, || format!("pearson(H, mean eps) = {rho} < 0.99"))?;
    Ok(format!(
        "{} held-out tokens, max residual/SE = {worst_z:.2}, pearson = {rho:.6}",
        heldout.token_count()
    ))
}

struct TrapRun {
    greedy: ExposureReport,
    temp: ExposureReport,
}

fn trap_run() -> std::result::Result<TrapRun, String> {
    let fixture = Fixture::load(fixture_path("trap")).map_err(|e| e.to_string())?;
    let (o, p) = (fixture.oracle.as_model(), fixture.student.as_model());
    let horizon = 64;
    let heldout = sample_corpus(o, 2000, horizon + 1, 5).map_err(|e| e.to_string())?;
    let eps = estimate_eps(o, p, &heldout, horizon, &opts(5)).map_err(|e| e.to_string())?;
    let prompts = vec![vec![o.vocab().bos()]; 2000];
    let run = |spec: DecoderSpec| -> std::result::Result<ExposureReport, String> {
        let c = estimate_regret(o, p, &spec, &prompts, horizon, &opts(5)).map_err(|e| e.to_string())?;
        ExposureReport::new(&eps, &c, meta(&spec, horizon, o, p)).map_err(|e| e.to_string())
    };
    let greedy = run(DecoderSpec::Greedy)?;
    let temp = run(DecoderSpec::Ancestral { temperature: 1.2 })?;

    // greedy is deterministic, so its regret must match the committed exact curve
    let frozen = fixture.expected("regret_exact").map_err(|e| e.to_string())?;
    for (row, f) in greedy.rows.iter().zip(frozen) {
        ensure((row.r_le_l - f).abs() <= 1e-9, || format!("greedy R at {} is {} vs exact {f}", row.l, row.r_le_l))?;
    }
    Ok(TrapRun { greedy, temp })
}

fn criterion_5(run: &TrapRun) -> Check {
    let a8 = run.greedy.row(8).and_then(|r| r.acc_err).ok_or("AccErr(8) undefined")? / 8.0;
    let a64 = run.greedy.row(64).and_then(|r| r.acc_err).ok_or("AccErr(64) undefined")? / 64.0;
    ensure(a64 >= 2.0 * a8, || format!("AccErr(64)/64 = {a64} < 2 × AccErr(8)/8 = {}", 2.0 * a8))?;
    Ok(format!("AccErr/l: {a8:.3} at 8, {a64:.3} at 64 (ratio {:.2})", a64 / a8))
}

fn criterion_6(run: &TrapRun) -> Check {
    let g = run.greedy.row(64).ok_or("greedy curve shorter than 64")?;
    let t = run.temp.row(64).ok_or("temp curve shorter than 64")?;
    let (gp, tp) = (
        g.pct_ex_acc_err.ok_or("greedy %ExAccErr undefined")?,
        t.pct_ex_acc_err.ok_or("temp %ExAccErr undefined")?,
    );
    let se = (g.stderr_pct_ex_acc_err.unwrap_or(0.0).powi(2) + t.stderr_pct_ex_acc_err.unwrap_or(0.0).powi(2)).sqrt();
    ensure(gp - tp >= 3.0 * se, || format!("difference {} < 3 × combined SE {se}", gp - tp))?;
    Ok(format!("%ExAccErr(64): greedy {gp:.2}, temp 1.2 {tp:.2}, gap {:.1} SE", (gp - tp) / se))
}

fn criterion_7() -> Check {
    let o = QualityOptions::default();
    let s = seq_rep_4(&[5; 10]).ok_or("seq_rep_4 undefined")?;
    ensure((s - (1.0 - 1.0 / 7.0)).abs() <= 1e-12, || format!("seq_rep_4 = {s}"))?;
    let r = rep(&[Completion::unprompted(vec![1, 2, 1])], &o);
    ensure((r - 1.0 / 3.0).abs() <= 1e-12, || format!("rep_128 = {r}"))?;
    let u = uniq(&[Completion::unprompted(vec![1, 2]), Completion::unprompted(vec![2, 3])], &o);
    ensure(u == 3, || format!("uniq = {u}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for b in 0..100 {
        let n = rng.gen_range(1..6);
        let mut comps = Vec::new();
        let mut golds = Vec::new();
        for _ in 0..n {
            let len = rng.gen_range(1..200);
            let v = rng.gen_range(2..12);
            comps.push(Completion::new(
                (0..rng.gen_range(0..20)).map(|_| rng.gen_range(0..v)).collect(),
                (0..len).map(|_| rng.gen_range(0..v)).collect(),
            ));
            golds.push((0..len).map(|_| rng.gen_range(0..v)).collect());
        }
        let (r, w) = (rep(&comps, &o), wrep(&comps, &golds, &o).ok_or("wrep undefined")?);
        ensure(w <= r, || format!("batch {b}: wrep {w} > rep {r}"))?;
    }
    Ok("unit values exact, wrep ≤ rep on 100 random batches".into())
}

fn criterion_8() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str, workers: usize| -> std::result::Result<BTreeMap<String, Vec<u8>>, String> {
        let out = root.path().join(name);
        let cfg = RunConfig::from_pairs([
            ("seed", "11".to_string()),
            ("horizon", "32".to_string()),
            ("prompts", "500".to_string()),
            ("heldout", "500".to_string()),
            ("prompt_len", "4".to_string()),
            ("workers", workers.to_string()),
            ("out", out.display().to_string()),
        ])
        .map_err(|e| e.to_string())?;
        cmd_eval(&cfg).map_err(|e| e.to_string())?;
        let mut files = BTreeMap::new();
        for entry in fs::read_dir(&out).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.extension().is_some_and(|x| x == "csv") {
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                files.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
        Ok(files)
    };
    let a = run("a", 1)?;
    let b = run("b", 1)?;
    let c = run("c", 8)?;
    ensure(a.len() == 7, || format!("expected 7 CSV files, found {}", a.len()))?;
    ensure(a == b, || "two identical runs differ".into())?;
    ensure(a == c, || "workers 1 and 8 differ".into())?;
    Ok(format!("{} CSV files byte-identical across 3 runs", a.len()))
}

struct Outcome {
    ok: bool,
}

fn report(n: usize, title: &str, limit: Duration, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let res = panic::catch_unwind(panic::AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let elapsed = start.elapsed();
    let (ok, detail) = match res {
        Ok(d) if elapsed <= limit => (true, d),
        Ok(d) => (false, format!("{d}; took {elapsed:.1?}, limit {limit:?}")),
        Err(e) => (false, e),
    };
    println!(
        "criterion {n} {title}: {} ({elapsed:.2?}) {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    Outcome { ok }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let s = Duration::from_secs;
    let mut results = vec![
        report(1, "oracle-identity zeros", s(5), criterion_1),
        report(2, "context-free linearity", s(60), criterion_2),
        report(3, "Monte-Carlo vs enumeration", s(30), criterion_3),
        report(4, "perplexity identity", s(60), criterion_4),
    ];
    let start = Instant::now();
    let trap = trap_run();
    let setup = start.elapsed();
    match trap {
        Ok(run) => {
            results.push(report(5, "super-linear accumulation", s(60) - setup, || criterion_5(&run)));
            results.push(report(6, "decoder ordering", s(60) - setup, || criterion_6(&run)));
        }
        Err(e) => {
            for (n, t) in [(5, "super-linear accumulation"), (6, "decoder ordering")] {
                println!("criterion {n} {t}: FAIL trap setup: {e}");
                results.push(Outcome { ok: false });
            }
        }
    }
    results.push(report(7, "quality-metric unit values", s(5), criterion_7));
    results.push(report(8, "determinism", s(120), criterion_8));
    let failed = results.iter().filter(|r| !r.ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
