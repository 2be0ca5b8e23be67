//! A student whose error does not depend on context accumulates regret
//! linearly under every decoder: `%ExAccErr` stays at zero.

use regretmeter::decoding::DecoderSpec;
use regretmeter::fixtures::{context_free_kl, context_free_pair};
use regretmeter::lm::{sample_corpus, LanguageModel};
use regretmeter::metrics::{estimate_eps, estimate_regret, EstimatorOptions, ExposureReport, ReportMetadata};

fn main() -> regretmeter::Result<()> {
    let (oracle, student) = context_free_pair();
    let horizon = 50;
    let opts = EstimatorOptions { workers: 4, ..EstimatorOptions::with_seed(1) };
    let heldout = sample_corpus(&oracle, 2000, horizon + 1, 2)?;
    let eps = estimate_eps(&oracle, &student, &heldout, horizon, &opts)?;
    let prompts = vec![vec![oracle.vocab().bos()]; 2000];

    println!("per-step KL c = {:.6}", context_free_kl());
    println!("{:<16} {:>10} {:>10} {:>10}", "decoder", "R_50", "50c", "%ExAccErr");
    for spec in DecoderSpec::default_grid() {
        let curve = estimate_regret(&oracle, &student, &spec, &prompts, horizon, &opts)?;
        let meta = ReportMetadata {
            spec: spec.to_string(),
            seed: opts.seed,
            horizon,
            prompts: prompts.len(),
            heldout_sequences: heldout.len(),
            bootstrap_resamples: opts.bootstrap_resamples,
            oracle_id: oracle.model_id(),
            model_id: student.model_id(),
            run_config: Default::default(),
        };
        let report = ExposureReport::new(&eps, &curve, meta)?;
        let last = report.row(horizon).expect("full-length curve");
        println!(
            "{:<16} {:>10.4} {:>10.4} {:>10.4}",
            spec.to_string(),
            last.r_le_l,
            horizon as f64 * context_free_kl(),
            last.pct_ex_acc_err.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
