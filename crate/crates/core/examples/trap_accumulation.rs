//! The trap fixture: greedy decoding walks the student into a region the
//! oracle rarely visits, so per-step regret grows with length.

use regretmeter::decoding::DecoderSpec;
use regretmeter::fixtures::trap;
use regretmeter::lm::{sample_corpus, LanguageModel};
use regretmeter::metrics::{estimate_eps, estimate_regret, EstimatorOptions, ExposureReport, ReportMetadata};

fn main() -> regretmeter::Result<()> {
    let (oracle, student) = trap::pair();
    let horizon = 64;
    let opts = EstimatorOptions { workers: 4, ..EstimatorOptions::with_seed(5) };
    let heldout = sample_corpus(&oracle, 2000, horizon + 1, 6)?;
    let eps = estimate_eps(&oracle, &student, &heldout, horizon, &opts)?;
    let prompts = vec![vec![trap::BOS]; 2000];

    for spec in [DecoderSpec::Greedy, DecoderSpec::Ancestral { temperature: 1.2 }] {
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
        println!("{spec}");
        println!("  {:>3} {:>10} {:>12} {:>12}", "l", "AccErr/l", "%ExAccErr", "SE");
        for l in [1, 2, 4, 8, 16, 32, 64] {
            let r = report.row(l).expect("row");
            println!(
                "  {l:>3} {:>10.3} {:>12.2} {:>12.2}",
                r.acc_err.unwrap_or(f64::NAN) / l as f64,
                r.pct_ex_acc_err.unwrap_or(f64::NAN),
                r.stderr_pct_ex_acc_err.unwrap_or(f64::NAN)
            );
        }
        println!("  bound position at 64: {:?}", report.bound.position);
    }
    Ok(())
}
