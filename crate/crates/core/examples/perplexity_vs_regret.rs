//! Held-out entropy rate tracks mean per-step error exactly, up to a
//! constant, across students trained with different smoothing.

use regretmeter::fixtures::trap;
use regretmeter::lm::{sample_corpus, train_ngram, LanguageModel};
use regretmeter::metrics::{pearson, perplexity_identity_check, EstimatorOptions};

fn main() -> regretmeter::Result<()> {
    let (oracle, _) = trap::pair();
    let train = sample_corpus(&oracle, 2000, 65, 40)?;
    let heldout = sample_corpus(&oracle, 1800, 65, 41)?;
    let opts = EstimatorOptions::with_seed(4);
    let (mut h, mut e) = (Vec::new(), Vec::new());
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "lambda", "H_model", "mean eps", "residual", "SE");
    for lambda in [0.01, 0.1, 1.0, 10.0, 100.0] {
        let student = train_ngram(&train, oracle.vocab(), 2, lambda)?;
        let id = perplexity_identity_check(&oracle, &student, &heldout, &opts)?;
        println!(
            "{lambda:>8} {:>10.5} {:>10.5} {:>10.2e} {:>10.2e}",
            id.h_model, id.mean_eps, id.residual, id.stderr
        );
        h.push(id.h_model);
        e.push(id.mean_eps);
    }
    println!("oracle entropy rate {:.5}", perplexity_identity_check(&oracle, &oracle, &heldout, &opts)?.h_oracle);
    println!("pearson(H, mean eps) = {:.6}", pearson(&h, &e)?);
    Ok(())
}
