//! Exact enumeration on a tiny pair next to the Monte-Carlo estimates.

use regretmeter::decoding::DecoderSpec;
use regretmeter::exact::{exact_eps, exact_regret, EnumBudget};
use regretmeter::fixtures::tiny_pair;
use regretmeter::lm::sample_corpus;
use regretmeter::metrics::{estimate_eps, estimate_regret, EstimatorOptions};

fn main() -> regretmeter::Result<()> {
    let (oracle, student) = tiny_pair();
    let spec = DecoderSpec::Ancestral { temperature: 1.0 };
    let horizon = 5;
    let budget = EnumBudget::default();
    let er = exact_regret(&oracle, &student, &spec, &[0], horizon, &budget)?;
    let ee = exact_eps(&oracle, &student, horizon, &budget)?;

    let opts = EstimatorOptions::with_seed(3);
    let heldout = sample_corpus(&oracle, 2000, horizon + 1, 3)?;
    let me = estimate_eps(&oracle, &student, &heldout, horizon, &opts)?;
    let mr = estimate_regret(&oracle, &student, &spec, &vec![vec![0]; 2000], horizon, &opts)?;

    // the first step has a single context, so its standard error is zero
    let z = |est: f64, truth: f64, se: f64| if se > 0.0 { (est - truth) / se } else { 0.0 };
    println!("{:>2} {:>10} {:>10} {:>6}   {:>10} {:>10} {:>6}", "t", "eps", "MC", "z", "R_<=t", "MC", "z");
    for t in 0..horizon {
        println!(
            "{:>2} {:>10.6} {:>10.6} {:>6.2}   {:>10.6} {:>10.6} {:>6.2}",
            t + 1,
            ee.step[t],
            me.eps_t[t],
            z(me.eps_t[t], ee.step[t], me.stderr_t[t]),
            er.cumulative[t],
            mr.r_le_l[t],
            z(mr.r_le_l[t], er.cumulative[t], mr.stderr_le_l[t])
        );
    }
    println!("probability still active: {:?}", er.active_mass);
    match exact_regret(&oracle, &student, &spec, &[0], 40, &budget) {
        Err(e) => println!("T=40: {e}"),
        Ok(_) => unreachable!("4^40 paths exceed the budget"),
    }
    Ok(())
}
