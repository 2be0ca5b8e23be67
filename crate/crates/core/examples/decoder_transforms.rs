//! What each decoder does to one next-token distribution, and a few
//! rollouts from the trap student under each.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use regretmeter::decoding::{rollout, transform_dist, DecoderSpec};
use regretmeter::fixtures::trap;
use regretmeter::lm::{LanguageModel, ProbabilityFloor};
use regretmeter::Dist;

fn show(d: &Dist) -> String {
    d.probs().iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(" ")
}

fn main() -> regretmeter::Result<()> {
    let d = Dist::from_probs(&[0.0, 0.5, 0.3, 0.15, 0.05])?;
    println!("{:<16} {}", "input", show(&d));
    let specs = DecoderSpec::parse_list("greedy,temp:t=0.5,temp:t=2,topk:k=2,topp:p=0.8,topp:p=0.8,t=0.7")?;
    for s in &specs {
        println!("{:<16} {}", s.to_string(), show(&transform_dist(&d, s)));
    }

    let (oracle, student) = trap::pair();
    let names = oracle.vocab().tokens().to_vec();
    for spec in DecoderSpec::default_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = rollout(&student, &oracle, &[trap::BOS], &spec, 17, ProbabilityFloor::off(), &mut rng)?;
        let text: Vec<&str> = r.continuation.iter().map(|&t| names[t as usize].as_str()).collect();
        println!("{:<16} {}  (sum KL {:.3})", spec.to_string(), text.join(" "), r.per_step_kl.iter().sum::<f64>());
    }
    Ok(())
}
