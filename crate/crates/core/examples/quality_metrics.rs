//! Degeneration metrics on hand-made completions.

use regretmeter::textqual::{rep, seq_rep_4, uniq, wrep, Completion, QualityOptions, QualityReport};

fn main() {
    let opts = QualityOptions::default();
    let looping = Completion::new(vec![7, 8], vec![1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3]);
    let varied = Completion::new(vec![7, 8], vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]);
    let gold = vec![1, 2, 3, 1, 9, 9, 9, 9, 9, 9, 9, 9];

    for (name, c) in [("looping", &looping), ("varied", &varied)] {
        let one = std::slice::from_ref(c);
        println!(
            "{name:<8} seq-rep-4 {:.3}  rep {:.3}  wrep {:.3}  uniq {}",
            seq_rep_4(&c.continuation).unwrap_or(f64::NAN),
            rep(one, &opts),
            wrep(one, std::slice::from_ref(&gold), &opts).unwrap_or(f64::NAN),
            uniq(one, &opts)
        );
    }
    let no_prompt = QualityOptions { include_prompt: false, ..QualityOptions::default() };
    println!("varied, prompt excluded: rep {:.3}", rep(std::slice::from_ref(&varied), &no_prompt));
    let batch = QualityReport::compute(&[looping, varied], None, &opts);
    println!("batch: {batch:?}");
}
