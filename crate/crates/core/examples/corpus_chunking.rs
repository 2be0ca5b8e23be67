//! Tokenizes raw text, splits it, and cuts prompts with gold continuations.

use regretmeter::corpus_io::{chunk_and_prompt, format_ids, split, TokenizerMode, TokenizerSpec};
use regretmeter::Vocab;

fn main() -> regretmeter::Result<()> {
    let vocab = Vocab::with_symbols(&["the", "cat", "sat", "on", "mat", "a", "dog", "ran"])?;
    let words = TokenizerSpec::new(TokenizerMode::Whitespace, vocab.clone()).with_eos();
    let text = "the cat sat on the mat a dog ran on the mat the dog sat";
    let doc = words.parse(text)?;
    println!("ids: {}", format_ids(&doc).trim_end());

    let set = chunk_and_prompt(&doc, &vocab, 5, 2)?;
    for (p, g) in set.prompts.iter().zip(&set.golds) {
        println!("prompt [{}] -> gold [{}]", words.detokenize(p), words.detokenize(g));
    }

    let lines = TokenizerSpec::new(TokenizerMode::Ids, vocab.clone());
    let corpus = lines.parse("1 2 3\n6 7 9\n1 2 9\n4 5 1 2\n")?;
    let (train, test) = split(&corpus, &vocab, 0.75, 0)?;
    println!("split: {} train, {} test", train.len(), test.len());
    match lines.parse("1 2\n3 x") {
        Err(e) => println!("bad input: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
