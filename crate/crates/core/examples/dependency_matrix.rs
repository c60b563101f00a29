//! Label co-occurrence statistics of a corpus and the normalised
//! adjacency the graph convolution uses.
//!
//! cargo run --example dependency_matrix -- [corpus.jsonl]

use protomatch::corpus::synth::{generate, SynthConfig};
use protomatch::corpus::{compute_cooccurrence, load_corpus, normalize_graph, Label, Normalization};

fn main() -> anyhow::Result<()> {
    let corpus = match std::env::args().nth(1) {
        Some(path) => load_corpus(path)?,
        None => generate(&SynthConfig { documents: 30, ..Default::default() }),
    };
    let stats = corpus.stats();
    println!("{stats:?}\n");

    let g = compute_cooccurrence(&corpus)?;
    println!("A_raw: P(column label | row label) over all ordered pairs\n{}", g.render(&g.raw));
    println!("row-normalised, diagonal removed\n{}", g.render(&g.norm));

    let sk = normalize_graph(g.clone(), Normalization::Doubly);
    println!("doubly stochastic (Sinkhorn)\n{}", sk.render(&sk.norm));

    for (a, b) in [(Label::Subevent, Label::Contains), (Label::Precondition, Label::Before), (Label::Cause, Label::Before)] {
        println!("A_raw[{a}][{b}] = {:.3}", g.weight(a, b));
    }
    Ok(())
}
