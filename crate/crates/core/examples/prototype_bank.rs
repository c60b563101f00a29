//! Build the fourteen label prototypes from selected examples, before and
//! after graph refinement, and show how far apart they sit.
//!
//! cargo run --release --example prototype_bank

use protomatch::corpus::synth::{generate, SynthConfig};
use protomatch::corpus::Label;
use protomatch::protobank::NONE_TEXT;
use protomatch::trainer::{ConfigBuilder, Model};

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SynthConfig::default());
    let config = ConfigBuilder::new().overrides(&["dim=32", "encoder_layers=1", "buckets=512", "examples_k=3"]).build()?;
    let model = Model::new(&config, &corpus)?;

    for (label, examples) in &model.examples {
        let ex = &examples[0];
        let text = |s: (usize, usize)| ex.text[s.0..s.1].join(" ");
        println!("{label:<14} {} examples, e.g. [{}] -> [{}]", examples.len(), text(ex.span_e1), text(ex.span_e2));
    }
    println!("None labels use the text {NONE_TEXT:?}\n");

    let bank = model.bank()?;
    println!("{:<16} {:>8} {:>8} {:>10}", "label", "|h|", "|h~|", "|h~ - h|");
    for l in Label::ALL {
        let (h, t) = (bank.h_p.row(l.node()), bank.h_p_tilde.row(l.node()));
        let d = &t - &h;
        println!("{:<16} {:>8.3} {:>8.3} {:>10.3}", l.display_name(), h.dot(&h).sqrt(), t.dot(&t).sqrt(), d.dot(&d).sqrt());
    }

    let dist = |a: Label, b: Label| {
        let d = &bank.row(a) - &bank.row(b);
        d.dot(&d).sqrt()
    };
    println!("\ndistance Before-Overlap {:.3}, Cause-Precondition {:.3}", dist(Label::Before, Label::Overlap), dist(Label::Cause, Label::Precondition));
    Ok(())
}
