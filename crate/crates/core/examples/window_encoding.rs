//! Encode a long document in sentence-packed windows and pool event spans.
//!
//! cargo run --example window_encoding -- [max_window]

use protomatch::autograd::ParamStore;
use protomatch::textenc::{mask_events, pool_event, EncoderConfig, TextEncoder};

fn main() -> anyhow::Result<()> {
    let max_window: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(24);
    let mut store = ParamStore::new();
    let enc = TextEncoder::build(&EncoderConfig { dim: 16, layers: 1, buckets: 256, max_window, ..Default::default() }, &mut store, "enc")?;

    let sentences: Vec<Vec<String>> = (0..6)
        .map(|i| format!("in week {i} the negotiations continued while protesters gathered outside the ministry").split(' ').map(String::from).collect())
        .collect();
    let plan = enc.split_windows(&sentences);
    println!("{} sentences, {} windows of at most {max_window} pieces", sentences.len(), plan.len());
    for (i, w) in plan.windows.iter().enumerate() {
        let segs: Vec<String> = w.segments.iter().map(|s| format!("s{}[{}..{})", s.sent, s.word_start, s.word_end)).collect();
        println!("  window {i}: {} pieces  {}", w.pieces, segs.join(" "));
    }

    let tokens = enc.encode_values(&store, &sentences)?;
    println!("token vectors: {:?}", tokens.dim());
    let width = sentences[0].len();
    // "negotiations" in sentence 0 and "gathered" in sentence 5
    let (e1, e2) = ((4, 5), (5 * width + 8, 5 * width + 9));
    let (h1, h2) = (pool_event(&tokens, e1)?, pool_event(&tokens, e2)?);
    println!("pooled |h1| {:.3}, |h2| {:.3}", h1.iter().map(|v| v * v).sum::<f64>().sqrt(), h2.iter().map(|v| v * v).sum::<f64>().sqrt());

    let masked = mask_events(&sentences[0], [(4, 5), (8, 9)], enc.mask_token())?;
    println!("masked context: {}", masked.join(" "));
    Ok(())
}
