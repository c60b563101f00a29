//! Train briefly, save a checkpoint, reload it and write pair predictions
//! and coreference clusters for one document.
//!
//! cargo run --release --example predict_and_cluster

use protomatch::corpus::synth::{generate, SynthConfig};
use protomatch::corpus::{Corpus, Label};
use protomatch::matcher::to_predicted_labels;
use protomatch::trainer::{clusters_from_predictions, load_checkpoint, train, ConfigBuilder};

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SynthConfig::default());
    let config = ConfigBuilder::new()
        .overrides(&["dim=32", "encoder_layers=1", "buckets=512", "batch_size=1", "warmup_steps=0", "dropout=0", "lr_encoder=1e-3", "lr_heads=1e-2", "epochs=3"])
        .build()?;
    let dir = tempfile::tempdir()?;
    train(&corpus, None, &config, Some(dir.path()))?;
    let (model, state) = load_checkpoint(dir.path())?;
    println!("checkpoint from epoch {} (overall F1 {:.4})", state.epoch, state.best_overall_f1);

    // the first document with a predicted relation
    let mut picked = None;
    for d in &corpus.documents {
        let doc = Corpus::new(vec![d.clone()])?;
        let preds = model.predict_corpus(&doc)?;
        if preds.iter().any(|p| !p.label.is_none() && p.label != Label::Coref) {
            picked = Some((doc, preds));
            break;
        }
    }
    let Some((doc, preds)) = picked else {
        println!("no relations predicted");
        return Ok(());
    };
    println!("document {}: {}", doc.documents[0].doc_id, doc.documents[0].sentences.iter().map(|s| s.join(" ")).collect::<Vec<_>>().join(" "));
    for p in preds.iter().filter(|p| !p.label.is_none() && p.label != Label::Coref) {
        println!("{} -> {}  {:<13} p={:.3}", p.src, p.dst, p.label.display_name(), p.probability);
    }
    let clusters = clusters_from_predictions(&doc, &to_predicted_labels(&preds))?;
    println!("predicted clusters {:?}", clusters[0].clusters);
    println!("gold clusters      {:?}", doc.documents[0].gold_clusters());
    Ok(())
}
