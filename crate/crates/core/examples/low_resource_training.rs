//! Train on a 15-document synthetic corpus with the tiny encoder and print
//! the per-epoch log and final scores.
//!
//! cargo run --release --example low_resource_training -- [epochs] [key=value ...]

use protomatch::corpus::synth::{generate, SynthConfig};
use protomatch::evalkit::{score, PredictedLabels};
use protomatch::trainer::{train, ConfigBuilder};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = if args.first().is_some_and(|a| !a.contains('=')) { args.remove(0) } else { "3".into() };
    let corpus = generate(&SynthConfig::default());
    let mut sets = vec![
        "dim=32".to_string(),
        "encoder_layers=1".into(),
        "buckets=512".into(),
        "batch_size=1".into(),
        "warmup_steps=0".into(),
        "dropout=0".into(),
        "lr_encoder=1e-3".into(),
        "lr_heads=1e-2".into(),
        format!("epochs={epochs}"),
    ];
    sets.extend(args);
    let config = ConfigBuilder::new().overrides(&sets).build()?;
    let out = train(&corpus, None, &config, None)?;
    for e in &out.log {
        println!("epoch {:>2}  loss {:.4}  overall F1 {:.4}", e.epoch, e.joint_loss, e.valid_overall_f1);
    }
    let baseline = score(&corpus, &PredictedLabels::new())?;
    println!("\nall-None baseline overall F1 {:.4}", baseline.overall);
    println!("best epoch {}\n{}", out.best_epoch, out.best_report.render_table());
    Ok(())
}
