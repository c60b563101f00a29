//! Train every variant of a named grid on a small synthetic corpus.
//!
//! cargo run --release --example ablation_grid -- [table4|submodule|arch] [epochs]

use protomatch::corpus::synth::{generate, SynthConfig};
use protomatch::trainer::{ablation_grid, train, ConfigBuilder};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let grid = args.next().unwrap_or_else(|| "table4".into());
    let epochs = args.next().unwrap_or_else(|| "3".into());
    let corpus = generate(&SynthConfig::default());
    let base = [
        "dim=32",
        "encoder_layers=1",
        "buckets=512",
        "batch_size=1",
        "warmup_steps=0",
        "dropout=0",
        "lr_encoder=1e-3",
        "lr_heads=1e-2",
    ];
    println!("{:<20} {:>10} {:>10} {:>10}", "variant", "scalars", "loss", "overall");
    for (name, sets) in ablation_grid(&grid)? {
        let mut all: Vec<String> = base.iter().map(|s| s.to_string()).collect();
        all.push(format!("epochs={epochs}"));
        all.extend(sets.iter().map(|s| s.to_string()));
        let config = ConfigBuilder::new().overrides(&all).build()?;
        let out = train(&corpus, None, &config, None)?;
        let last = out.log.last().expect("one epoch");
        println!("{name:<20} {:>10} {:>10.4} {:>10.4}", out.model.store.scalar_count(), last.joint_loss, out.best_report.overall);
    }
    Ok(())
}
