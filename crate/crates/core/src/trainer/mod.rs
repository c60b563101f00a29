//! Joint training, checkpoints, evaluation and named variant grids.

mod checkpoint;
mod config;
mod model;
mod optim;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_bank, load_checkpoint, save_checkpoint, CheckpointState};
pub use config::{ArchFlags, ConfigBuilder, ModelConfig, ENV_PREFIX};
pub use model::{clusters_from_predictions, BatchLoss, Model, ProtoEncoder};
pub use optim::{clip_global_norm, warmup_factor, AdamW};

use crate::autograd::{Dropout, Graph};
use crate::corpus::{Corpus, Task};
use crate::error::{Error, Result};
use crate::evalkit::{score, MetricsReport};
use crate::matcher::to_predicted_labels;

/// Child seed for a named consumer of randomness. Every random draw in a
/// run descends from the configured seed through this function.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finaliser
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    /// Mean joint loss over the epoch's steps.
    pub joint_loss: f64,
    pub coreference_loss: f64,
    pub temporal_loss: f64,
    pub causal_loss: f64,
    pub subevent_loss: f64,
    pub valid_overall_f1: f64,
    pub lr_heads: f64,
    /// Wall time; kept out of `log.jsonl` so reruns write identical files.
    #[serde(skip)]
    pub seconds: f64,
}

pub struct TrainOutcome {
    /// Weights of the best epoch.
    pub model: Model,
    pub best_epoch: usize,
    pub best_report: MetricsReport,
    pub log: Vec<EpochLog>,
}

/// Alias of [`Model::new`]: the configured variant wired on `train`.
pub fn apply_variant(config: &ModelConfig, train: &Corpus) -> Result<Model> {
    Model::new(config, train)
}

/// Score a model on `corpus`.
pub fn evaluate_model(model: &Model, corpus: &Corpus) -> Result<MetricsReport> {
    let preds = model.predict_corpus(corpus)?;
    score(corpus, &to_predicted_labels(&preds))
}

/// Load a checkpoint directory and score it on `corpus`.
pub fn evaluate_checkpoint(dir: &Path, corpus: &Corpus) -> Result<MetricsReport> {
    let (model, _) = load_checkpoint(dir)?;
    evaluate_model(&model, corpus)
}

fn write_log(dir: &Path, log: &[EpochLog]) -> Result<()> {
    let mut text = String::new();
    for e in log {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    let path = dir.join("log.jsonl");
    std::fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Train on `train`, select the epoch with the best overall F1 on `valid`
/// (or on `train` when no validation corpus is given). With `out_dir`, the
/// best checkpoint and the per-epoch log are written there as training
/// proceeds.
pub fn train(train: &Corpus, valid: Option<&Corpus>, config: &ModelConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("training corpus has no documents".into()));
    }
    train_model(apply_variant(config, train)?, train, valid, out_dir)
}

/// [`train`] starting from an already built model (e.g. a loaded checkpoint).
pub fn train_model(mut model: Model, train: &Corpus, valid: Option<&Corpus>, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("training corpus has no documents".into()));
    }
    let config = &model.config.clone();
    log::info!(
        "model: {} tensors, {} scalars, prototype encoder {:?}",
        model.store.len(),
        model.store.scalar_count(),
        model.proto_mode
    );
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let valid = valid.unwrap_or(train);
    let mut opt = AdamW::new(config.lr_encoder, config.lr_heads, config.weight_decay, config.warmup_steps);
    let mut log = Vec::new();
    let mut best: Option<(usize, MetricsReport, crate::autograd::ParamStore)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        model.refresh_cache()?;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("shuffle/{epoch}"))));
        let (mut joint_sum, mut task_sums, mut steps) = (0.0, [0.0; 4], 0usize);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let docs: Vec<_> = chunk.iter().map(|&i| &train.documents[i]).collect();
            let mut g = Graph::new();
            let mut drop = Dropout::train(config.dropout, derive_seed(config.seed, &format!("dropout/{epoch}/{step}")));
            let Some(loss) = model.batch_loss(&mut g, &docs, &mut drop)? else { continue };
            let value = g.scalar(loss.joint);
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, step });
            }
            let mut grads = g.backward(loss.joint).into_params();
            clip_global_norm(&mut grads, config.grad_clip);
            opt.update(&mut model.store, &grads);
            joint_sum += value;
            for t in Task::ALL {
                task_sums[t.index()] += g.scalar(loss.tasks[t.index()]);
            }
            steps += 1;
        }
        if steps == 0 {
            return Err(Error::NoPairs);
        }
        model.refresh_cache()?;
        let report = evaluate_model(&model, valid)?;
        let n = steps as f64;
        let entry = EpochLog {
            epoch,
            steps,
            joint_loss: joint_sum / n,
            coreference_loss: task_sums[0] / n,
            temporal_loss: task_sums[1] / n,
            causal_loss: task_sums[2] / n,
            subevent_loss: task_sums[3] / n,
            valid_overall_f1: report.overall,
            lr_heads: opt.lr(crate::autograd::ParamGroup::Heads, opt.step),
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: joint loss {:.4}, validation overall F1 {:.4} ({:.1}s)",
            entry.joint_loss,
            entry.valid_overall_f1,
            entry.seconds
        );
        log.push(entry);
        let improved = best.as_ref().is_none_or(|(_, r, _)| report.overall > r.overall);
        if improved {
            if let Some(dir) = out_dir {
                let state = CheckpointState { epoch, seed: config.seed, optimizer_step: opt.step, best_overall_f1: report.overall };
                save_checkpoint(dir, &model, &state)?;
            }
            best = Some((epoch, report, model.store.clone()));
        }
        if let Some(dir) = out_dir {
            write_log(dir, &log)?;
        }
    }
    let (best_epoch, best_report, store) = best.expect("at least one epoch");
    model.load_weights(store)?;
    Ok(TrainOutcome { model, best_epoch, best_report, log })
}

/// Named groups of configuration overrides for ablation runs.
pub fn ablation_grid(name: &str) -> Result<Vec<(&'static str, Vec<&'static str>)>> {
    Ok(match name {
        "table4" | "components" => vec![
            ("full", vec![]),
            ("-graph", vec!["graph=off"]),
            ("-prototypes", vec!["prototypes=random"]),
            ("-prototypes&graph", vec!["prototypes=random", "graph=off"]),
        ],
        "submodule" | "submodules" => vec![
            ("full", vec![]),
            ("prototypes_event", vec!["prototypes=event"]),
            ("prototypes_context", vec!["prototypes=context"]),
            ("prototypes_random", vec!["prototypes=random"]),
            ("gcn_learned", vec!["graph=learned"]),
            ("gcn_uniform", vec!["graph=uniform"]),
            ("gcn_off", vec!["graph=off"]),
        ],
        "arch" => vec![
            ("default", vec![]),
            ("two_plm", vec!["arch=two_plm"]),
            ("one_plm", vec!["arch=one_plm"]),
            ("coref_ind", vec!["arch=coref_ind"]),
        ],
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown ablation grid {other:?} (expected table4, submodule or arch)"
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{generate, SynthConfig};

    pub(crate) fn tiny_config() -> ModelConfig {
        ConfigBuilder::new()
            .overrides(&[
                "dim=8",
                "encoder_layers=1",
                "buckets=128",
                "examples_k=2",
                "epochs=2",
                "batch_size=2",
                "warmup_steps=2",
                "lr_encoder=1e-3",
                "lr_heads=1e-2",
            ])
            .build()
            .unwrap()
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }

    #[test]
    fn same_seed_same_curve() {
        let corpus = generate(&SynthConfig { documents: 5, ..Default::default() });
        let cfg = tiny_config();
        let a = train(&corpus, None, &cfg, None).unwrap();
        let b = train(&corpus, None, &cfg, None).unwrap();
        let losses = |o: &TrainOutcome| o.log.iter().map(|e| e.joint_loss).collect::<Vec<_>>();
        assert_eq!(losses(&a), losses(&b));
        assert_eq!(a.model.store.get(a.model.instance.layers[0].0), b.model.store.get(b.model.instance.layers[0].0));
    }

    #[test]
    fn graph_off_has_fewer_parameters() {
        let corpus = generate(&SynthConfig { documents: 4, ..Default::default() });
        let on = apply_variant(&tiny_config(), &corpus).unwrap();
        let mut cfg = tiny_config();
        cfg.graph = crate::protobank::GraphMode::Off;
        let off = apply_variant(&cfg, &corpus).unwrap();
        assert!(on.store.scalar_count() > off.store.scalar_count());
    }

    #[test]
    fn every_arch_trains_one_step() {
        let corpus = generate(&SynthConfig { documents: 4, ..Default::default() });
        for arch in ["default", "two_plm", "one_plm", "coref_ind", "two_plm+coref_ind"] {
            let mut cfg = tiny_config();
            cfg.arch = arch.into();
            cfg.epochs = 1;
            let out = train(&corpus, None, &cfg, None).unwrap();
            assert!(out.log[0].joint_loss.is_finite(), "{arch}");
        }
    }

    #[test]
    fn non_finite_loss_is_divergence() {
        let corpus = generate(&SynthConfig { documents: 4, ..Default::default() });
        let mut model = apply_variant(&tiny_config(), &corpus).unwrap();
        let id = model.instance.layers[0].1;
        model.store.get_mut(id)[[0, 0]] = f64::NAN;
        let err = train_model(model, &corpus, None, None).err().expect("diverges");
        assert!(matches!(err, Error::Divergence { epoch: 1, step: 0 }), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn grids() {
        assert_eq!(ablation_grid("table4").unwrap().len(), 4);
        assert!(ablation_grid("nope").is_err());
        let corpus = generate(&SynthConfig { documents: 4, ..Default::default() });
        for name in ["table4", "submodule", "arch"] {
            for (_, sets) in ablation_grid(name).unwrap() {
                let cfg = ConfigBuilder::new().toml_str("base", &tiny_config().to_toml()).overrides(&sets).build().unwrap();
                apply_variant(&cfg, &corpus).unwrap();
            }
        }
    }
}
