//! Checkpoint directory: `config.toml`, `weights.json`, `graph.json`,
//! `examples.json`, `bank.json` and `state.json`.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::config::ConfigBuilder;
use super::model::Model;
use crate::autograd::ParamStore;
use crate::corpus::{DependencyGraph, Example, Label};
use crate::error::{Error, Result};
use crate::protobank::PrototypeBank;

/// Where training stood when the checkpoint was written. Dropout masks and
/// shuffles are derived from `seed`, epoch and step, so this is the whole
/// random state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointState {
    pub epoch: usize,
    pub seed: u64,
    pub optimizer_step: usize,
    pub best_overall_f1: f64,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let text = serde_json::to_string(value)?;
    std::fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn save_checkpoint(dir: &Path, model: &Model, state: &CheckpointState) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, model.config.to_toml()).map_err(|e| Error::io(format!("writing {}", cfg_path.display()), e))?;
    write_json(dir, "weights.json", &model.store)?;
    write_json(dir, "graph.json", &model.graph)?;
    let examples: Vec<(&Label, &Vec<Example>)> = model.examples.iter().collect();
    write_json(dir, "examples.json", &examples)?;
    write_json(dir, "bank.json", &model.bank()?)?;
    write_json(dir, "state.json", state)
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointState)> {
    if !dir.join("weights.json").exists() {
        return Err(Error::io(
            format!("loading checkpoint {}", dir.display()),
            std::io::Error::new(std::io::ErrorKind::NotFound, "weights.json not found"),
        ));
    }
    let config = ConfigBuilder::new().file(&dir.join("config.toml")).build()?;
    let graph: DependencyGraph = read_json(dir, "graph.json")?;
    let examples: Vec<(Label, Vec<Example>)> = read_json(dir, "examples.json")?;
    let store: ParamStore = read_json(dir, "weights.json")?;
    let state: CheckpointState = read_json(dir, "state.json")?;
    let mut model = Model::from_parts(&config, graph, examples.into_iter().collect())?;
    model.load_weights(store)?;
    Ok((model, state))
}

/// The bank stored alongside the weights.
pub fn load_bank(dir: &Path) -> Result<PrototypeBank> {
    read_json(dir, "bank.json")
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny_config;
    use super::*;
    use crate::corpus::synth::{generate, SynthConfig};

    #[test]
    fn round_trip_reproduces_predictions_exactly() {
        let corpus = generate(&SynthConfig { documents: 4, ..Default::default() });
        let out = super::super::train(&corpus, None, &tiny_config(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let state = CheckpointState { epoch: 2, seed: 0, optimizer_step: 4, best_overall_f1: out.best_report.overall };
        save_checkpoint(dir.path(), &out.model, &state).unwrap();
        let (back, st) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(st, state);
        assert_eq!(back.bank().unwrap(), out.model.bank().unwrap());
        assert_eq!(load_bank(dir.path()).unwrap(), out.model.bank().unwrap());
        assert_eq!(back.predict_corpus(&corpus).unwrap(), out.model.predict_corpus(&corpus).unwrap());
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_checkpoint(&dir.path().join("nothing")).is_err());
    }
}
