//! Flat key-value model configuration.
//!
//! Values resolve as defaults, then a TOML file, then `PROTOMATCH_<KEY>`
//! environment variables, then `key=value` overrides. Every problem found
//! is reported in one [`Error::Config`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::Reduction;
use crate::corpus::{Normalization, Selection};
use crate::error::{Error, Result};
use crate::matcher::LossWeights;
use crate::protobank::{GraphMode, PrototypeConfig, PrototypeSource};
use crate::textenc::{EncoderConfig, TINY_RANDOM};

pub const ENV_PREFIX: &str = "PROTOMATCH_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub examples_k: usize,
    pub gcn_layers: usize,
    pub dropout: f64,
    pub lambda_coref: f64,
    pub lambda_temporal: f64,
    pub lambda_causal: f64,
    pub lambda_subevent: f64,
    pub lr_encoder: f64,
    pub lr_heads: f64,
    pub warmup_steps: usize,
    /// Documents per optimisation step.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub graph: GraphMode,
    pub prototypes: PrototypeSource,
    /// `default`, or `+`-joined flags from `two_plm`, `one_plm`, `coref_ind`.
    pub arch: String,
    pub selection: Selection,
    pub normalization: Normalization,
    pub tie_connotation: bool,
    pub fnn_layers: usize,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub loss_reduction: Reduction,
    pub encoder: String,
    pub encoder_layers: usize,
    pub max_window: usize,
    pub buckets: usize,
    pub piece_chars: usize,
    pub mask_token: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 768,
            examples_k: 5,
            gcn_layers: 1,
            dropout: 0.2,
            lambda_coref: 1.0,
            lambda_temporal: 2.0,
            lambda_causal: 4.0,
            lambda_subevent: 4.0,
            lr_encoder: 2e-5,
            lr_heads: 3e-4,
            warmup_steps: 200,
            batch_size: 8,
            epochs: 50,
            seed: 0,
            graph: GraphMode::On,
            prototypes: PrototypeSource::Full,
            arch: "default".into(),
            selection: Selection::Topk,
            normalization: Normalization::Row,
            tie_connotation: true,
            fnn_layers: 2,
            weight_decay: 0.01,
            grad_clip: 1.0,
            loss_reduction: Reduction::Mean,
            encoder: TINY_RANDOM.into(),
            encoder_layers: 2,
            max_window: 512,
            buckets: 4096,
            piece_chars: 6,
            mask_token: "[MASK]".into(),
        }
    }
}

/// Encoder sharing and freezing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ArchFlags {
    /// Prototype side gets its own fine-tuned encoder.
    pub two_plm: bool,
    /// Prototype side reuses the instance encoder.
    pub one_plm: bool,
    /// Coreference gets its own instance stack.
    pub coref_ind: bool,
}

impl ArchFlags {
    pub fn parse(s: &str) -> Result<Self, String> {
        let mut f = ArchFlags::default();
        for tok in s.split(['+', ',']).map(str::trim).filter(|t| !t.is_empty()) {
            match tok.to_ascii_lowercase().replace('-', "_").as_str() {
                "default" => {}
                "two_plm" => f.two_plm = true,
                "one_plm" => f.one_plm = true,
                "coref_ind" => f.coref_ind = true,
                other => return Err(format!("arch: unknown flag {other:?} (expected default, two_plm, one_plm, coref_ind)")),
            }
        }
        if f.one_plm && f.two_plm {
            return Err("arch: one_plm and two_plm contradict each other".into());
        }
        Ok(f)
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut positive = |name: &str, ok: bool| {
            if !ok {
                errs.push(format!("{name} must be positive"));
            }
        };
        positive("dim", self.dim > 0);
        positive("examples_k", self.examples_k > 0);
        positive("batch_size", self.batch_size > 0);
        positive("epochs", self.epochs > 0);
        positive("fnn_layers", self.fnn_layers > 0);
        positive("buckets", self.buckets > 3);
        positive("piece_chars", self.piece_chars > 0);
        for (name, v) in [
            ("lambda_coref", self.lambda_coref),
            ("lambda_temporal", self.lambda_temporal),
            ("lambda_causal", self.lambda_causal),
            ("lambda_subevent", self.lambda_subevent),
            ("lr_encoder", self.lr_encoder),
            ("lr_heads", self.lr_heads),
            ("grad_clip", self.grad_clip),
        ] {
            positive(name, v > 0.0 && v.is_finite());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            errs.push("dropout must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            errs.push("weight_decay must be non-negative".into());
        }
        if self.max_window < 3 {
            errs.push("max_window must be at least 3".into());
        }
        if self.encoder != TINY_RANDOM {
            errs.push(format!("encoder {:?} is not available in this build; only {TINY_RANDOM:?} is bundled", self.encoder));
        }
        if self.mask_token.is_empty() {
            errs.push("mask_token must not be empty".into());
        }
        if let Err(e) = ArchFlags::parse(&self.arch) {
            errs.push(e);
        }
        errs
    }

    pub fn arch_flags(&self) -> ArchFlags {
        ArchFlags::parse(&self.arch).unwrap_or_default()
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            coreference: self.lambda_coref,
            temporal: self.lambda_temporal,
            causal: self.lambda_causal,
            subevent: self.lambda_subevent,
        }
    }

    pub fn encoder_config(&self, seed: u64) -> EncoderConfig {
        EncoderConfig {
            encoder: self.encoder.clone(),
            dim: self.dim,
            max_window: self.max_window,
            layers: self.encoder_layers,
            buckets: self.buckets,
            piece_chars: self.piece_chars,
            mask_token: self.mask_token.clone(),
            seed,
        }
    }

    pub fn prototype_config(&self) -> PrototypeConfig {
        PrototypeConfig {
            dim: self.dim,
            gcn_layers: self.gcn_layers,
            graph: self.graph,
            source: self.prototypes,
            tie_connotation: self.tie_connotation,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Parse an override value: TOML syntax when it parses, a bare string
/// otherwise.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Bring an override to the type of the default it replaces.
fn coerce(default: &toml::Value, v: toml::Value) -> toml::Value {
    use toml::Value as V;
    match (default, v) {
        (V::Float(_), V::Integer(i)) => V::Float(i as f64),
        (V::String(_), V::Integer(i)) => V::String(i.to_string()),
        (V::String(_), V::Float(f)) => V::String(f.to_string()),
        (V::String(_), V::Boolean(b)) => V::String(b.to_string()),
        (_, v) => v,
    }
}

/// Layered configuration builder.
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    table: toml::Table,
    defaults: toml::Table,
    errors: Vec<String>,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        let defaults = toml::Table::try_from(ModelConfig::default()).expect("defaults serialise");
        Self { table: defaults.clone(), defaults, errors: Vec::new() }
    }
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn set_value(&mut self, origin: &str, key: &str, v: toml::Value) {
        match self.defaults.get(key) {
            Some(d) => {
                let v = coerce(d, v);
                self.table.insert(key.to_string(), v);
            }
            None => self.errors.push(format!("{origin}: unknown key {key:?}")),
        }
    }

    /// Layer a TOML document of flat keys.
    pub fn toml_str(mut self, origin: &str, text: &str) -> Self {
        match text.parse::<toml::Table>() {
            Ok(t) => {
                for (k, v) in t {
                    self.set_value(origin, &k, v);
                }
            }
            Err(e) => self.errors.push(format!("{origin}: {e}")),
        }
        self
    }

    pub fn file(self, path: &Path) -> Self {
        match std::fs::read_to_string(path) {
            Ok(text) => self.toml_str(&path.display().to_string(), &text),
            Err(e) => {
                let mut s = self;
                s.errors.push(format!("{}: {e}", path.display()));
                s
            }
        }
    }

    /// Layer `PROTOMATCH_<KEY>` variables from `vars`. Variables naming no
    /// config key are ignored.
    pub fn env<I: IntoIterator<Item = (String, String)>>(mut self, vars: I) -> Self {
        for (k, v) in vars {
            let Some(key) = k.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            if self.defaults.contains_key(&key) {
                self.set_value(&k, &key, parse_value(&v));
            } else {
                log::debug!("ignoring environment variable {k}");
            }
        }
        self
    }

    /// Layer `key=value` overrides.
    pub fn overrides<S: AsRef<str>>(mut self, sets: &[S]) -> Self {
        for s in sets {
            let s = s.as_ref();
            match s.split_once('=') {
                Some((k, v)) => self.set_value("--set", k.trim(), parse_value(v.trim())),
                None => self.errors.push(format!("--set: expected key=value, got {s:?}")),
            }
        }
        self
    }

    pub fn build(self) -> Result<ModelConfig> {
        let mut errors = self.errors;
        let mut table = self.table;
        if ModelConfig::deserialize(toml::Value::Table(table.clone())).is_err() {
            // one key at a time to name every bad value, then fall back to
            // the default for those keys so the rest still gets validated
            let mut bad = Vec::new();
            for (k, v) in &table {
                let mut t = self.defaults.clone();
                t.insert(k.clone(), v.clone());
                if let Err(e) = ModelConfig::deserialize(toml::Value::Table(t)) {
                    errors.push(format!("{k}: {}", e.to_string().trim()));
                    bad.push(k.clone());
                }
            }
            for k in bad {
                table.insert(k.clone(), self.defaults[&k].clone());
            }
        }
        match ModelConfig::deserialize(toml::Value::Table(table)) {
            Ok(c) => {
                errors.extend(c.validate());
                if errors.is_empty() {
                    Ok(c)
                } else {
                    Err(Error::Config(errors))
                }
            }
            Err(e) => {
                errors.push(e.to_string());
                Err(Error::Config(errors))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_validate() {
        let c = ConfigBuilder::new().build().unwrap();
        assert_eq!(c, ModelConfig::default());
        assert_eq!((c.examples_k, c.gcn_layers, c.dim), (5, 1, 768));
        assert_eq!(c.weights(), LossWeights::default());
    }

    #[test]
    fn precedence_defaults_file_env_flags() {
        let file = "dim = 16\nepochs = 7\nbatch_size = 2\ngraph = \"uniform\"\n";
        let c = ConfigBuilder::new()
            .toml_str("file", file)
            .env(env(&[("PROTOMATCH_EPOCHS", "9"), ("PROTOMATCH_BATCH_SIZE", "3"), ("OTHER", "x")]))
            .overrides(&["batch_size=4", "graph=off", "lr_heads=1"])
            .build()
            .unwrap();
        assert_eq!(c.dim, 16);
        assert_eq!(c.epochs, 9);
        assert_eq!(c.batch_size, 4);
        assert_eq!(c.graph, GraphMode::Off);
        assert_eq!(c.lr_heads, 1.0);
    }

    #[test]
    fn all_errors_listed_together() {
        let err = ConfigBuilder::new()
            .overrides(&["dim=0", "graph=sideways", "nonsense=1", "dropout=1.5", "arch=one_plm+two_plm"])
            .build()
            .unwrap_err();
        let Error::Config(list) = err else { panic!("not a config error") };
        let text = list.join("\n");
        for needle in ["graph", "nonsense", "dim", "dropout", "contradict"] {
            assert!(text.contains(needle), "{needle} missing from {text}");
        }
    }

    #[test]
    fn arch_flags() {
        assert_eq!(ArchFlags::parse("default").unwrap(), ArchFlags::default());
        let f = ArchFlags::parse("two_plm+coref_ind").unwrap();
        assert!(f.two_plm && f.coref_ind && !f.one_plm);
        assert!(ArchFlags::parse("one_plm,two_plm").is_err());
        assert!(ArchFlags::parse("three_plm").is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let c = ConfigBuilder::new().overrides(&["seed=42", "prototypes=random"]).build().unwrap();
        let back = ConfigBuilder::new().toml_str("snap", &c.to_toml()).build().unwrap();
        assert_eq!(c, back);
    }
}
