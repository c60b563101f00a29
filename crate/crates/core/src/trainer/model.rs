//! The assembled model: encoders, prototype side, instance side and the
//! matching head, wired according to the configured variant.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::derive_seed;
use crate::autograd::{neg_dist, softmax_rows, Dropout, Graph, ParamStore, Var};
use crate::corpus::{compute_cooccurrence, normalize_graph, Corpus, DependencyGraph, Document, Example, Label, Pair, Task};
use crate::error::{Error, Result};
use crate::evalkit::{cluster_from_pairs, PredictedLabels};
use crate::instenc::{encode_mentions, gather_pairs, InstanceParams};
use crate::matcher::{predict, task_nodes, task_scores, ClusterRecord, PredictionRecord, LOG_EPS};
use crate::protobank::{cache_examples, encode_examples, select_all_examples, ExampleCache, PrototypeBank, PrototypeModel};
use crate::textenc::TextEncoder;

/// Which encoder the prototype side reads examples with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtoEncoder {
    /// A separate copy that never receives gradient.
    Frozen,
    /// A separate copy that is fine-tuned.
    Separate,
    /// The instance encoder itself.
    Shared,
}

/// Forward outputs of one batch.
pub struct BatchLoss {
    pub joint: Var,
    /// Per task in [`Task::ALL`] order.
    pub tasks: [Var; 4],
    pub pairs: usize,
}

pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub graph: DependencyGraph,
    pub encoder: TextEncoder,
    proto_encoder: Option<TextEncoder>,
    pub proto_mode: ProtoEncoder,
    pub prototypes: PrototypeModel,
    pub instance: InstanceParams,
    pub coref_instance: Option<InstanceParams>,
    pub examples: BTreeMap<Label, Vec<Example>>,
    cache: Option<ExampleCache>,
}

impl Model {
    /// Dependency graph and examples from `train`, then fresh weights.
    pub fn new(config: &ModelConfig, train: &Corpus) -> Result<Self> {
        let graph = normalize_graph(compute_cooccurrence(train)?, config.normalization);
        let examples = if config.prototypes == crate::protobank::PrototypeSource::Random {
            BTreeMap::new()
        } else {
            select_all_examples(train, config.examples_k, config.selection, derive_seed(config.seed, "examples"))?
        };
        Self::from_parts(config, graph, examples)
    }

    /// Deterministic construction from already computed corpus statistics.
    pub fn from_parts(config: &ModelConfig, graph: DependencyGraph, examples: BTreeMap<Label, Vec<Example>>) -> Result<Self> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let arch = config.arch_flags();
        let mut store = ParamStore::new();
        let enc_cfg = config.encoder_config(derive_seed(config.seed, "encoder"));
        let encoder = TextEncoder::build(&enc_cfg, &mut store, "encoder")?;
        let proto_mode = if arch.one_plm {
            ProtoEncoder::Shared
        } else if arch.two_plm {
            ProtoEncoder::Separate
        } else {
            ProtoEncoder::Frozen
        };
        let proto_encoder = match proto_mode {
            ProtoEncoder::Shared => None,
            // same initial weights as the instance encoder
            _ => Some(TextEncoder::build(&enc_cfg, &mut store, "proto_encoder")?),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "heads"));
        let prototypes = PrototypeModel::new(&mut store, "proto", &config.prototype_config(), &graph, &mut rng);
        let instance = InstanceParams::new(&mut store, "instance", config.dim, config.fnn_layers, &mut rng);
        let coref_instance = arch
            .coref_ind
            .then(|| InstanceParams::new(&mut store, "coref_instance", config.dim, config.fnn_layers, &mut rng));
        Ok(Self {
            config: config.clone(),
            store,
            graph,
            encoder,
            proto_encoder,
            proto_mode,
            prototypes,
            instance,
            coref_instance,
            examples,
            cache: None,
        })
    }

    pub fn proto_encoder(&self) -> &TextEncoder {
        self.proto_encoder.as_ref().unwrap_or(&self.encoder)
    }

    /// Re-encode the examples with the frozen prototype encoder. No-op for
    /// the other wirings, which encode examples inside every step.
    pub fn refresh_cache(&mut self) -> Result<()> {
        if self.proto_mode == ProtoEncoder::Frozen && self.prototypes.needs_examples() {
            self.cache = Some(cache_examples(&self.store, self.proto_encoder(), &self.examples)?);
        }
        Ok(())
    }

    /// Replace all weights (e.g. from a checkpoint); names and shapes must match.
    pub fn load_weights(&mut self, store: ParamStore) -> Result<()> {
        if store.len() != self.store.len() {
            return Err(Error::Schema(format!("checkpoint has {} tensors, model has {}", store.len(), self.store.len())));
        }
        for id in self.store.ids() {
            let (a, b) = (self.store.entry(id), store.entry(id));
            if a.name != b.name || a.value.dim() != b.value.dim() {
                return Err(Error::Schema(format!(
                    "tensor {} {:?} does not match checkpoint tensor {} {:?}",
                    a.name,
                    a.value.dim(),
                    b.name,
                    b.value.dim()
                )));
            }
        }
        self.store = store;
        self.cache = None;
        self.refresh_cache()
    }

    fn prototype_vars(&self, g: &mut Graph, drop: &mut Dropout) -> Result<(Var, Var)> {
        if !self.prototypes.needs_examples() {
            return self.prototypes.forward(g, &self.store, None, drop);
        }
        let reps = match (&self.cache, self.proto_mode) {
            (Some(c), ProtoEncoder::Frozen) => c.inject(g),
            (None, ProtoEncoder::Frozen) => {
                let c = cache_examples(&self.store, self.proto_encoder(), &self.examples)?;
                c.inject(g)
            }
            _ => encode_examples(g, &self.store, self.proto_encoder(), &self.examples, true)?,
        };
        self.prototypes.forward(g, &self.store, Some(&reps), drop)
    }

    /// Instance vectors of one document: `(shared, coreference)` stacks.
    fn instance_vars(&self, g: &mut Graph, doc: &Document, pairs: &[Pair], trainable: bool, drop: &mut Dropout) -> Result<(Var, Var)> {
        let m = encode_mentions(g, &self.store, &self.encoder, doc, trainable)?;
        let (a, b) = gather_pairs(g, m, pairs);
        let x = self.instance.forward(g, &self.store, a, b, drop);
        let xc = match &self.coref_instance {
            Some(p) => p.forward(g, &self.store, a, b, drop),
            None => x,
        };
        Ok((x, xc))
    }

    /// Joint loss over all ordered pairs of `docs`. `None` when the batch
    /// has no pairs.
    pub fn batch_loss(&self, g: &mut Graph, docs: &[&Document], drop: &mut Dropout) -> Result<Option<BatchLoss>> {
        let (_, h_t) = self.prototype_vars(g, drop)?;
        let (mut xs, mut xcs) = (Vec::new(), Vec::new());
        let mut gold: [Vec<usize>; 4] = Default::default();
        for doc in docs {
            let pairs = crate::corpus::enumerate_pairs(doc);
            if pairs.is_empty() {
                continue;
            }
            let (x, xc) = self.instance_vars(g, doc, &pairs, true, drop)?;
            xs.push(x);
            xcs.push(xc);
            for p in &pairs {
                for t in Task::ALL {
                    gold[t.index()].push(p.labels.get(t).index_in_task());
                }
            }
        }
        if xs.is_empty() {
            return Ok(None);
        }
        let cat = |g: &mut Graph, v: &[Var]| if v.len() == 1 { v[0] } else { g.concat_rows(v) };
        let x = cat(g, &xs);
        let xc = if self.coref_instance.is_some() { cat(g, &xcs) } else { x };
        let mut tasks = [x; 4];
        for t in Task::ALL {
            let inputs = if t == Task::Coreference { xc } else { x };
            let scores = task_scores(g, inputs, h_t, t);
            tasks[t.index()] = g.cross_entropy(scores, &gold[t.index()], LOG_EPS, self.config.loss_reduction);
        }
        let w = self.config.weights();
        let terms: Vec<(Var, f64)> = Task::ALL.iter().map(|&t| (tasks[t.index()], w.get(t))).collect();
        let joint = g.weighted_sum(&terms);
        Ok(Some(BatchLoss { joint, tasks, pairs: gold[0].len() }))
    }

    /// Prototypes under the current weights, without dropout.
    pub fn bank(&self) -> Result<PrototypeBank> {
        if !self.prototypes.needs_examples() {
            return self.prototypes.bank(&self.store, None);
        }
        let fresh;
        let cache = match (&self.cache, self.proto_mode) {
            (Some(c), ProtoEncoder::Frozen) => c,
            _ => {
                fresh = cache_examples(&self.store, self.proto_encoder(), &self.examples)?;
                &fresh
            }
        };
        self.prototypes.bank(&self.store, Some(cache))
    }

    /// Per-task probabilities for every ordered pair of `doc`:
    /// `(pairs, [n x C_t; 4])`.
    pub fn pair_probabilities(&self, doc: &Document, bank: &PrototypeBank) -> Result<(Vec<Pair>, Vec<Array2<f64>>)> {
        let pairs = crate::corpus::enumerate_pairs(doc);
        if pairs.is_empty() {
            return Ok((pairs, Task::ALL.iter().map(|t| Array2::zeros((0, t.num_labels()))).collect()));
        }
        let mut g = Graph::new();
        let (x, xc) = self.instance_vars(&mut g, doc, &pairs, false, &mut Dropout::off())?;
        let probs = Task::ALL
            .iter()
            .map(|&t| {
                let inputs = if t == Task::Coreference { g.value(xc) } else { g.value(x) };
                let protos = bank.h_p_tilde.select(ndarray::Axis(0), &task_nodes(t));
                softmax_rows(&neg_dist(inputs, &protos))
            })
            .collect();
        Ok((pairs, probs))
    }

    /// Prediction records for every pair and task of `doc`.
    pub fn predict_document(&self, doc: &Document, bank: &PrototypeBank) -> Result<Vec<PredictionRecord>> {
        let (pairs, probs) = self.pair_probabilities(doc, bank)?;
        let mut out = Vec::with_capacity(pairs.len() * 4);
        for (r, p) in pairs.iter().enumerate() {
            for t in Task::ALL {
                let row = probs[t.index()].row(r);
                let row = row.as_slice().expect("standard layout");
                let k = predict(row);
                out.push(PredictionRecord {
                    doc_id: doc.doc_id.clone(),
                    src: doc.mentions[p.src].mention_id.clone(),
                    dst: doc.mentions[p.dst].mention_id.clone(),
                    task: t,
                    label: t.labels()[k],
                    probability: row[k],
                });
            }
        }
        Ok(out)
    }

    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<PredictionRecord>> {
        let bank = self.bank()?;
        let mut out = Vec::new();
        for doc in &corpus.documents {
            out.extend(self.predict_document(doc, &bank)?);
        }
        Ok(out)
    }
}

/// Coreference clusters implied by `Coref` predictions.
pub fn clusters_from_predictions(corpus: &Corpus, predicted: &PredictedLabels) -> Result<Vec<ClusterRecord>> {
    corpus
        .documents
        .iter()
        .map(|d| {
            let ids: Vec<String> = d.mentions.iter().map(|m| m.mention_id.clone()).collect();
            let mut positives = Vec::new();
            for a in &ids {
                for b in &ids {
                    if a != b && predicted.get(&d.doc_id, a, b).coreference == Label::Coref {
                        positives.push((a.clone(), b.clone()));
                    }
                }
            }
            let c = cluster_from_pairs(&ids, &positives)?;
            Ok(ClusterRecord { doc_id: d.doc_id.clone(), clusters: c.clusters().to_vec() })
        })
        .collect()
}
