//! Event-pair instance representations: a feed-forward stack over
//! `[h1 ‖ h2 ‖ h1∘h2]` of the pooled mention vectors.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Dropout, Graph, ParamGroup, ParamId, ParamStore, Var};
use crate::corpus::{enumerate_pairs, Document, Pair};
use crate::error::{Error, Result};
use crate::protobank::{pair_features, Activation};
use crate::textenc::{init_matrix, pool_spans, TextEncoder};

/// Layers `3d -> d -> ... -> d`, each followed by the activation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceParams {
    pub dim: usize,
    pub layers: Vec<(ParamId, ParamId)>,
    pub activation: Activation,
}

impl InstanceParams {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, depth: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(depth >= 1, "instance stack needs a layer");
        let layers = (0..depth)
            .map(|l| {
                let fan_in = if l == 0 { 3 * dim } else { dim };
                let w = store.add(
                    format!("{prefix}.layer{l}.w"),
                    ParamGroup::Heads,
                    init_matrix(rng, fan_in, dim, (2.0 / fan_in as f64).sqrt()),
                );
                let b = store.add(format!("{prefix}.layer{l}.b"), ParamGroup::Heads, Array2::zeros((1, dim)));
                (w, b)
            })
            .collect();
        Self { dim, layers, activation: Activation::Relu }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Rows of `h1`, `h2` paired up; `n x dim`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h1: Var, h2: Var, drop: &mut Dropout) -> Var {
        let mut x = pair_features(g, h1, h2);
        for &(w, b) in &self.layers {
            let (w, b) = (g.param(store, w), g.param(store, b));
            let xw = g.matmul(x, w);
            let y = g.add(xw, b);
            let y = self.activation.apply(g, y);
            x = drop.apply(g, y);
        }
        x
    }
}

/// Value-level representation of one ordered pair.
pub fn instance_pair_rep(p: &InstanceParams, store: &ParamStore, h1: &Array2<f64>, h2: &Array2<f64>) -> Result<Array2<f64>> {
    for (name, h) in [("h1", h1), ("h2", h2)] {
        if h.ncols() != p.dim {
            return Err(Error::Shape(format!("{name} has width {}, expected {}", h.ncols(), p.dim)));
        }
    }
    let mut g = Graph::new();
    let (a, b) = (g.constant(h1.clone()), g.constant(h2.clone()));
    let out = p.forward(&mut g, store, a, b, &mut Dropout::off());
    Ok(g.value(out).clone())
}

/// Pooled vector of every event mention, `mentions x dim`.
pub fn encode_mentions(g: &mut Graph, store: &ParamStore, enc: &TextEncoder, doc: &Document, trainable: bool) -> Result<Var> {
    let tokens = enc.encode_document(g, store, doc, trainable)?;
    let spans: Vec<(usize, usize)> = doc.mentions.iter().map(|m| doc.global_span(m)).collect();
    pool_spans(g, tokens, &spans)
}

/// Pair inputs gathered from mention vectors in [`enumerate_pairs`] order.
pub fn gather_pairs(g: &mut Graph, mentions: Var, pairs: &[Pair]) -> (Var, Var) {
    let src: Vec<usize> = pairs.iter().map(|p| p.src).collect();
    let dst: Vec<usize> = pairs.iter().map(|p| p.dst).collect();
    (g.rows(mentions, &src), g.rows(mentions, &dst))
}

/// One instance vector per ordered pair of the document, with the pairs.
/// Returns `None` for documents with fewer than two mentions.
pub fn encode_instances(
    g: &mut Graph,
    store: &ParamStore,
    enc: &TextEncoder,
    doc: &Document,
    p: &InstanceParams,
    trainable: bool,
    drop: &mut Dropout,
) -> Result<Option<(Var, Vec<Pair>)>> {
    let pairs = enumerate_pairs(doc);
    if pairs.is_empty() {
        return Ok(None);
    }
    let m = encode_mentions(g, store, enc, doc, trainable)?;
    let (a, b) = gather_pairs(g, m, &pairs);
    Ok(Some((p.forward(g, store, a, b, drop), pairs)))
}
