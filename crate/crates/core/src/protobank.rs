//! One prototype vector per relation label.
//!
//! A prototype fuses an event-pair representation averaged over a few
//! example pairs with a context representation of the same examples with
//! both triggers masked. The fourteen prototypes are then refined by graph
//! convolution over the label dependency graph.
//!
//! Matrices act on row vectors: an affine map is `x · W + b`, so a weight
//! stored here is the transpose of the usual column-vector form.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Dropout, Graph, ParamGroup, ParamId, ParamStore, Var};
use crate::corpus::{select_examples, Corpus, DependencyGraph, Example, Label, Selection, NUM_LABELS};
use crate::error::{Error, Result};
use crate::textenc::{init_matrix, mask_events, pool_spans, TextEncoder};

/// Text standing in for the examples of every `None` label.
pub const NONE_TEXT: &str = "None";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Identity => x,
        }
    }
}

/// Message passing over the dependency graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    /// Co-occurrence weights from the training corpus.
    #[default]
    On,
    /// No graph convolution.
    Off,
    /// Trainable weights initialised from the co-occurrence weights.
    Learned,
    /// Every off-diagonal weight equal.
    Uniform,
}

/// Where the pre-convolution prototypes come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrototypeSource {
    /// Event-pair and context parts fused.
    #[default]
    Full,
    /// A trainable table, no examples.
    Random,
    /// Event-pair part only; the context half is zero.
    Event,
    /// Context part only; the event-pair half is zero.
    Context,
}

fn affine(g: &mut Graph, store: &ParamStore, x: Var, w: ParamId, b: ParamId) -> Var {
    let w = g.param(store, w);
    let b = g.param(store, b);
    let xw = g.matmul(x, w);
    g.add(xw, b)
}

/// `[a ‖ b ‖ a∘b]` row by row.
pub fn pair_features(g: &mut Graph, a: Var, b: Var) -> Var {
    let prod = g.mul(a, b);
    g.concat_cols(&[a, b, prod])
}

fn check_width(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what} has width {got}, expected {want}")));
    }
    Ok(())
}

/// Weights of the example-to-prototype transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnotationParams {
    pub dim: usize,
    pub w_s: ParamId,
    pub b_s: ParamId,
    /// Separate context weights when untied; `None` shares `w_s`, `b_s`.
    pub ctx: Option<(ParamId, ParamId)>,
    pub w_p: ParamId,
    pub b_p: ParamId,
    pub activation: Activation,
}

impl ConnotationParams {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, tied: bool, rng: &mut ChaCha8Rng) -> Self {
        let mut add = |store: &mut ParamStore, name: &str, r: usize, c: usize| {
            let v = if r == 1 { Array2::zeros((1, c)) } else { init_matrix(rng, r, c, (2.0 / r as f64).sqrt()) };
            store.add(format!("{prefix}.{name}"), ParamGroup::Heads, v)
        };
        let w_s = add(store, "w_s", 3 * dim, dim);
        let b_s = add(store, "b_s", 1, dim);
        let ctx = (!tied).then(|| (add(store, "w_c", 3 * dim, dim), add(store, "b_c", 1, dim)));
        let w_p = add(store, "w_p", 2 * dim, dim);
        let b_p = add(store, "b_p", 1, dim);
        Self { dim, w_s, b_s, ctx, w_p, b_p, activation: Activation::Relu }
    }

    fn context_weights(&self) -> (ParamId, ParamId) {
        self.ctx.unwrap_or((self.w_s, self.b_s))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.w_s, self.b_s, self.w_p, self.b_p];
        if let Some((w, b)) = self.ctx {
            v.extend([w, b]);
        }
        v
    }

    /// Event-pair representation for each row pair of `e1`, `e2`.
    pub fn pair_rep(&self, g: &mut Graph, store: &ParamStore, e1: Var, e2: Var, drop: &mut Dropout) -> Var {
        let x = pair_features(g, e1, e2);
        let y = affine(g, store, x, self.w_s, self.b_s);
        let y = self.activation.apply(g, y);
        drop.apply(g, y)
    }

    /// Same transform over pooled mask-token vectors.
    pub fn masked_rep(&self, g: &mut Graph, store: &ParamStore, m1: Var, m2: Var, drop: &mut Dropout) -> Var {
        let (w, b) = self.context_weights();
        let x = pair_features(g, m1, m2);
        let y = affine(g, store, x, w, b);
        let y = self.activation.apply(g, y);
        drop.apply(g, y)
    }

    pub fn fuse(&self, g: &mut Graph, store: &ParamStore, h_s: Var, h_c: Var, drop: &mut Dropout) -> Var {
        let x = g.concat_cols(&[h_s, h_c]);
        let y = affine(g, store, x, self.w_p, self.b_p);
        let y = self.activation.apply(g, y);
        drop.apply(g, y)
    }
}

/// Value-level event-pair representation of single vectors.
pub fn pair_rep(p: &ConnotationParams, store: &ParamStore, h_e1: &Array2<f64>, h_e2: &Array2<f64>) -> Result<Array2<f64>> {
    check_width("h_e1", h_e1.ncols(), p.dim)?;
    check_width("h_e2", h_e2.ncols(), p.dim)?;
    let mut g = Graph::new();
    let (a, b) = (g.constant(h_e1.clone()), g.constant(h_e2.clone()));
    let out = p.pair_rep(&mut g, store, a, b, &mut Dropout::off());
    Ok(g.value(out).clone())
}

/// Mean of example representations (rows).
pub fn average_examples(reps: &Array2<f64>) -> Result<Array2<f64>> {
    if reps.nrows() == 0 {
        return Err(Error::Empty("no example representations to average".into()));
    }
    Ok(reps.mean_axis(ndarray::Axis(0)).expect("nonempty").insert_axis(ndarray::Axis(0)))
}

/// Context representation: the pair transform on pooled mask vectors of
/// each example, averaged.
pub fn context_rep(p: &ConnotationParams, store: &ParamStore, m1: &Array2<f64>, m2: &Array2<f64>) -> Result<Array2<f64>> {
    check_width("h_m1", m1.ncols(), p.dim)?;
    check_width("h_m2", m2.ncols(), p.dim)?;
    if m1.nrows() != m2.nrows() {
        return Err(Error::Shape(format!("{} vs {} masked examples", m1.nrows(), m2.nrows())));
    }
    let mut g = Graph::new();
    let (a, b) = (g.constant(m1.clone()), g.constant(m2.clone()));
    let out = p.masked_rep(&mut g, store, a, b, &mut Dropout::off());
    average_examples(g.value(out))
}

pub fn fuse(p: &ConnotationParams, store: &ParamStore, h_s: &Array2<f64>, h_c: &Array2<f64>) -> Result<Array2<f64>> {
    check_width("h_s", h_s.ncols(), p.dim)?;
    check_width("h_c", h_c.ncols(), p.dim)?;
    let mut g = Graph::new();
    let (a, b) = (g.constant(h_s.clone()), g.constant(h_c.clone()));
    let out = p.fuse(&mut g, store, a, b, &mut Dropout::off());
    Ok(g.value(out).clone())
}

/// One convolution layer: row `i` of the output is
/// `act(Σ_j a[i][j] · h[j] · w + h[i] · w0)`.
pub fn gcn_layer(g: &mut Graph, h: Var, a: Var, w: Var, w0: Var, act: Activation) -> Var {
    let ah = g.matmul(a, h);
    let neigh = g.matmul(ah, w);
    let own = g.matmul(h, w0);
    let sum = g.add(neigh, own);
    act.apply(g, sum)
}

/// Value-level [`gcn_layer`] with shape checks.
pub fn gcn_layer_values(h: &Array2<f64>, a: &Array2<f64>, w: &Array2<f64>, w0: &Array2<f64>, act: Activation) -> Result<Array2<f64>> {
    let (n, d) = h.dim();
    if a.dim() != (n, n) {
        return Err(Error::Shape(format!("adjacency {:?} for {n} nodes", a.dim())));
    }
    for (name, m) in [("w", w), ("w0", w0)] {
        if m.nrows() != d {
            return Err(Error::Shape(format!("{name} has {} rows, node width is {d}", m.nrows())));
        }
    }
    if w.ncols() != w0.ncols() {
        return Err(Error::Shape("w and w0 output widths differ".into()));
    }
    let mut g = Graph::new();
    let vars = [h, a, w, w0].map(|m| g.constant(m.clone()));
    let out = gcn_layer(&mut g, vars[0], vars[1], vars[2], vars[3], act);
    Ok(g.value(out).clone())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcnParams {
    /// `(w, w0)` per layer.
    pub layers: Vec<(ParamId, ParamId)>,
    /// Trainable adjacency for [`GraphMode::Learned`].
    pub learned_adjacency: Option<ParamId>,
    /// Fixed adjacency otherwise.
    pub adjacency: Array2<f64>,
    pub activation: Activation,
}

impl GcnParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        layers: usize,
        adjacency: Array2<f64>,
        learned: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let std = (1.0 / dim as f64).sqrt();
        let layers = (0..layers)
            .map(|l| {
                let w = store.add(format!("{prefix}.layer{l}.w"), ParamGroup::Heads, init_matrix(rng, dim, dim, std));
                let w0 = store.add(format!("{prefix}.layer{l}.w0"), ParamGroup::Heads, init_matrix(rng, dim, dim, std));
                (w, w0)
            })
            .collect();
        let learned_adjacency =
            learned.then(|| store.add(format!("{prefix}.adjacency"), ParamGroup::Heads, adjacency.clone()));
        Self { layers, learned_adjacency, adjacency, activation: Activation::Relu }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v: Vec<ParamId> = self.layers.iter().flat_map(|&(w, w0)| [w, w0]).collect();
        v.extend(self.learned_adjacency);
        v
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var, drop: &mut Dropout) -> Var {
        if self.layers.is_empty() {
            return h;
        }
        let a = match self.learned_adjacency {
            Some(id) => g.param(store, id),
            None => g.constant(self.adjacency.clone()),
        };
        let mut x = h;
        for &(w, w0) in &self.layers {
            let (w, w0) = (g.param(store, w), g.param(store, w0));
            x = gcn_layer(g, x, a, w, w0, self.activation);
            x = drop.apply(g, x);
        }
        x
    }
}

/// The fourteen prototypes before and after graph convolution, rows in
/// taxonomy node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub labels: Vec<Label>,
    pub h_p: Array2<f64>,
    pub h_p_tilde: Array2<f64>,
}

impl PrototypeBank {
    pub fn row(&self, label: Label) -> ndarray::ArrayView1<'_, f64> {
        self.h_p_tilde.row(label.node())
    }
}

/// Pooled vectors of example pairs for all labels, stacked. Row `r` belongs
/// to node `owner[r]`; every node owns at least one row.
pub struct ExampleReps {
    pub e1: Var,
    pub e2: Var,
    pub m1: Var,
    pub m2: Var,
    pub owner: Vec<usize>,
}

/// The same, as plain values (a frozen encoder's cache).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleCache {
    pub e1: Array2<f64>,
    pub e2: Array2<f64>,
    pub m1: Array2<f64>,
    pub m2: Array2<f64>,
    pub owner: Vec<usize>,
}

impl ExampleCache {
    pub fn inject(&self, g: &mut Graph) -> ExampleReps {
        ExampleReps {
            e1: g.constant(self.e1.clone()),
            e2: g.constant(self.e2.clone()),
            m1: g.constant(self.m1.clone()),
            m2: g.constant(self.m2.clone()),
            owner: self.owner.clone(),
        }
    }
}

/// Up to `k` examples for every non-`None` label.
pub fn select_all_examples(corpus: &Corpus, k: usize, strategy: Selection, seed: u64) -> Result<BTreeMap<Label, Vec<Example>>> {
    let mut out = BTreeMap::new();
    let mut missing = Vec::new();
    for label in Label::ALL.into_iter().filter(|l| !l.is_none()) {
        let ex = select_examples(corpus, label, k, strategy, seed ^ label.node() as u64)?;
        if ex.is_empty() {
            missing.push(label.display_name());
        }
        out.insert(label, ex);
    }
    if !missing.is_empty() {
        return Err(Error::MissingExamples(missing.join(", ")));
    }
    Ok(out)
}

/// Encode the examples (and the `None` text) into stacked pooled vectors.
/// `None` nodes get the pooled vector of the literal text as both event
/// vectors and both mask vectors.
pub fn encode_examples(
    g: &mut Graph,
    store: &ParamStore,
    enc: &TextEncoder,
    examples: &BTreeMap<Label, Vec<Example>>,
    trainable: bool,
) -> Result<ExampleReps> {
    let none_tokens = enc.encode_words(g, store, &[vec![NONE_TEXT.to_string()]], trainable)?;
    let none = pool_spans(g, none_tokens, &[(0, 1)])?;
    let (mut e1, mut e2, mut m1, mut m2, mut owner) = (vec![], vec![], vec![], vec![], vec![]);
    for label in Label::ALL {
        if label.is_none() {
            for v in [&mut e1, &mut e2, &mut m1, &mut m2] {
                v.push(none);
            }
            owner.push(label.node());
            continue;
        }
        let list = examples.get(&label).filter(|l| !l.is_empty()).ok_or_else(|| Error::MissingExamples(label.display_name()))?;
        for ex in list {
            let toks = enc.encode_words(g, store, std::slice::from_ref(&ex.text), trainable)?;
            let pooled = pool_spans(g, toks, &[ex.span_e1, ex.span_e2])?;
            let masked = mask_events(&ex.text, [ex.span_e1, ex.span_e2], enc.mask_token())?;
            let mtoks = enc.encode_words(g, store, &[masked], trainable)?;
            let mpooled = pool_spans(g, mtoks, &[ex.span_e1, ex.span_e2])?;
            e1.push(g.rows(pooled, &[0]));
            e2.push(g.rows(pooled, &[1]));
            m1.push(g.rows(mpooled, &[0]));
            m2.push(g.rows(mpooled, &[1]));
            owner.push(label.node());
        }
    }
    Ok(ExampleReps { e1: g.concat_rows(&e1), e2: g.concat_rows(&e2), m1: g.concat_rows(&m1), m2: g.concat_rows(&m2), owner })
}

/// Frozen-encoder cache of [`encode_examples`].
pub fn cache_examples(store: &ParamStore, enc: &TextEncoder, examples: &BTreeMap<Label, Vec<Example>>) -> Result<ExampleCache> {
    let mut g = Graph::new();
    let r = encode_examples(&mut g, store, enc, examples, false)?;
    Ok(ExampleCache {
        e1: g.value(r.e1).clone(),
        e2: g.value(r.e2).clone(),
        m1: g.value(r.m1).clone(),
        m2: g.value(r.m2).clone(),
        owner: r.owner,
    })
}

/// Pooled vector of the literal `None` text through a frozen encoder.
pub fn none_vector(store: &ParamStore, enc: &TextEncoder) -> Result<Array2<f64>> {
    let toks = enc.encode_values(store, &[vec![NONE_TEXT.to_string()]])?;
    crate::textenc::pool_event(&toks, (0, 1))
}

/// Prototype of a `None` label: the `None` text vector through the pair,
/// context and fusion transforms. The same for all four tasks.
pub fn build_none_prototype(p: &ConnotationParams, store: &ParamStore, enc: &TextEncoder) -> Result<Array2<f64>> {
    let v = none_vector(store, enc)?;
    let h_s = pair_rep(p, store, &v, &v)?;
    let h_c = context_rep(p, store, &v, &v)?;
    fuse(p, store, &h_s, &h_c)
}

/// Row `i` averages the rows owned by node `i`.
fn averaging_matrix(owner: &[usize]) -> Array2<f64> {
    let mut counts = [0usize; NUM_LABELS];
    for &o in owner {
        counts[o] += 1;
    }
    let mut m = Array2::zeros((NUM_LABELS, owner.len()));
    for (r, &o) in owner.iter().enumerate() {
        m[[o, r]] = 1.0 / counts[o] as f64;
    }
    m
}

/// All prototype parameters and the forward pass from example vectors to
/// the refined prototypes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeModel {
    pub dim: usize,
    pub source: PrototypeSource,
    pub connotation: ConnotationParams,
    /// Trainable table for [`PrototypeSource::Random`].
    pub table: Option<ParamId>,
    pub gcn: GcnParams,
}

/// Shape and wiring of a [`PrototypeModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeConfig {
    pub dim: usize,
    pub gcn_layers: usize,
    pub graph: GraphMode,
    pub source: PrototypeSource,
    pub tie_connotation: bool,
}

/// Message-passing weights for a graph mode.
pub fn adjacency_for(mode: GraphMode, graph: &DependencyGraph) -> Array2<f64> {
    match mode {
        GraphMode::Uniform => {
            let mut a = Array2::from_elem((NUM_LABELS, NUM_LABELS), 1.0 / (NUM_LABELS - 1) as f64);
            a.diag_mut().fill(0.0);
            a
        }
        _ => graph.norm.clone(),
    }
}

impl PrototypeModel {
    pub fn new(store: &mut ParamStore, prefix: &str, cfg: &PrototypeConfig, graph: &DependencyGraph, rng: &mut ChaCha8Rng) -> Self {
        let connotation = ConnotationParams::new(store, &format!("{prefix}.connotation"), cfg.dim, cfg.tie_connotation, rng);
        let table = (cfg.source == PrototypeSource::Random).then(|| {
            store.add(format!("{prefix}.table"), ParamGroup::Heads, init_matrix(rng, NUM_LABELS, cfg.dim, 1.0))
        });
        let layers = if cfg.graph == GraphMode::Off { 0 } else { cfg.gcn_layers };
        let gcn = GcnParams::new(
            store,
            &format!("{prefix}.gcn"),
            cfg.dim,
            layers,
            adjacency_for(cfg.graph, graph),
            cfg.graph == GraphMode::Learned,
            rng,
        );
        Self { dim: cfg.dim, source: cfg.source, connotation, table, gcn }
    }

    /// Whether prototypes depend on encoded examples.
    pub fn needs_examples(&self) -> bool {
        self.source != PrototypeSource::Random
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v = if self.needs_examples() { self.connotation.param_ids() } else { vec![] };
        v.extend(self.table);
        v.extend(self.gcn.param_ids());
        v
    }

    /// `(h_p, h_p_tilde)`, both `14 x dim`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, reps: Option<&ExampleReps>, drop: &mut Dropout) -> Result<(Var, Var)> {
        let h_p = match (self.source, reps) {
            (PrototypeSource::Random, _) => g.param(store, self.table.expect("random prototypes own a table")),
            (_, None) => return Err(Error::InvalidArgument("prototypes need encoded examples".into())),
            (source, Some(r)) => {
                let avg = g.constant(averaging_matrix(&r.owner));
                let zeros = || Array2::zeros((NUM_LABELS, self.dim));
                let h_s = if source == PrototypeSource::Context {
                    g.constant(zeros())
                } else {
                    let s = self.connotation.pair_rep(g, store, r.e1, r.e2, drop);
                    g.matmul(avg, s)
                };
                let h_c = if source == PrototypeSource::Event {
                    g.constant(zeros())
                } else {
                    let c = self.connotation.masked_rep(g, store, r.m1, r.m2, drop);
                    g.matmul(avg, c)
                };
                self.connotation.fuse(g, store, h_s, h_c, drop)
            }
        };
        let h_tilde = self.gcn.forward(g, store, h_p, drop);
        Ok((h_p, h_tilde))
    }

    pub fn bank(&self, store: &ParamStore, cache: Option<&ExampleCache>) -> Result<PrototypeBank> {
        let mut g = Graph::new();
        let reps = cache.map(|c| c.inject(&mut g));
        let (h_p, h_t) = self.forward(&mut g, store, reps.as_ref(), &mut Dropout::off())?;
        Ok(PrototypeBank { labels: Label::ALL.to_vec(), h_p: g.value(h_p).clone(), h_p_tilde: g.value(h_t).clone() })
    }
}

/// Select examples from `corpus`, encode them with a frozen `enc` and
/// compute the bank.
pub fn build_prototypes(
    corpus: &Corpus,
    model: &PrototypeModel,
    store: &ParamStore,
    enc: &TextEncoder,
    k: usize,
    strategy: Selection,
    seed: u64,
) -> Result<PrototypeBank> {
    if !model.needs_examples() {
        return model.bank(store, None);
    }
    let examples = select_all_examples(corpus, k, strategy, seed)?;
    let cache = cache_examples(store, enc, &examples)?;
    model.bank(store, Some(&cache))
}
