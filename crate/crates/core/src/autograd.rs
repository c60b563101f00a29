//! A small reverse-mode automatic differentiation tape over dense `f64`
//! matrices.
//!
//! Every value is a 2-D array; vectors are `1 x n` rows. A [`Graph`] is built
//! fresh for each forward pass, [`Graph::backward`] walks it in reverse and
//! returns gradients keyed by [`ParamId`].

use std::collections::HashMap;

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Handle to a trainable tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Optimizer group a parameter belongs to; each group has its own learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Encoder,
    Heads,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub group: ParamGroup,
    pub value: Array2<f64>,
}

/// Named, grouped storage for every learnable tensor of a model.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Array2<f64>) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, group, value });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }
}

/// Loss reduction over a batch of instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Rows(Var, Vec<usize>),
    MeanRows(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var),
    NegDist(Var, Var),
    CrossEntropy {
        scores: Var,
        gold: Vec<usize>,
        probs: Array2<f64>,
        eps: f64,
        weight: f64,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    param: Option<ParamId>,
}

const LAYER_NORM_EPS: f64 = 1e-5;

/// A single forward computation recorded for differentiation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to parameters and arbitrary nodes.
pub struct Gradients {
    per_node: Vec<Option<Array2<f64>>>,
    per_param: HashMap<ParamId, Array2<f64>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.per_param.get(&id)
    }

    pub fn params(&self) -> &HashMap<ParamId, Array2<f64>> {
        &self.per_param
    }

    pub fn into_params(self) -> HashMap<ParamId, Array2<f64>> {
        self.per_param
    }

    pub fn node(&self, v: Var) -> Option<&Array2<f64>> {
        self.per_node.get(v.0).and_then(|g| g.as_ref())
    }
}

fn broadcast_rows(target_rows: usize, b: &Array2<f64>) -> bool {
    b.nrows() == 1 && target_rows != 1
}

/// Sum a gradient back down to the shape of a row-broadcast operand.
fn unbroadcast(grad: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    if grad.dim() == shape {
        grad
    } else {
        grad.sum_axis(Axis(0)).insert_axis(Axis(0))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A trainable leaf bound to `id`; its gradient is reported by `backward`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.get(id).clone(), Op::Leaf);
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Same value as the parameter but gradient is stopped.
    pub fn frozen(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.constant(store.get(id).clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.nrows(), "matmul shape mismatch {:?} x {:?}", va.dim(), vb.dim());
        let out = va.dot(vb);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(out, Op::Transpose(a))
    }

    /// Elementwise sum; `b` may be a single row broadcast over `a`'s rows.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        assert_eq!(out.dim(), self.shape(a), "add broadcast only over rows of the first operand");
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) - self.value(b);
        assert_eq!(out.dim(), self.shape(a), "sub broadcast only over rows of the first operand");
        self.push(out, Op::Sub(a, b))
    }

    /// Elementwise product; `b` may be a single row broadcast over `a`'s rows.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        assert_eq!(out.dim(), self.shape(a), "mul broadcast only over rows of the first operand");
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // not `max`: NaN must survive so divergence is detected
        let out = self.value(a).mapv(|x| if x < 0.0 { 0.0 } else { x });
        self.push(out, Op::Relu(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(0), &views).expect("concat_rows: column counts differ");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Gather rows by index (indices may repeat).
    pub fn rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let out = self.value(a).select(Axis(0), idx);
        self.push(out, Op::Rows(a, idx.to_vec()))
    }

    /// Column-wise mean producing a single row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        assert!(va.nrows() > 0, "mean of zero rows");
        let out = va.mean_axis(Axis(0)).expect("nonempty").insert_axis(Axis(0));
        self.push(out, Op::MeanRows(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Per-row standardisation to zero mean and unit variance (no affine).
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|x| (x - mean) * inv);
        }
        self.push(out, Op::LayerNormRows(a))
    }

    /// Negative Euclidean distance between every row of `x` (n x d) and
    /// every row of `p` (c x d), giving an n x c score matrix.
    pub fn neg_dist(&mut self, x: Var, p: Var) -> Var {
        let out = neg_dist(self.value(x), self.value(p));
        self.push(out, Op::NegDist(x, p))
    }

    /// Cross-entropy of softmax(scores) against gold column indices, with
    /// probabilities clamped at `eps` before the log. Produces a `1 x 1` node.
    pub fn cross_entropy(&mut self, scores: Var, gold: &[usize], eps: f64, reduction: Reduction) -> Var {
        let probs = softmax_rows(self.value(scores));
        assert_eq!(probs.nrows(), gold.len(), "one gold label per row");
        let weight = match reduction {
            Reduction::Mean if !gold.is_empty() => 1.0 / gold.len() as f64,
            _ => 1.0,
        };
        let total: f64 = gold
            .iter()
            .enumerate()
            .map(|(r, &g)| -clamp_below(probs[[r, g]], eps).ln())
            .sum();
        let out = Array2::from_elem((1, 1), total * weight);
        self.push(
            out,
            Op::CrossEntropy { scores, gold: gold.to_vec(), probs, eps, weight },
        )
    }

    /// Sum of `1 x 1` nodes weighted by constants.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut acc: Option<Var> = None;
        for &(v, w) in terms {
            let scaled = self.scale(v, w);
            acc = Some(match acc {
                None => scaled,
                Some(a) => self.add(a, scaled),
            });
        }
        acc.unwrap_or_else(|| self.constant(Array2::zeros((1, 1))))
    }

    /// Backpropagate from a `1 x 1` output.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.shape(out), (1, 1), "backward needs a scalar output");
        self.backward_with(out, Array2::ones((1, 1)))
    }

    /// Backpropagate an arbitrary upstream gradient (vector-Jacobian product).
    pub fn backward_with(&self, out: Var, seed: Array2<f64>) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.t().to_owned()),
                Op::Add(a, b) => {
                    let bshape = self.shape(*b);
                    accumulate(&mut grads, *b, unbroadcast(g.clone(), bshape));
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    let bshape = self.shape(*b);
                    accumulate(&mut grads, *b, unbroadcast(-&g, bshape));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = &g * vb;
                    let gb_full = &g * va;
                    let gb = if broadcast_rows(va.nrows(), vb) {
                        unbroadcast(gb_full, vb.dim())
                    } else {
                        gb_full
                    };
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::Relu(a) => {
                    let mask = self.value(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *a, g * mask);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        accumulate(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let h = self.shape(*p).0;
                        accumulate(&mut grads, *p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::Rows(a, idx) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    for (r, &src) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(src);
                        row += &g.row(r);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let (n, _) = self.shape(*a);
                    let row = &g / n as f64;
                    let ga = row.broadcast(self.shape(*a)).expect("row broadcast").to_owned();
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(gi, yi)| gi * yi).sum();
                        for c in 0..y.ncols() {
                            ga[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNormRows(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut ga = Array2::zeros(x.dim());
                    let n = x.ncols() as f64;
                    for r in 0..x.nrows() {
                        let mean = x.row(r).sum() / n;
                        let var = x.row(r).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let gmean = g.row(r).sum() / n;
                        let gy: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..x.ncols() {
                            ga[[r, c]] = inv * (g[[r, c]] - gmean - y[[r, c]] * gy);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::NegDist(x, p) => {
                    let (vx, vp) = (self.value(*x), self.value(*p));
                    let d = &node.value;
                    let mut gx = Array2::zeros(vx.dim());
                    let mut gp = Array2::zeros(vp.dim());
                    for i in 0..vx.nrows() {
                        for j in 0..vp.nrows() {
                            let dist = -d[[i, j]];
                            if dist <= 0.0 {
                                continue;
                            }
                            let coef = -g[[i, j]] / dist;
                            for k in 0..vx.ncols() {
                                let diff = vx[[i, k]] - vp[[j, k]];
                                gx[[i, k]] += coef * diff;
                                gp[[j, k]] -= coef * diff;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *p, gp);
                }
                Op::CrossEntropy { scores, gold, probs, eps, weight } => {
                    let upstream = g[[0, 0]] * weight;
                    let mut gs = probs.clone();
                    for (r, &gi) in gold.iter().enumerate() {
                        if probs[[r, gi]] <= *eps {
                            // clamped region is flat
                            gs.row_mut(r).fill(0.0);
                        } else {
                            gs[[r, gi]] -= 1.0;
                        }
                    }
                    accumulate(&mut grads, *scores, gs * upstream);
                }
            }
        }
        self.collect(grads)
    }

    /// Interior-node gradients are consumed during the sweep; only leaves keep theirs.
    fn collect(&self, grads: Vec<Option<Array2<f64>>>) -> Gradients {
        let mut per_param: HashMap<ParamId, Array2<f64>> = HashMap::new();
        for (node, g) in self.nodes.iter().zip(&grads) {
            if let (Some(id), Some(g)) = (node.param, g) {
                per_param
                    .entry(id)
                    .and_modify(|acc| *acc += g)
                    .or_insert_with(|| g.clone());
            }
        }
        Gradients { per_node: grads, per_param }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Row-wise softmax with max subtraction.
/// `max(p, floor)` that keeps NaN.
pub fn clamp_below(p: f64, floor: f64) -> f64 {
    if p < floor {
        floor
    } else {
        p
    }
}

pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Negative Euclidean distance between all row pairs.
pub fn neg_dist(x: &Array2<f64>, p: &Array2<f64>) -> Array2<f64> {
    assert_eq!(x.ncols(), p.ncols(), "neg_dist width mismatch");
    let mut out = Array2::zeros((x.nrows(), p.nrows()));
    for (i, xr) in x.rows().into_iter().enumerate() {
        for (j, pr) in p.rows().into_iter().enumerate() {
            let sq: f64 = xr.iter().zip(pr).map(|(a, b)| (a - b) * (a - b)).sum();
            out[[i, j]] = -sq.sqrt();
        }
    }
    out
}

/// Inverted dropout. Inactive (identity) without a generator or at rate 0.
pub struct Dropout {
    pub rate: f64,
    rng: Option<rand_chacha::ChaCha8Rng>,
}

impl Dropout {
    pub fn off() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, seed: u64) -> Self {
        use rand::SeedableRng;
        Self { rate, rng: Some(rand_chacha::ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn active(&self) -> bool {
        self.rng.is_some() && self.rate > 0.0
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Var {
        use rand::Rng;
        let rate = self.rate;
        let Some(rng) = self.rng.as_mut().filter(|_| rate > 0.0) else {
            return x;
        };
        let keep = 1.0 / (1.0 - rate);
        let mask = Array2::from_shape_fn(g.shape(x), |_| if rng.random::<f64>() < rate { 0.0 } else { keep });
        let m = g.constant(mask);
        g.mul(x, m)
    }
}
