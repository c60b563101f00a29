//! Label co-occurrence statistics and the prototype dependency graph.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{enumerate_pairs, Corpus, Label, NUM_LABELS};
use crate::error::{Error, Result};

/// How the raw co-occurrence matrix becomes message-passing weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Zero diagonal, each row with off-diagonal mass divided by its sum.
    #[default]
    Row,
    /// Zero diagonal, alternate row and column scaling (Sinkhorn iterations).
    Doubly,
}

/// Weighted complete graph over the fourteen prototype nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyGraph {
    /// `raw[[i, j]]`: fraction of ordered pairs labelled `i` that are also labelled `j`.
    pub raw: Array2<f64>,
    /// Message-passing weights, filled by [`normalize_graph`].
    pub norm: Array2<f64>,
    /// Ordered pairs supporting each node.
    pub support: Vec<usize>,
}

impl DependencyGraph {
    /// Build from an already computed raw matrix.
    pub fn from_raw(raw: Array2<f64>) -> Self {
        let n = raw.nrows();
        Self { norm: Array2::zeros((n, n)), support: vec![0; n], raw }
    }

    /// Every node connected to every other with weight 1.
    pub fn uniform() -> Self {
        Self::from_raw(Array2::ones((NUM_LABELS, NUM_LABELS)))
    }

    pub fn weight(&self, from: Label, to: Label) -> f64 {
        self.raw[[from.node(), to.node()]]
    }

    /// Fixed-width text rendering with two decimals, header row and label column.
    pub fn render(&self, matrix: &Array2<f64>) -> String {
        let names: Vec<String> = Label::ALL.iter().map(|l| l.display_name()).collect();
        let w = names.iter().map(String::len).max().unwrap_or(0).max(5);
        let mut out = format!("{:w$}", "");
        for n in &names {
            out.push_str(&format!(" {n:>w$}"));
        }
        out.push('\n');
        for (i, n) in names.iter().enumerate() {
            out.push_str(&format!("{n:w$}"));
            for j in 0..names.len() {
                out.push_str(&format!(" {:>w$.2}", matrix[[i, j]]));
            }
            out.push('\n');
        }
        out
    }

    /// Tab-separated matrix with full precision, label header and label column.
    pub fn to_tsv(matrix: &Array2<f64>) -> String {
        let mut out = String::from("label");
        for l in Label::ALL {
            out.push('\t');
            out.push_str(&l.display_name());
        }
        out.push('\n');
        for (i, l) in Label::ALL.iter().enumerate() {
            out.push_str(&l.display_name());
            for j in 0..NUM_LABELS {
                out.push_str(&format!("\t{}", matrix[[i, j]]));
            }
            out.push('\n');
        }
        out
    }
}

/// Conditional co-occurrence frequencies over all ordered pairs of the corpus.
pub fn compute_cooccurrence(corpus: &Corpus) -> Result<DependencyGraph> {
    let mut joint = Array2::<f64>::zeros((NUM_LABELS, NUM_LABELS));
    let mut support = vec![0usize; NUM_LABELS];
    let mut total = 0usize;
    for doc in &corpus.documents {
        for pair in enumerate_pairs(doc) {
            total += 1;
            let nodes = pair.labels.nodes();
            for &i in &nodes {
                support[i] += 1;
                for &j in &nodes {
                    joint[[i, j]] += 1.0;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::NoPairs);
    }
    let mut raw = Array2::<f64>::zeros((NUM_LABELS, NUM_LABELS));
    for i in 0..NUM_LABELS {
        if support[i] == 0 {
            raw[[i, i]] = 1.0;
            continue;
        }
        for j in 0..NUM_LABELS {
            raw[[i, j]] = joint[[i, j]] / support[i] as f64;
        }
    }
    let mut g = DependencyGraph::from_raw(raw);
    g.support = support;
    Ok(normalize_graph(g, Normalization::Row))
}

const SINKHORN_MAX_ITERS: usize = 10_000;
const SINKHORN_TOL: f64 = 1e-12;

/// Fill `norm` from `raw`.
pub fn normalize_graph(mut g: DependencyGraph, mode: Normalization) -> DependencyGraph {
    let n = g.raw.nrows();
    let mut a = g.raw.clone();
    for i in 0..n {
        a[[i, i]] = 0.0;
    }
    row_normalize(&mut a);
    if mode == Normalization::Doubly {
        for _ in 0..SINKHORN_MAX_ITERS {
            for j in 0..n {
                let s: f64 = a.column(j).sum();
                if s > 0.0 {
                    a.column_mut(j).mapv_inplace(|x| x / s);
                }
            }
            row_normalize(&mut a);
            let worst = (0..n)
                .map(|j| a.column(j).sum())
                .filter(|&s| s > 0.0)
                .map(|s| (s - 1.0).abs())
                .fold(0.0, f64::max);
            if worst < SINKHORN_TOL {
                break;
            }
        }
    }
    g.norm = a;
    g
}

fn row_normalize(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|x| x / s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::doc_with;
    use super::*;

    #[test]
    fn single_pair_corpus() {
        // two mentions; only (m0, m1) carries Before + Cause, (m1, m0) is all None
        let c = Corpus::new(vec![doc_with("d", 2, &[(0, 1, Label::Before), (0, 1, Label::Cause)])]).unwrap();
        let g = compute_cooccurrence(&c).unwrap();
        assert_eq!(g.weight(Label::Before, Label::Cause), 1.0);
        assert_eq!(g.weight(Label::Cause, Label::Before), 1.0);
        assert_eq!(g.weight(Label::Before, Label::NoneSubevent), 1.0);
        assert_eq!(g.weight(Label::NoneTemporal, Label::NoneCausal), 1.0);
        assert_eq!(g.weight(Label::Before, Label::NoneCausal), 0.0);
        // both pairs are None for coreference
        assert_eq!(g.weight(Label::NoneCoref, Label::Before), 0.5);
        // unsupported rows: identity
        assert_eq!(g.weight(Label::Overlap, Label::Overlap), 1.0);
        assert_eq!(g.raw.row(Label::Overlap.node()).sum(), 1.0);
    }

    #[test]
    fn empty_corpus_has_no_pairs() {
        assert!(matches!(compute_cooccurrence(&Corpus::default()), Err(Error::NoPairs)));
        let one = Corpus::new(vec![doc_with("d", 1, &[])]).unwrap();
        assert!(matches!(compute_cooccurrence(&one), Err(Error::NoPairs)));
    }

    #[test]
    fn identity_normalizes_to_zero() {
        let g = normalize_graph(DependencyGraph::from_raw(Array2::eye(NUM_LABELS)), Normalization::Row);
        assert!(g.norm.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn row_normalization_examples() {
        let mut raw = Array2::eye(4);
        raw[[0, 1]] = 0.5;
        raw[[0, 2]] = 0.5;
        raw[[1, 0]] = 0.77;
        raw[[1, 2]] = 0.23;
        raw[[1, 3]] = 0.5;
        let g = normalize_graph(DependencyGraph::from_raw(raw), Normalization::Row);
        assert_eq!(g.norm.row(0).to_vec(), vec![0.0, 0.5, 0.5, 0.0]);
        // divide by row sum 1.5
        let expect = [0.77 / 1.5, 0.0, 0.23 / 1.5, 0.5 / 1.5];
        for (a, b) in g.norm.row(1).iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.norm[[1, 0]] - 0.513_333_333_333).abs() < 1e-9);
        assert!((g.norm[[1, 2]] - 0.153_333_333_333).abs() < 1e-9);
        assert!((g.norm[[1, 3]] - 0.333_333_333_333).abs() < 1e-9);
        assert!((g.norm.row(1).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_graph_is_one_over_thirteen() {
        let g = normalize_graph(DependencyGraph::uniform(), Normalization::Row);
        for i in 0..NUM_LABELS {
            for j in 0..NUM_LABELS {
                let want = if i == j { 0.0 } else { 1.0 / 13.0 };
                assert!((g.norm[[i, j]] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn doubly_stochastic_mode() {
        let mut raw = Array2::from_elem((5, 5), 0.0);
        let vals = [0.3, 0.9, 0.2, 0.5, 0.7, 0.1, 0.4, 0.8, 0.6, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95, 0.15, 0.05, 0.5];
        let mut k = 0;
        for i in 0..5 {
            for j in 0..5 {
                raw[[i, j]] = if i == j { 1.0 } else { vals[k] };
                if i != j {
                    k += 1;
                }
            }
        }
        let g = normalize_graph(DependencyGraph::from_raw(raw), Normalization::Doubly);
        for i in 0..5 {
            assert_eq!(g.norm[[i, i]], 0.0);
            assert!((g.norm.row(i).sum() - 1.0).abs() < 1e-9);
            assert!((g.norm.column(i).sum() - 1.0).abs() < 1e-9);
        }
    }
}
