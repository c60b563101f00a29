//! Matching instances to prototypes: negative Euclidean distance scores,
//! per-task softmax, argmax prediction and the weighted joint loss.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{clamp_below, softmax_rows, Graph, Reduction, Var};
use crate::corpus::{Label, Task};
use crate::error::{Error, Result};
use crate::evalkit::PredictedLabels;

/// Floor applied to the gold probability before taking its log.
pub const LOG_EPS: f64 = 1e-12;

/// Per-task loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub coreference: f64,
    pub temporal: f64,
    pub causal: f64,
    pub subevent: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { coreference: 1.0, temporal: 2.0, causal: 4.0, subevent: 4.0 }
    }
}

impl LossWeights {
    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Coreference => self.coreference,
            Task::Temporal => self.temporal,
            Task::Causal => self.causal,
            Task::Subevent => self.subevent,
        }
    }
}

/// Node indices of a task's labels, in order.
pub fn task_nodes(task: Task) -> Vec<usize> {
    task.labels().iter().map(|l| l.node()).collect()
}

pub fn similarity(x: &[f64], p: &[f64]) -> Result<f64> {
    if x.len() != p.len() {
        return Err(Error::Shape(format!("instance width {} vs prototype width {}", x.len(), p.len())));
    }
    Ok(-x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Softmax of a score vector.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let row = Array2::from_shape_vec((1, scores.len()), scores.to_vec()).expect("row");
    softmax_rows(&row).into_raw_vec_and_offset().0
}

/// Probability of each prototype row for instance `x`.
pub fn probabilities(x: &[f64], prototypes: &Array2<f64>) -> Result<Vec<f64>> {
    if prototypes.nrows() == 0 {
        return Err(Error::Empty("no prototypes to match against".into()));
    }
    let scores = prototypes
        .rows()
        .into_iter()
        .map(|p| similarity(x, p.as_slice().expect("standard layout")))
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax(&scores))
}

/// Index of the largest entry; the earliest wins ties.
pub fn predict(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of gold indices under the given probability rows.
pub fn task_loss(probs: &[Vec<f64>], gold: &[usize], reduction: Reduction) -> Result<f64> {
    if probs.len() != gold.len() {
        return Err(Error::Shape(format!("{} probability rows for {} gold labels", probs.len(), gold.len())));
    }
    let mut total = 0.0;
    for (row, &gi) in probs.iter().zip(gold) {
        let p = *row
            .get(gi)
            .ok_or_else(|| Error::InvalidArgument(format!("gold index {gi} outside {} labels", row.len())))?;
        total -= clamp_below(p, LOG_EPS).ln();
    }
    Ok(match reduction {
        Reduction::Mean if !gold.is_empty() => total / gold.len() as f64,
        _ => total,
    })
}

/// Weighted sum of the four task losses, given in [`Task::ALL`] order.
pub fn joint_loss(losses: [f64; 4], w: &LossWeights) -> f64 {
    Task::ALL.iter().zip(losses).map(|(&t, l)| w.get(t) * l).sum()
}

/// Scores of instances `x` (`n x d`) against one task's prototypes,
/// `n x C`.
pub fn task_scores(g: &mut Graph, x: Var, prototypes: Var, task: Task) -> Var {
    let rows = g.rows(prototypes, &task_nodes(task));
    g.neg_dist(x, rows)
}

/// One line of the prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub src: String,
    pub dst: String,
    pub task: Task,
    pub label: Label,
    pub probability: f64,
}

/// Coreference clusters of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub doc_id: String,
    pub clusters: Vec<Vec<String>>,
}

fn write_lines<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_predictions(records: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    write_lines(records, path.as_ref())
}

pub fn write_clusters(records: &[ClusterRecord], path: impl AsRef<Path>) -> Result<()> {
    write_lines(records, path.as_ref())
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        if rec.label.task() != rec.task {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("label {} does not belong to task {}", rec.label, rec.task),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn to_predicted_labels(records: &[PredictionRecord]) -> PredictedLabels {
    let mut out = PredictedLabels::new();
    for r in records {
        out.set(&r.doc_id, &r.src, &r.dst, r.label);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(similarity(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), -5.0);
        assert!(similarity(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn probability_examples() {
        let protos = ndarray::array![[1.0, 0.0], [-1.0, 0.0]];
        let p = probabilities(&[0.0, 0.0], &protos).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let p = softmax(&[0.0, -(3f64.ln())]);
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&[0.1, 0.9]), 1);
        assert_eq!(predict(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(predict(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(task_loss(&[vec![0.0, 1.0]], &[1], Reduction::Sum).unwrap(), 0.0);
        assert!((task_loss(&[vec![0.5, 0.5]], &[0], Reduction::Mean).unwrap() - 2f64.ln()).abs() < 1e-15);
        let clamped = task_loss(&[vec![1.0, 0.0]], &[1], Reduction::Sum).unwrap();
        assert!((clamped - (-(LOG_EPS.ln()))).abs() < 1e-9);
        assert!(task_loss(&[vec![1.0]], &[3], Reduction::Sum).is_err());
        let w = LossWeights::default();
        assert_eq!(joint_loss([1.0; 4], &w), 11.0);
        assert_eq!(joint_loss([0.0; 4], &w), 0.0);
    }

    #[test]
    fn graph_scores_match_values() {
        let mut g = Graph::new();
        let x = g.constant(ndarray::array![[0.0, 0.0], [1.0, 1.0]]);
        let protos = g.constant(Array2::from_shape_fn((crate::corpus::NUM_LABELS, 2), |(i, j)| (i * 2 + j) as f64));
        let s = task_scores(&mut g, x, protos, Task::Causal);
        assert_eq!(g.shape(s), (2, 3));
        let p9 = [18.0, 19.0];
        assert!((g.value(s)[[0, 0]] - similarity(&[0.0, 0.0], &p9).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let recs = vec![
            PredictionRecord { doc_id: "d".into(), src: "M1".into(), dst: "M2".into(), task: Task::Temporal, label: Label::Before, probability: 0.7 },
            PredictionRecord { doc_id: "d".into(), src: "M1".into(), dst: "M2".into(), task: Task::Causal, label: Label::Cause, probability: 0.6 },
        ];
        write_predictions(&recs, &path).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), recs);
        let labels = to_predicted_labels(&recs).get("d", "M1", "M2");
        assert_eq!((labels.temporal, labels.causal, labels.subevent), (Label::Before, Label::Cause, Label::NoneSubevent));
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(scores in proptest::collection::vec(-50.0f64..0.0, 1..8), c in -100.0f64..100.0) {
            let p = softmax(&scores);
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            let q = softmax(&shifted);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(predict(&p), predict(&q));
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn loss_is_nonnegative(rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..6), gold in 0usize..3) {
            let probs: Vec<Vec<f64>> = rows.iter().map(|r| softmax(r)).collect();
            let golds = vec![gold; probs.len()];
            prop_assert!(task_loss(&probs, &golds, Reduction::Mean).unwrap() >= 0.0);
        }

        #[test]
        fn joint_loss_is_a_dot_product(l in proptest::array::uniform4(0.0f64..10.0), w in proptest::array::uniform4(0.1f64..5.0)) {
            let weights = LossWeights { coreference: w[0], temporal: w[1], causal: w[2], subevent: w[3] };
            let dot: f64 = l.iter().zip(&w).map(|(a, b)| a * b).sum();
            prop_assert!((joint_loss(l, &weights) - dot).abs() < 1e-9);
        }
    }
}
