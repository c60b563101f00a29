//! Scoring: micro P/R/F1 for the directional tasks, clustering plus four
//! coreference metrics, and the overall average.

mod cluster;
mod coref;
mod prf;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use cluster::{cluster_from_pairs, components, Clustering};
pub use coref::{
    b_cubed, blanc, ceaf_e, coref_counts, max_weight_assignment, muc, BlancCounts, CorefCounts, Fractions,
};
pub use prf::{micro_prf, Counts, Prf};

use crate::corpus::{enumerate_pairs, Corpus, Label, PairLabels, Task};
use crate::error::{Error, Result};

/// The four coreference scores and their mean F1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorefReport {
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_e: Prf,
    pub blanc: Prf,
    pub avg_f1: f64,
}

impl CorefReport {
    pub fn new(muc: Prf, b_cubed: Prf, ceaf_e: Prf, blanc: Prf) -> Self {
        let avg_f1 = (muc.f1 + b_cubed.f1 + ceaf_e.f1 + blanc.f1) / 4.0;
        Self { muc, b_cubed, ceaf_e, blanc, avg_f1 }
    }

    pub fn from_counts(c: &CorefCounts) -> Self {
        Self::new(c.muc.prf(), c.b_cubed.prf(), c.ceaf_e.prf(), c.blanc.prf())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub temporal: Prf,
    pub causal: Prf,
    pub subevent: Prf,
    pub coreference: CorefReport,
    /// Mean of temporal, causal, subevent F1 and the coreference average F1.
    pub overall: f64,
}

/// Assemble a report; every task must be present.
pub fn overall(
    temporal: Option<Prf>,
    causal: Option<Prf>,
    subevent: Option<Prf>,
    coreference: Option<CorefReport>,
) -> Result<MetricsReport> {
    let missing: Vec<&str> = [
        ("temporal", temporal.is_none()),
        ("causal", causal.is_none()),
        ("subevent", subevent.is_none()),
        ("coreference", coreference.is_none()),
    ]
    .iter()
    .filter(|(_, m)| *m)
    .map(|(n, _)| *n)
    .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidArgument(format!("missing task scores: {}", missing.join(", "))));
    }
    let (t, c, s, k) = (temporal.unwrap(), causal.unwrap(), subevent.unwrap(), coreference.unwrap());
    Ok(MetricsReport { temporal: t, causal: c, subevent: s, coreference: k, overall: (t.f1 + c.f1 + s.f1 + k.avg_f1) / 4.0 })
}

impl MetricsReport {
    pub fn task_f1(&self, task: Task) -> f64 {
        match task {
            Task::Temporal => self.temporal.f1,
            Task::Causal => self.causal.f1,
            Task::Subevent => self.subevent.f1,
            Task::Coreference => self.coreference.avg_f1,
        }
    }

    /// Flat machine-readable key/value view, stable key order.
    pub fn to_kv(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut prf = |name: &str, p: &Prf| {
            out.push((format!("{name}.precision"), p.precision));
            out.push((format!("{name}.recall"), p.recall));
            out.push((format!("{name}.f1"), p.f1));
        };
        prf("temporal", &self.temporal);
        prf("causal", &self.causal);
        prf("subevent", &self.subevent);
        prf("coreference.muc", &self.coreference.muc);
        prf("coreference.b_cubed", &self.coreference.b_cubed);
        prf("coreference.ceaf_e", &self.coreference.ceaf_e);
        prf("coreference.blanc", &self.coreference.blanc);
        out.push(("coreference.avg_f1".into(), self.coreference.avg_f1));
        out.push(("overall.f1".into(), self.overall));
        out
    }

    pub fn render_kv(&self) -> String {
        self.to_kv().into_iter().map(|(k, v)| format!("{k}={v:.6}\n")).collect()
    }

    /// Human-readable table, percentages with two decimals.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<22} {:>9} {:>9} {:>9}", "task", "P", "R", "F1");
        let mut row = |name: &str, p: &Prf| {
            let _ = writeln!(s, "{:<22} {:>9.2} {:>9.2} {:>9.2}", name, p.precision * 100.0, p.recall * 100.0, p.f1 * 100.0);
        };
        row("temporal", &self.temporal);
        row("causal", &self.causal);
        row("subevent", &self.subevent);
        row("coref MUC", &self.coreference.muc);
        row("coref B3", &self.coreference.b_cubed);
        row("coref CEAFe", &self.coreference.ceaf_e);
        row("coref BLANC", &self.coreference.blanc);
        let _ = writeln!(s, "{:<22} {:>29.2}", "coref average F1", self.coreference.avg_f1 * 100.0);
        let _ = writeln!(s, "{:<22} {:>29.2}", "overall F1", self.overall * 100.0);
        s
    }
}

/// Predicted labels per (doc_id, src, dst); absent pairs count as `None`.
#[derive(Debug, Clone, Default)]
pub struct PredictedLabels {
    map: HashMap<(String, String, String), PairLabels>,
}

impl PredictedLabels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, doc_id: &str, src: &str, dst: &str, label: Label) {
        self.map
            .entry((doc_id.to_string(), src.to_string(), dst.to_string()))
            .or_default()
            .set(label);
    }

    pub fn get(&self, doc_id: &str, src: &str, dst: &str) -> PairLabels {
        self.map
            .get(&(doc_id.to_string(), src.to_string(), dst.to_string()))
            .copied()
            .unwrap_or_default()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|k| k.0.as_str())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// The gold labels themselves, for sanity checks.
    pub fn oracle(corpus: &Corpus) -> Self {
        let mut out = Self::new();
        for d in &corpus.documents {
            for p in enumerate_pairs(d) {
                let (s, t) = (&d.mentions[p.src].mention_id, &d.mentions[p.dst].mention_id);
                for task in Task::ALL {
                    out.set(&d.doc_id, s, t, p.labels.get(task));
                }
            }
        }
        out
    }
}

/// Score predictions against the gold corpus.
///
/// Directional tasks are counted once per ordered pair. Coreference
/// clusters are the connected components of pairs predicted `Coref` in
/// either direction; scorer counts are summed over documents.
pub fn score(corpus: &Corpus, predicted: &PredictedLabels) -> Result<MetricsReport> {
    for id in predicted.doc_ids() {
        if corpus.get(id).is_none() {
            return Err(Error::Schema(format!("predictions mention unknown document {id}")));
        }
    }
    let mut counts: BTreeMap<Task, Counts> = Task::DIRECTIONAL.iter().map(|&t| (t, Counts::default())).collect();
    let mut coref = CorefCounts::default();
    for d in &corpus.documents {
        let mut positives = Vec::new();
        for p in enumerate_pairs(d) {
            let (s, t) = (&d.mentions[p.src].mention_id, &d.mentions[p.dst].mention_id);
            let pred = predicted.get(&d.doc_id, s, t);
            for task in Task::DIRECTIONAL {
                counts.get_mut(&task).unwrap().add(pred.get(task), p.labels.get(task));
            }
            if pred.coreference == Label::Coref {
                positives.push((s.clone(), t.clone()));
            }
        }
        let ids: Vec<String> = d.mentions.iter().map(|m| m.mention_id.clone()).collect();
        let pred_clusters = cluster_from_pairs(&ids, &positives)?;
        let gold_clusters = Clustering::new(d.gold_clusters())?;
        if !ids.is_empty() {
            coref.merge(&coref_counts(&pred_clusters, &gold_clusters)?);
        }
    }
    overall(
        Some(counts[&Task::Temporal].prf()),
        Some(counts[&Task::Causal].prf()),
        Some(counts[&Task::Subevent].prf()),
        Some(CorefReport::from_counts(&coref)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

/// Mean and standard deviation of every metric across runs (e.g. seeds).
pub fn aggregate(reports: &[MetricsReport]) -> BTreeMap<String, MeanStd> {
    let mut out = BTreeMap::new();
    if reports.is_empty() {
        return out;
    }
    let n = reports.len() as f64;
    let kvs: Vec<Vec<(String, f64)>> = reports.iter().map(MetricsReport::to_kv).collect();
    for (i, (key, _)) in kvs[0].iter().enumerate() {
        let vals: Vec<f64> = kvs.iter().map(|kv| kv[i].1).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let std = if reports.len() > 1 {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.insert(key.clone(), MeanStd { mean, std });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{generate, SynthConfig};

    #[test]
    fn overall_is_mean_of_task_f1s() {
        let p = |f1: f64| Prf { precision: f1, recall: f1, f1 };
        let k = CorefReport { avg_f1: 0.9020, ..Default::default() };
        let r = overall(Some(p(0.5417)), Some(p(0.3393)), Some(p(0.3055)), Some(k)).unwrap();
        assert!((r.overall - 0.5221).abs() < 5e-5, "{}", r.overall);
        let one = CorefReport::new(p(1.0), p(1.0), p(1.0), p(1.0));
        assert_eq!(one.avg_f1, 1.0);
        let r = overall(Some(p(1.0)), Some(p(1.0)), Some(p(1.0)), Some(one)).unwrap();
        assert_eq!(r.overall, 1.0);
        let x = CorefReport::new(p(0.3), p(0.3), p(0.3), p(0.3));
        assert!((x.avg_f1 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn missing_task_is_an_error() {
        assert!(overall(Some(Prf::default()), None, Some(Prf::default()), None).is_err());
    }

    #[test]
    fn oracle_predictions_score_one() {
        let c = generate(&SynthConfig::default());
        let r = score(&c, &PredictedLabels::oracle(&c)).unwrap();
        for (k, v) in r.to_kv() {
            assert!((v - 1.0).abs() < 1e-12, "{k} = {v}");
        }
    }

    #[test]
    fn all_none_predictions_zero_directional_f1() {
        let c = generate(&SynthConfig::default());
        let r = score(&c, &PredictedLabels::new()).unwrap();
        assert_eq!(r.temporal.f1, 0.0);
        assert_eq!(r.causal.f1, 0.0);
        assert_eq!(r.subevent.f1, 0.0);
        assert_eq!(r.coreference.muc.f1, 0.0);
        assert!(r.coreference.b_cubed.f1 > 0.0);
        assert!(r.overall > 0.0 && r.overall < 0.25);
    }

    #[test]
    fn unknown_document_rejected() {
        let c = generate(&SynthConfig { documents: 2, ..Default::default() });
        let mut p = PredictedLabels::new();
        p.set("nope", "a", "b", Label::Before);
        assert!(matches!(score(&c, &p), Err(Error::Schema(_))));
    }

    #[test]
    fn aggregate_mean_std() {
        let mk = |x: f64| MetricsReport { overall: x, ..Default::default() };
        let agg = aggregate(&[mk(0.5)]);
        assert_eq!(agg["overall.f1"], MeanStd { mean: 0.5, std: 0.0 });
        let agg = aggregate(&[mk(0.2), mk(0.4), mk(0.6)]);
        assert!((agg["overall.f1"].mean - 0.4).abs() < 1e-12);
        assert!((agg["overall.f1"].std - 0.2).abs() < 1e-12);
    }
}
