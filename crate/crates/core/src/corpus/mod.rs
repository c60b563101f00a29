//! Annotated documents, candidate pair enumeration and corpus statistics.

mod cooccur;
mod examples;
mod load;
mod sample;
pub mod synth;
pub mod taxonomy;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use cooccur::{compute_cooccurrence, normalize_graph, DependencyGraph, Normalization};
pub use examples::{select_examples, Example, Selection};
pub use load::{load_corpus, parse_document, write_corpus, write_pair_table, PairRecord};
pub use sample::sample_low_resource;
pub use taxonomy::{Label, PairLabels, Task, NUM_LABELS};

use crate::error::{Error, Result};

/// A trigger span: half-open token interval inside one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMention {
    pub mention_id: String,
    pub sent_idx: usize,
    pub start: usize,
    pub end: usize,
    /// Coreferent mentions share an event id.
    pub event_id: String,
}

impl EventMention {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &EventMention) -> bool {
        self.sent_idx == other.sent_idx && self.start < other.end && other.start < self.end
    }
}

/// One gold relation between two mentions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub src: String,
    pub dst: String,
    pub label: Label,
}

/// Mention-level gold relations of all four tasks.
///
/// Coreference is stored in both directions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelations {
    relations: BTreeSet<Relation>,
}

impl GoldRelations {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a relation; coreference is symmetrized. `None` labels are not stored.
    pub fn insert(&mut self, src: &str, dst: &str, label: Label) {
        if label.is_none() || src == dst {
            return;
        }
        self.relations.insert(Relation { src: src.to_string(), dst: dst.to_string(), label });
        if label.task() == Task::Coreference {
            self.relations.insert(Relation { src: dst.to_string(), dst: src.to_string(), label });
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Relation> {
        self.relations.iter()
    }

    pub fn for_task(&self, task: Task) -> impl Iterator<Item = &Relation> {
        self.relations.iter().filter(move |r| r.label.task() == task)
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Per ordered pair labels. Where a pair carries two labels of the same
    /// task the first in taxonomy order wins.
    pub fn pair_labels(&self) -> HashMap<(&str, &str), PairLabels> {
        let mut out: HashMap<(&str, &str), PairLabels> = HashMap::new();
        let mut by_label: Vec<&Relation> = self.relations.iter().collect();
        by_label.sort_by_key(|r| r.label);
        for r in by_label {
            let entry = out.entry((r.src.as_str(), r.dst.as_str())).or_default();
            if entry.get(r.label.task()).is_none() {
                entry.set(r.label);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<String>>,
    pub mentions: Vec<EventMention>,
    #[serde(default)]
    pub timex: Vec<EventMention>,
    pub gold: GoldRelations,
}

/// One ordered candidate pair with its four gold labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    /// Index into `Document::mentions`.
    pub src: usize,
    pub dst: usize,
    pub labels: PairLabels,
}

impl Document {
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Offset of each sentence's first token in the flattened token sequence.
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.sentences
            .iter()
            .map(|s| {
                let o = acc;
                acc += s.len();
                o
            })
            .collect()
    }

    /// Flattened token interval of a mention.
    pub fn global_span(&self, m: &EventMention) -> (usize, usize) {
        let off = self.sentence_offsets()[m.sent_idx];
        (off + m.start, off + m.end)
    }

    pub fn mention_index(&self, mention_id: &str) -> Option<usize> {
        self.mentions.iter().position(|m| m.mention_id == mention_id)
    }

    /// Surface text of a mention, tokens joined by spaces.
    pub fn mention_text(&self, m: &EventMention) -> String {
        self.sentences[m.sent_idx][m.start..m.end].join(" ")
    }

    /// Check span and id invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for m in self.mentions.iter().chain(&self.timex) {
            if !seen.insert(m.mention_id.as_str()) {
                return Err(Error::Integrity(format!("{}: duplicate mention id {}", self.doc_id, m.mention_id)));
            }
            let Some(sent) = self.sentences.get(m.sent_idx) else {
                return Err(Error::Integrity(format!(
                    "{}: mention {} refers to sentence {} of {}",
                    self.doc_id,
                    m.mention_id,
                    m.sent_idx,
                    self.sentences.len()
                )));
            };
            if m.start >= m.end || m.end > sent.len() {
                return Err(Error::Integrity(format!(
                    "{}: mention {} span [{}, {}) invalid for sentence of length {}",
                    self.doc_id,
                    m.mention_id,
                    m.start,
                    m.end,
                    sent.len()
                )));
            }
        }
        let known: BTreeSet<&str> = self.mentions.iter().map(|m| m.mention_id.as_str()).collect();
        for r in self.gold.iter() {
            for id in [&r.src, &r.dst] {
                if !known.contains(id.as_str()) {
                    return Err(Error::Integrity(format!("{}: relation refers to unknown mention {id}", self.doc_id)));
                }
            }
        }
        Ok(())
    }

    /// Gold coreference clusters: connected components of gold coreference
    /// links, unlinked mentions as singletons. Ids in mention order.
    pub fn gold_clusters(&self) -> Vec<Vec<String>> {
        let ids: Vec<&str> = self.mentions.iter().map(|m| m.mention_id.as_str()).collect();
        let edges: Vec<(usize, usize)> = self
            .gold
            .for_task(Task::Coreference)
            .filter_map(|r| Some((self.mention_index(&r.src)?, self.mention_index(&r.dst)?)))
            .collect();
        crate::evalkit::components(ids.len(), &edges)
            .into_iter()
            .map(|c| c.into_iter().map(|i| ids[i].to_string()).collect())
            .collect()
    }
}

/// All ordered pairs `(a, b)`, `a != b`, over the document's event mentions,
/// in row-major mention order. Pairs without gold carry the `None` labels.
pub fn enumerate_pairs(doc: &Document) -> Vec<Pair> {
    let labels = doc.gold.pair_labels();
    let m = doc.mentions.len();
    let mut out = Vec::with_capacity(m * m.saturating_sub(1));
    for (i, a) in doc.mentions.iter().enumerate() {
        for (j, b) in doc.mentions.iter().enumerate() {
            if i == j {
                continue;
            }
            let l = labels
                .get(&(a.mention_id.as_str(), b.mention_id.as_str()))
                .copied()
                .unwrap_or_default();
            out.push(Pair { src: i, dst: j, labels: l });
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub mentions: usize,
    pub events: usize,
    pub timex: usize,
    pub tokens: usize,
    pub pairs: usize,
    /// Ordered pairs per label display name.
    pub label_counts: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for d in &documents {
            if !ids.insert(d.doc_id.as_str()) {
                return Err(Error::Integrity(format!("duplicate doc_id {}", d.doc_id)));
            }
        }
        Ok(Self { documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn stats(&self) -> CorpusStats {
        let mut s = CorpusStats { documents: self.documents.len(), ..Default::default() };
        for l in Label::ALL {
            s.label_counts.insert(l.display_name(), 0);
        }
        for d in &self.documents {
            s.mentions += d.mentions.len();
            s.timex += d.timex.len();
            s.tokens += d.num_tokens();
            s.events += d.mentions.iter().map(|m| m.event_id.as_str()).collect::<BTreeSet<_>>().len();
            for p in enumerate_pairs(d) {
                s.pairs += 1;
                for t in Task::ALL {
                    *s.label_counts.get_mut(&p.labels.get(t).display_name()).unwrap() += 1;
                }
            }
        }
        s
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Build a single-sentence-per-mention document. Each mention `i` sits at
    /// token 1 of sentence `i`, in its own event unless listed in `coref`.
    pub fn doc_with(doc_id: &str, n_mentions: usize, rels: &[(usize, usize, Label)]) -> Document {
        let sentences = (0..n_mentions)
            .map(|i| vec!["the".to_string(), format!("event{i}"), "happened".to_string()])
            .collect();
        let mentions = (0..n_mentions)
            .map(|i| EventMention {
                mention_id: format!("m{i}"),
                sent_idx: i,
                start: 1,
                end: 2,
                event_id: format!("e{i}"),
            })
            .collect();
        let mut gold = GoldRelations::new();
        for &(a, b, l) in rels {
            gold.insert(&format!("m{a}"), &format!("m{b}"), l);
        }
        Document { doc_id: doc_id.to_string(), sentences, mentions, timex: vec![], gold }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::doc_with;
    use super::*;

    #[test]
    fn pair_counts() {
        assert_eq!(enumerate_pairs(&doc_with("d", 3, &[])).len(), 6);
        assert_eq!(enumerate_pairs(&doc_with("d", 1, &[])).len(), 0);
        assert_eq!(enumerate_pairs(&doc_with("d", 0, &[])).len(), 0);
        for m in 0..7 {
            assert_eq!(enumerate_pairs(&doc_with("d", m, &[])).len(), m * m.saturating_sub(1));
        }
    }

    #[test]
    fn label_projection() {
        let d = doc_with("d", 2, &[(0, 1, Label::Cause)]);
        let pairs = enumerate_pairs(&d);
        let ab = pairs.iter().find(|p| p.src == 0 && p.dst == 1).unwrap();
        let ba = pairs.iter().find(|p| p.src == 1 && p.dst == 0).unwrap();
        assert_eq!(
            ab.labels,
            PairLabels { causal: Label::Cause, ..PairLabels::default() }
        );
        assert!(ba.labels.is_all_none());
    }

    #[test]
    fn coreference_symmetrized() {
        let d = doc_with("d", 2, &[(0, 1, Label::Coref)]);
        let pairs = enumerate_pairs(&d);
        assert!(pairs.iter().all(|p| p.labels.coreference == Label::Coref));
        assert_eq!(d.gold_clusters(), vec![vec!["m0".to_string(), "m1".to_string()]]);
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        let err = Corpus::new(vec![doc_with("x", 1, &[]), doc_with("x", 2, &[])]).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn validate_catches_bad_span() {
        let mut d = doc_with("d", 2, &[]);
        d.mentions[1].end = 9;
        assert!(d.validate().is_err());
        let mut d = doc_with("d", 2, &[]);
        d.mentions[0].start = 2;
        assert!(d.validate().is_err());
    }

    #[test]
    fn stats_count_pairs_per_label() {
        let c = Corpus::new(vec![doc_with("a", 3, &[(0, 1, Label::Before), (0, 1, Label::Cause)])]).unwrap();
        let s = c.stats();
        assert_eq!(s.pairs, 6);
        assert_eq!(s.mentions, 3);
        assert_eq!(s.label_counts["Before"], 1);
        assert_eq!(s.label_counts["None(temporal)"], 5);
        assert_eq!(s.label_counts["None(coref.)"], 6);
    }
}
