use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{enumerate_pairs, Corpus, Document, Label};
use crate::error::{Error, Result};

/// Example selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Most frequent trigger pairs first, one instance per distinct trigger
    /// pair before any repeats.
    #[default]
    Topk,
    Random,
}

/// A short text containing two related events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: Vec<String>,
    /// Half-open token intervals into `text`.
    pub span_e1: (usize, usize),
    pub span_e2: (usize, usize),
    pub label: Label,
    pub doc_id: String,
    pub src: String,
    pub dst: String,
}

/// Token budget for an example text before it is reduced to the two
/// mention sentences.
pub const EXAMPLE_MAX_TOKENS: usize = 510;

fn build_example(doc: &Document, src: usize, dst: usize, label: Label) -> Option<Example> {
    let (a, b) = (&doc.mentions[src], &doc.mentions[dst]);
    if a.overlaps(b) {
        return None;
    }
    let (lo, hi) = (a.sent_idx.min(b.sent_idx), a.sent_idx.max(b.sent_idx));
    let covering: usize = doc.sentences[lo..=hi].iter().map(Vec::len).sum();
    let sents: Vec<usize> = if covering <= EXAMPLE_MAX_TOKENS || lo == hi {
        (lo..=hi).collect()
    } else {
        vec![lo, hi]
    };
    let mut text = Vec::new();
    let mut offsets = HashMap::new();
    for s in sents {
        offsets.insert(s, text.len());
        text.extend(doc.sentences[s].iter().cloned());
    }
    let span = |m: &super::EventMention| (offsets[&m.sent_idx] + m.start, offsets[&m.sent_idx] + m.end);
    Some(Example {
        text,
        span_e1: span(a),
        span_e2: span(b),
        label,
        doc_id: doc.doc_id.clone(),
        src: a.mention_id.clone(),
        dst: b.mention_id.clone(),
    })
}

/// Pick up to `k` example pairs carrying `label`.
pub fn select_examples(corpus: &Corpus, label: Label, k: usize, strategy: Selection, seed: u64) -> Result<Vec<Example>> {
    if label.is_none() {
        return Err(Error::NoneLabelExamples(label.display_name()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("example count K must be at least 1".into()));
    }
    let task = label.task();
    // (trigger-pair key, doc_id, src id, dst id, doc index, src, dst)
    let mut cands = Vec::new();
    for (di, doc) in corpus.documents.iter().enumerate() {
        for p in enumerate_pairs(doc) {
            if p.labels.get(task) != label || doc.mentions[p.src].overlaps(&doc.mentions[p.dst]) {
                continue;
            }
            let key = (
                doc.mention_text(&doc.mentions[p.src]).to_lowercase(),
                doc.mention_text(&doc.mentions[p.dst]).to_lowercase(),
            );
            cands.push((key, di, p.src, p.dst));
        }
    }
    let ids = |c: &(( String, String), usize, usize, usize)| {
        let d = &corpus.documents[c.1];
        (d.doc_id.clone(), d.mentions[c.2].mention_id.clone(), d.mentions[c.3].mention_id.clone())
    };
    let chosen: Vec<_> = match strategy {
        Selection::Topk => {
            let mut freq: HashMap<(String, String), usize> = HashMap::new();
            for c in &cands {
                *freq.entry(c.0.clone()).or_default() += 1;
            }
            cands.sort_by_cached_key(|c| (std::cmp::Reverse(freq[&c.0]), ids(c), c.0.clone()));
            let mut seen = std::collections::HashSet::new();
            let (first, rest): (Vec<_>, Vec<_>) = cands.into_iter().partition(|c| seen.insert(c.0.clone()));
            first.into_iter().chain(rest).take(k).collect()
        }
        Selection::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            cands.shuffle(&mut rng);
            cands.into_iter().take(k).collect()
        }
    };
    Ok(chosen
        .into_iter()
        .filter_map(|c| build_example(&corpus.documents[c.1], c.2, c.3, label))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::testutil::doc_with;
    use super::*;

    fn corpus() -> Corpus {
        let rels: Vec<(usize, usize, Label)> = vec![
            (0, 1, Label::Before),
            (1, 2, Label::Before),
            (2, 3, Label::Before),
            (0, 3, Label::Before),
            (3, 4, Label::Before),
            (0, 1, Label::Cause),
            (3, 4, Label::Cause),
        ];
        Corpus::new(vec![doc_with("a", 5, &rels), doc_with("b", 5, &rels[..3])]).unwrap()
    }

    #[test]
    fn capped_by_availability() {
        let c = corpus();
        let ex = select_examples(&c, Label::Cause, 5, Selection::Topk, 0).unwrap();
        assert_eq!(ex.len(), 2);
        assert!(ex.iter().all(|e| e.label == Label::Cause));
    }

    #[test]
    fn exactly_k_when_available() {
        let c = corpus();
        let ex = select_examples(&c, Label::Before, 5, Selection::Topk, 0).unwrap();
        assert_eq!(ex.len(), 5);
        let ex = select_examples(&c, Label::Before, 3, Selection::Random, 1).unwrap();
        assert_eq!(ex.len(), 3);
    }

    #[test]
    fn topk_prefers_frequent_trigger_pairs_and_ignores_seed() {
        let c = corpus();
        let a = select_examples(&c, Label::Before, 3, Selection::Topk, 1).unwrap();
        let b = select_examples(&c, Label::Before, 3, Selection::Topk, 99).unwrap();
        assert_eq!(a, b);
        // (event0, event1), (event1, event2), (event2, event3) occur in both documents
        let keys: Vec<_> = a.iter().map(|e| (e.src.clone(), e.dst.clone(), e.doc_id.clone())).collect();
        assert_eq!(
            keys,
            vec![
                ("m0".into(), "m1".into(), "a".into()),
                ("m1".into(), "m2".into(), "a".into()),
                ("m2".into(), "m3".into(), "a".into())
            ]
        );
    }

    #[test]
    fn random_is_seeded() {
        let c = corpus();
        let a = select_examples(&c, Label::Before, 3, Selection::Random, 7).unwrap();
        let b = select_examples(&c, Label::Before, 3, Selection::Random, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn none_label_rejected() {
        let c = corpus();
        assert!(matches!(
            select_examples(&c, Label::NoneCausal, 5, Selection::Topk, 0),
            Err(Error::NoneLabelExamples(_))
        ));
        assert!(select_examples(&c, Label::Cause, 0, Selection::Topk, 0).is_err());
    }

    #[test]
    fn example_text_spans_covering_sentences() {
        let c = corpus();
        let ex = &select_examples(&c, Label::Before, 5, Selection::Topk, 0).unwrap()[0];
        // mentions at token 1 of sentences 0 and 1, three tokens per sentence
        assert_eq!(ex.text.len(), 6);
        assert_eq!(ex.span_e1, (1, 2));
        assert_eq!(ex.span_e2, (4, 5));
        assert_eq!(ex.text[ex.span_e1.0], "event0");
        assert_eq!(ex.text[ex.span_e2.0], "event1");
    }
}
