//! Seeded generator for small synthetic corpora in the document schema.
//!
//! Documents are built from sentence templates whose trigger words and
//! connectives determine the gold relations, so a model can learn them from
//! a handful of documents. Used by the smoke-training tests and the runnable
//! examples; real data goes through [`super::load_corpus`].

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Document, EventMention, GoldRelations, Label};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub documents: usize,
    pub seed: u64,
    /// Filler sentences without events per document (inclusive range).
    pub filler: (usize, usize),
    /// Probability that an event is mentioned a second time.
    pub repeat_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { documents: 15, seed: 13, filler: (1, 3), repeat_prob: 0.5 }
    }
}

const CAUSE_STRONG: [&str; 3] = ["storm", "earthquake", "explosion"];
const CAUSE_WEAK: [&str; 3] = ["drought", "strike", "shortage"];
const EFFECTS: [&str; 5] = ["damage", "evacuation", "famine", "collapse", "outage"];
const PARENTS: [&str; 4] = ["war", "campaign", "festival", "summit"];
const CHILDREN: [&str; 4] = ["battle", "siege", "parade", "speech"];
const MISC: [&str; 6] = ["meeting", "election", "visit", "ceremony", "trial", "concert"];

const SINGLE: [&str; 5] = [
    "reports described the {} in detail .",
    "many residents remembered the {} for years .",
    "the press covered the {} extensively .",
    "later that week the {} was discussed again .",
    "officials commented on the {} at length .",
];
const FILLER: [&str; 4] = [
    "the weather was mild that season .",
    "local newspapers printed several long stories .",
    "historians still debate many of the details .",
    "the city council met on a regular schedule .",
];
const CAUSAL: [&str; 2] = ["the {} led to the {} across the region .", "soon after the {} came the {} in the capital ."];
const SUB: [&str; 2] = ["the {} included the {} near the border .", "as part of the {} there was a {} downtown ."];
const CONNECTIVES: [(&str, Label); 4] = [
    ("during", Label::Overlap),
    ("while", Label::Simultaneous),
    ("until", Label::EndsOn),
    ("from", Label::BeginsOn),
];

struct Builder {
    doc_id: String,
    sentences: Vec<Vec<String>>,
    mentions: Vec<EventMention>,
    gold_events: Vec<(String, String, Label)>,
    next: usize,
}

impl Builder {
    fn event_id(&mut self) -> String {
        self.next += 1;
        format!("E{}", self.next)
    }

    /// Push a sentence; `slots` gives (trigger, event id) for each `{}`.
    fn sentence(&mut self, template: &str, slots: &[(&str, &str)]) {
        let mut tokens = Vec::new();
        let mut slot = 0;
        for tok in template.split_whitespace() {
            if tok == "{}" {
                let (trig, eid) = slots[slot];
                slot += 1;
                let id = format!("M{}", self.mentions.len() + 1);
                self.mentions.push(EventMention {
                    mention_id: id,
                    sent_idx: self.sentences.len(),
                    start: tokens.len(),
                    end: tokens.len() + 1,
                    event_id: eid.to_string(),
                });
                tokens.push(trig.to_string());
            } else {
                tokens.push(tok.to_string());
            }
        }
        self.sentences.push(tokens);
    }

    fn finish(self) -> Document {
        let mut gold = GoldRelations::new();
        for m in &self.mentions {
            for n in &self.mentions {
                if m.event_id == n.event_id {
                    gold.insert(&m.mention_id, &n.mention_id, Label::Coref);
                }
            }
        }
        for (a, b, l) in &self.gold_events {
            for m in self.mentions.iter().filter(|m| &m.event_id == a) {
                for n in self.mentions.iter().filter(|n| &n.event_id == b) {
                    gold.insert(&m.mention_id, &n.mention_id, *l);
                }
            }
        }
        Document { doc_id: self.doc_id, sentences: self.sentences, mentions: self.mentions, timex: vec![], gold }
    }
}

enum Block {
    Causal,
    Sub,
    Misc,
    Filler,
}

/// Generate `cfg.documents` documents deterministically from `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let docs = (0..cfg.documents).map(|i| generate_document(&mut rng, cfg, i)).collect();
    Corpus::new(docs).expect("generated doc ids are unique")
}

/// Document `index` uses connective `index % 4` and a strong first cause on
/// even indices, so any four consecutive documents support every label.
fn generate_document(rng: &mut ChaCha8Rng, cfg: &SynthConfig, index: usize) -> Document {
    let mut b = Builder {
        doc_id: format!("synth-{index:04}"),
        sentences: Vec::new(),
        mentions: Vec::new(),
        gold_events: Vec::new(),
        next: 0,
    };
    let mut blocks = vec![Block::Causal, Block::Sub, Block::Misc];
    if rng.random_bool(0.5) {
        blocks.push(Block::Causal);
    }
    for _ in 0..rng.random_range(cfg.filler.0..=cfg.filler.1) {
        blocks.push(Block::Filler);
    }
    blocks.shuffle(rng);

    let mut repeatable: Vec<(String, String)> = Vec::new();
    let mut first_causal = true;
    for block in blocks {
        match block {
            Block::Causal => {
                let strong = if first_causal { index % 2 == 0 } else { rng.random_bool(0.5) };
                first_causal = false;
                let cause = *if strong { &CAUSE_STRONG } else { &CAUSE_WEAK }.choose(rng).unwrap();
                let effect = *EFFECTS.choose(rng).unwrap();
                let (ec, ee) = (b.event_id(), b.event_id());
                b.sentence(CAUSAL.choose(rng).unwrap(), &[(cause, &ec), (effect, &ee)]);
                b.gold_events.push((ec.clone(), ee.clone(), Label::Before));
                let causal = if strong { Label::Cause } else { Label::Precondition };
                b.gold_events.push((ec.clone(), ee.clone(), causal));
                repeatable.push((cause.to_string(), ec));
            }
            Block::Sub => {
                let parent = *PARENTS.choose(rng).unwrap();
                let child = *CHILDREN.choose(rng).unwrap();
                let (ep, ech) = (b.event_id(), b.event_id());
                b.sentence(SUB.choose(rng).unwrap(), &[(parent, &ep), (child, &ech)]);
                b.gold_events.push((ep.clone(), ech.clone(), Label::Contains));
                b.gold_events.push((ep.clone(), ech, Label::Subevent));
                repeatable.push((parent.to_string(), ep));
            }
            Block::Misc => {
                let mut pick = MISC.choose_multiple(rng, 2);
                let (x, y) = (*pick.next().unwrap(), *pick.next().unwrap());
                let (conn, label) = CONNECTIVES[index % CONNECTIVES.len()];
                let (ex, ey) = (b.event_id(), b.event_id());
                let template = format!("the {{}} happened {conn} the {{}} .");
                b.sentence(&template, &[(x, &ex), (y, &ey)]);
                b.gold_events.push((ex, ey, label));
            }
            Block::Filler => {
                b.sentence(FILLER.choose(rng).unwrap(), &[]);
            }
        }
    }
    for (trigger, eid) in repeatable {
        if rng.random_bool(cfg.repeat_prob) {
            b.sentence(SINGLE.choose(rng).unwrap(), &[(&trigger, &eid)]);
        }
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{compute_cooccurrence, Task};

    #[test]
    fn deterministic_and_valid() {
        let a = generate(&SynthConfig::default());
        let b = generate(&SynthConfig::default());
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
        for d in &a.documents {
            d.validate().unwrap();
            assert!(d.mentions.len() >= 6);
        }
    }

    #[test]
    fn every_non_none_label_has_support_somewhere() {
        let c = generate(&SynthConfig { documents: 4, ..Default::default() });
        let stats = c.stats();
        for l in crate::corpus::Label::ALL {
            assert!(stats.label_counts[&l.display_name()] > 0, "{l} unsupported");
        }
        let g = compute_cooccurrence(&c).unwrap();
        assert_eq!(g.weight(Label::Subevent, Label::Contains), 1.0);
        assert_eq!(g.weight(Label::Cause, Label::Before), 1.0);
        let _ = Task::ALL;
    }
}
