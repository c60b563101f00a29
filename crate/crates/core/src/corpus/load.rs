//! Line-delimited JSON document records.
//!
//! Each line holds one document:
//!
//! ```json
//! {"id": "d1", "tokens": [["The", "flood", "..."]],
//!  "events": [{"id": "E1", "mention": [{"id": "M1", "sent_id": 0, "offset": [1, 2]}]}],
//!  "TIMEX": [{"id": "T1", "sent_id": 0, "offset": [4, 5]}],
//!  "temporal_relations": {"BEFORE": [["E1", "E2"]]},
//!  "causal_relations": [["M1", "M2", "CAUSE"]],
//!  "subevent_relations": [["E3", "E4"]],
//!  "coreference_relations": [["M5", "M6"]]}
//! ```
//!
//! Relation lists come either as a label-keyed object of `[src, dst]` pairs
//! or as a flat list of `[src, dst, label]` triples; subevent and
//! coreference pairs may omit the label. Endpoints may name an event (the
//! relation then holds for every mention pair across the two events) or a
//! single mention. Relations touching a TIMEX are dropped: candidate pairs
//! range over event mentions only. Mentions sharing an event are coreferent.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{enumerate_pairs, Corpus, Document, EventMention, GoldRelations, Label, Task};
use crate::error::{Error, Result};

/// Read a corpus from a line-delimited file. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut docs = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: lineno, message };
        let value: Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let doc = parse_document(&value).map_err(|e| match e {
            Error::InvalidArgument(m) | Error::Schema(m) => parse_err(m),
            other => other,
        })?;
        if let Some(prev) = seen.insert(doc.doc_id.clone(), lineno) {
            return Err(Error::Integrity(format!(
                "duplicate doc_id {} on lines {prev} and {lineno} of {}",
                doc.doc_id,
                path.display()
            )));
        }
        docs.push(doc);
    }
    Corpus::new(docs)
}

fn field<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| v.get(*k))
}

fn as_str(v: &Value, what: &str) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(Error::Schema(format!("{what} must be a string"))),
    }
}

fn as_usize(v: &Value, what: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::Schema(format!("{what} must be a non-negative integer")))
}

fn parse_span(m: &Value, what: &str) -> Result<(String, usize, usize, usize)> {
    let id = as_str(field(m, &["id"]).ok_or_else(|| Error::Schema(format!("{what} missing id")))?, "mention id")?;
    let sent = as_usize(
        field(m, &["sent_id", "sent_idx"]).ok_or_else(|| Error::Schema(format!("{what} {id} missing sent_id")))?,
        "sent_id",
    )?;
    let off = field(m, &["offset", "span"])
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Schema(format!("{what} {id} missing offset")))?;
    if off.len() != 2 {
        return Err(Error::Schema(format!("{what} {id} offset must be [start, end)")));
    }
    Ok((id, sent, as_usize(&off[0], "offset")?, as_usize(&off[1], "offset")?))
}

struct RawRelation {
    src: String,
    dst: String,
    label: Label,
}

fn parse_relations(v: Option<&Value>, task: Task) -> Result<Vec<RawRelation>> {
    let default_label = match task {
        Task::Subevent => Some(Label::Subevent),
        Task::Coreference => Some(Label::Coref),
        _ => None,
    };
    let mut out = Vec::new();
    let pair = |item: &Value, label: Option<Label>| -> Result<RawRelation> {
        let arr = item
            .as_array()
            .ok_or_else(|| Error::Schema(format!("{task} relation must be an array")))?;
        let label = match (arr.len(), label) {
            (2, Some(l)) => l,
            (3, _) => task.parse_label(&as_str(&arr[2], "relation label")?)?,
            (2, None) => return Err(Error::Schema(format!("{task} relation needs a label"))),
            _ => return Err(Error::Schema(format!("{task} relation must be [src, dst] or [src, dst, label]"))),
        };
        Ok(RawRelation { src: as_str(&arr[0], "relation source")?, dst: as_str(&arr[1], "relation target")?, label })
    };
    match v {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for item in items {
                out.push(pair(item, default_label)?);
            }
        }
        Some(Value::Object(map)) => {
            for (name, items) in map {
                let label = task.parse_label(name)?;
                let items = items
                    .as_array()
                    .ok_or_else(|| Error::Schema(format!("{task} relations under {name} must be a list")))?;
                for item in items {
                    out.push(pair(item, Some(label))?);
                }
            }
        }
        Some(_) => return Err(Error::Schema(format!("{task} relations must be a list or an object"))),
    }
    Ok(out)
}

/// Parse one document record.
pub fn parse_document(v: &Value) -> Result<Document> {
    let doc_id = as_str(field(v, &["id", "doc_id"]).ok_or_else(|| Error::Schema("missing id".into()))?, "id")?;
    let sentences: Vec<Vec<String>> = field(v, &["tokens", "sentences"])
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Schema(format!("{doc_id}: missing tokens")))?
        .iter()
        .map(|s| {
            s.as_array()
                .ok_or_else(|| Error::Schema(format!("{doc_id}: tokens must be a list of token lists")))?
                .iter()
                .map(|t| as_str(t, "token"))
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut mentions = Vec::new();
    // event id -> mention ids
    let mut events: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for ev in field(v, &["events"]).and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[]) {
        let eid = as_str(ev.get("id").ok_or_else(|| Error::Schema(format!("{doc_id}: event missing id")))?, "event id")?;
        let ms = field(ev, &["mention", "mentions"])
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Schema(format!("{doc_id}: event {eid} has no mention list")))?;
        for m in ms {
            let (id, sent_idx, start, end) = parse_span(m, "mention")?;
            events.entry(eid.clone()).or_default().push(id.clone());
            mentions.push(EventMention { mention_id: id, sent_idx, start, end, event_id: eid.clone() });
        }
    }
    let mut timex = Vec::new();
    for t in field(v, &["TIMEX", "timex"]).and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[]) {
        let (id, sent_idx, start, end) = parse_span(t, "TIMEX")?;
        timex.push(EventMention { event_id: id.clone(), mention_id: id, sent_idx, start, end });
    }
    let timex_ids: BTreeSet<&str> = timex.iter().map(|t| t.mention_id.as_str()).collect();
    let mention_ids: BTreeSet<&str> = mentions.iter().map(|m| m.mention_id.as_str()).collect();

    let resolve = |id: &str| -> Result<Option<Vec<String>>> {
        if let Some(ms) = events.get(id) {
            Ok(Some(ms.clone()))
        } else if mention_ids.contains(id) {
            Ok(Some(vec![id.to_string()]))
        } else if timex_ids.contains(id) {
            Ok(None)
        } else {
            Err(Error::Integrity(format!("{doc_id}: relation endpoint {id} is not a known event, mention or TIMEX")))
        }
    };

    let mut gold = GoldRelations::new();
    for ms in events.values() {
        for a in ms {
            for b in ms {
                gold.insert(a, b, Label::Coref);
            }
        }
    }
    let keys: [(Task, &[&str]); 4] = [
        (Task::Temporal, &["temporal_relations"]),
        (Task::Causal, &["causal_relations"]),
        (Task::Subevent, &["subevent_relations"]),
        (Task::Coreference, &["coreference_relations", "coref_relations"]),
    ];
    for (task, names) in keys {
        for rel in parse_relations(field(v, names), task)? {
            let (Some(srcs), Some(dsts)) = (resolve(&rel.src)?, resolve(&rel.dst)?) else {
                continue;
            };
            for s in &srcs {
                for d in &dsts {
                    gold.insert(s, d, rel.label);
                }
            }
        }
    }

    let doc = Document { doc_id, sentences, mentions, timex, gold };
    doc.validate()?;
    Ok(doc)
}

/// Canonical record for a document (mention-level triples).
pub fn document_record(doc: &Document) -> Value {
    let mut events: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for m in &doc.mentions {
        if !events.contains_key(m.event_id.as_str()) {
            order.push(&m.event_id);
        }
        events
            .entry(&m.event_id)
            .or_default()
            .push(json!({"id": m.mention_id, "sent_id": m.sent_idx, "offset": [m.start, m.end]}));
    }
    let events: Vec<Value> = order.iter().map(|e| json!({"id": e, "mention": events[e]})).collect();
    let timex: Vec<Value> = doc
        .timex
        .iter()
        .map(|t| json!({"id": t.mention_id, "sent_id": t.sent_idx, "offset": [t.start, t.end]}))
        .collect();
    let rels = |task: Task| -> Vec<Value> {
        doc.gold
            .for_task(task)
            .map(|r| json!([r.src, r.dst, r.label.short_name().to_ascii_uppercase()]))
            .collect()
    };
    // coreference across mentions of different events needs an explicit list
    let coref: Vec<Value> = doc
        .gold
        .for_task(Task::Coreference)
        .filter(|r| {
            let ev = |id: &str| doc.mentions.iter().find(|m| m.mention_id == id).map(|m| m.event_id.as_str());
            ev(&r.src) != ev(&r.dst) && r.src < r.dst
        })
        .map(|r| json!([r.src, r.dst]))
        .collect();
    let mut record = json!({
        "id": doc.doc_id,
        "tokens": doc.sentences,
        "events": events,
        "TIMEX": timex,
        "temporal_relations": rels(Task::Temporal),
        "causal_relations": rels(Task::Causal),
        "subevent_relations": rels(Task::Subevent),
    });
    if !coref.is_empty() {
        record["coreference_relations"] = Value::Array(coref);
    }
    record
}

/// Write a corpus in the line-delimited record format.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for d in &corpus.documents {
        serde_json::to_writer(&mut w, &document_record(d))?;
        w.write_all(b"\n").map_err(|e| Error::io("writing corpus", e))?;
    }
    w.flush().map_err(|e| Error::io("writing corpus", e))
}

/// One row of the preprocessed pair table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub doc_id: String,
    pub src: String,
    pub dst: String,
    pub coreference: String,
    pub temporal: String,
    pub causal: String,
    pub subevent: String,
}

/// Write every ordered pair with its four labels as line-delimited JSON.
pub fn write_pair_table(corpus: &Corpus, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for d in &corpus.documents {
        for p in enumerate_pairs(d) {
            let rec = PairRecord {
                doc_id: d.doc_id.clone(),
                src: d.mentions[p.src].mention_id.clone(),
                dst: d.mentions[p.dst].mention_id.clone(),
                coreference: p.labels.coreference.short_name().to_string(),
                temporal: p.labels.temporal.short_name().to_string(),
                causal: p.labels.causal.short_name().to_string(),
                subevent: p.labels.subevent.short_name().to_string(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io("writing pair table", e))?;
            n += 1;
        }
    }
    w.flush().map_err(|e| Error::io("writing pair table", e))?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Value {
        json!({
            "id": "doc1",
            "tokens": [["The", "flood", "caused", "damage", "."], ["Officials", "reported", "the", "flooding", "on", "Monday"]],
            "events": [
                {"id": "E1", "mention": [{"id": "M1", "sent_id": 0, "offset": [1, 2]}, {"id": "M4", "sent_id": 1, "offset": [3, 4]}]},
                {"id": "E2", "mention": [{"id": "M2", "sent_id": 0, "offset": [3, 4]}]},
                {"id": "E3", "mention": [{"id": "M3", "sent_id": 1, "offset": [1, 2]}]}
            ],
            "TIMEX": [{"id": "T1", "sent_id": 1, "offset": [5, 6]}],
            "temporal_relations": {"BEFORE": [["E1", "E2"]], "CONTAINS": [["T1", "E3"]]},
            "causal_relations": [["E1", "E2", "CAUSE"]],
            "subevent_relations": []
        })
    }

    #[test]
    fn event_level_relations_project_onto_mentions() {
        let d = parse_document(&sample()).unwrap();
        assert_eq!(d.mentions.len(), 4);
        assert_eq!(d.timex.len(), 1);
        let before: Vec<_> = d.gold.for_task(Task::Temporal).collect();
        // E1 has two mentions -> two Before pairs, TIMEX relation dropped
        assert_eq!(before.len(), 2);
        assert!(before.iter().all(|r| r.dst == "M2" && r.label == Label::Before));
        let coref: Vec<_> = d.gold.for_task(Task::Coreference).collect();
        assert_eq!(coref.len(), 2);
        assert_eq!(d.gold_clusters().len(), 3);
    }

    #[test]
    fn round_trip_through_canonical_record() {
        let d = parse_document(&sample()).unwrap();
        let again = parse_document(&document_record(&d)).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{}", sample()).unwrap();
        writeln!(f, "{{not json").unwrap();
        let err = load_corpus(f.path()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_doc_id_is_integrity_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{}", sample()).unwrap();
        writeln!(f, "{}", sample()).unwrap();
        assert!(matches!(load_corpus(f.path()).unwrap_err(), Error::Integrity(_)));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let c = load_corpus(f.path()).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.stats().mentions, 0);
    }

    #[test]
    fn unknown_label_is_parse_error() {
        let mut v = sample();
        v["causal_relations"] = json!([["E1", "E2", "BECAUSE"]]);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{v}").unwrap();
        assert!(matches!(load_corpus(f.path()).unwrap_err(), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn explicit_mention_level_coreference_accepted() {
        let mut v = sample();
        v["coreference_relations"] = json!([["M2", "M3"]]);
        let d = parse_document(&v).unwrap();
        assert_eq!(d.gold_clusters().len(), 2);
    }
}
