use std::collections::{BTreeMap, HashSet};

use super::document::{Document, SemanticType};
use crate::error::{Error, Result};

/// KB id marking a mention that was not grounded.
pub const UNGROUNDED: &str = "-1";

/// Drops ungrounded mentions, then entities left without mentions, then
/// relations that referenced a dropped entity. Indices are renumbered.
pub fn filter_ungrounded(doc: &Document) -> Document {
    let keep_entity: Vec<bool> = doc.entities.iter().map(|e| e.kb_id != UNGROUNDED).collect();
    let mut entity_map = vec![None; doc.entities.len()];
    let mut out = Document {
        doc_id: doc.doc_id.clone(),
        title: doc.title.clone(),
        abstract_text: doc.abstract_text.clone(),
        sentences: doc.sentences.clone(),
        mentions: Vec::new(),
        entities: Vec::new(),
        relations: Vec::new(),
    };
    for (i, e) in doc.entities.iter().enumerate() {
        if keep_entity[i] && !e.mentions.is_empty() {
            entity_map[i] = Some(out.entities.len());
            let mut e = e.clone();
            e.mentions.clear();
            out.entities.push(e);
        }
    }
    for m in &doc.mentions {
        if let Some(e) = entity_map[m.entity] {
            let mut m = m.clone();
            m.entity = e;
            out.entities[e].mentions.push(out.mentions.len());
            out.mentions.push(m);
        }
    }
    for r in &doc.relations {
        if let (Some(h), Some(t)) = (entity_map[r.head], entity_map[r.tail]) {
            let mut r = r.clone();
            r.head = h;
            r.tail = t;
            out.relations.push(r);
        }
    }
    out
}

/// A candidate concept-level pair; `category` is `None` for no relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CandidatePair {
    pub head: usize,
    pub tail: usize,
    pub category: Option<usize>,
}

/// Every ordered (head-type entity, tail-type entity) pair in entity order.
pub fn generate_pairs(
    doc: &Document,
    head_type: SemanticType,
    tail_type: SemanticType,
) -> Vec<CandidatePair> {
    let heads = doc
        .entities
        .iter()
        .enumerate()
        .filter(|(_, e)| e.semantic_type == head_type);
    let mut pairs = Vec::new();
    for (h, _) in heads {
        for (t, e) in doc.entities.iter().enumerate() {
            if t == h || e.semantic_type != tail_type {
                continue;
            }
            let category = doc
                .relations
                .iter()
                .find(|r| r.head == h && r.tail == t)
                .map(|r| r.category);
            pairs.push(CandidatePair {
                head: h,
                tail: t,
                category,
            });
        }
    }
    pairs
}

/// Concatenates two splits, rejecting a document id seen twice.
pub fn merge_train_dev(train: Vec<Document>, dev: Vec<Document>) -> Result<Vec<Document>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(train.len() + dev.len());
    for d in train.into_iter().chain(dev) {
        if !seen.insert(d.doc_id.clone()) {
            return Err(Error::DuplicateDocument(d.doc_id));
        }
        out.push(d);
    }
    Ok(out)
}

/// Pairs to leave out of scoring (and optionally training), keyed by
/// `(doc_id, head KB id, tail KB id)`.
#[derive(Clone, Debug, Default)]
pub struct ExclusionList {
    pairs: HashSet<(String, String, String)>,
}

impl ExclusionList {
    /// One `doc_id<TAB>head_kb<TAB>tail_kb` entry per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: "expected doc_id, head id and tail id separated by tabs".into(),
                });
            }
            pairs.insert((f[0].to_string(), f[1].to_string(), f[2].to_string()));
        }
        Ok(Self { pairs })
    }

    pub fn contains(&self, doc: &str, head: &str, tail: &str) -> bool {
        self.pairs
            .contains(&(doc.to_string(), head.to_string(), tail.to_string()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Counts in the shape of a dataset statistics table.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub positive_pairs: usize,
    pub positive_intra: usize,
    pub positive_inter: usize,
    pub negative_pairs: usize,
    pub entities: BTreeMap<String, usize>,
    pub mentions: BTreeMap<String, usize>,
}

pub fn corpus_stats(docs: &[Document], head: SemanticType, tail: SemanticType) -> CorpusStats {
    let mut st = CorpusStats {
        documents: docs.len(),
        ..Default::default()
    };
    for d in docs {
        for e in &d.entities {
            *st.entities.entry(e.semantic_type.to_string()).or_default() += 1;
        }
        for m in &d.mentions {
            *st.mentions.entry(m.semantic_type.to_string()).or_default() += 1;
        }
        for p in generate_pairs(d, head, tail) {
            if p.category.is_some() {
                st.positive_pairs += 1;
                if crate::eval::pair_locality(d, p.head, p.tail).0 {
                    st.positive_intra += 1;
                } else {
                    st.positive_inter += 1;
                }
            } else {
                st.negative_pairs += 1;
            }
        }
    }
    st
}
