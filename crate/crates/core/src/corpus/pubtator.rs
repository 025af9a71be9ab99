//! Reader and writer for the PubTator annotation layout.
//!
//! ```text
//! 227508|t|Naloxone reverses the antihypertensive effect of clonidine.
//! 227508|a|In unanesthetized, spontaneously hypertensive rats ...
//! 227508	0	8	Naloxone	Chemical	D009270
//! 227508	CID	D008750	D007022
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use super::document::{Document, Entity, Mention, RelationLabel, SemanticType};
use super::tokenize::tokenize_from;
use crate::error::{Error, Result};

/// Parsed corpus plus counts of records that could not be attached.
#[derive(Clone, Debug, Default)]
pub struct Parsed {
    pub documents: Vec<Document>,
    /// Relation names in order of first appearance; the position is the category.
    pub relation_names: Vec<String>,
    pub dropped_relations: usize,
    pub dropped_annotations: usize,
}

struct RawAnnotation {
    start: usize,
    end: usize,
    surface: String,
    kind: String,
    kb_ids: String,
}

#[derive(Default)]
struct RawDoc {
    pmid: String,
    title: Option<String>,
    abstract_text: Option<String>,
    annotations: Vec<RawAnnotation>,
    relations: Vec<(String, String, String)>,
    line: usize,
}

pub fn parse_pubtator(text: &str) -> Result<Parsed> {
    let mut raws = Vec::new();
    let mut current: Option<RawDoc> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            raws.extend(current.take());
            continue;
        }
        let malformed = |message: &str| Error::Malformed {
            line: lineno,
            message: message.to_string(),
        };
        if let Some((pmid, rest)) = split_header(line, "|t|") {
            raws.extend(current.take());
            current = Some(RawDoc {
                pmid: pmid.to_string(),
                title: Some(rest.to_string()),
                line: lineno,
                ..Default::default()
            });
            continue;
        }
        if let Some((pmid, rest)) = split_header(line, "|a|") {
            let doc = current
                .as_mut()
                .filter(|d| d.pmid == pmid)
                .ok_or_else(|| malformed("abstract line without a matching title line"))?;
            doc.abstract_text = Some(rest.to_string());
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let doc = current
            .as_mut()
            .ok_or_else(|| malformed("annotation outside of a document"))?;
        if fields[0] != doc.pmid {
            return Err(malformed(&format!(
                "document id `{}` does not match current document `{}`",
                fields[0], doc.pmid
            )));
        }
        match fields.len() {
            n if n >= 6 && fields[1].parse::<usize>().is_ok() => {
                let start = fields[1].parse().unwrap();
                let end: usize = fields[2]
                    .parse()
                    .map_err(|_| malformed("annotation end offset is not an integer"))?;
                if end <= start {
                    return Err(malformed("annotation end offset precedes its start"));
                }
                doc.annotations.push(RawAnnotation {
                    start,
                    end,
                    surface: fields[3].to_string(),
                    kind: fields[4].to_string(),
                    kb_ids: fields[5].to_string(),
                });
            }
            4 => doc.relations.push((
                fields[1].to_string(),
                fields[2].to_string(),
                fields[3].to_string(),
            )),
            _ => return Err(malformed("expected an annotation or a relation line")),
        }
    }
    raws.extend(current.take());

    let mut parsed = Parsed::default();
    let mut categories: HashMap<String, usize> = HashMap::new();
    for raw in raws {
        let doc = build_document(raw, &mut parsed, &mut categories)?;
        parsed.documents.push(doc);
    }
    Ok(parsed)
}

fn split_header<'a>(line: &'a str, tag: &str) -> Option<(&'a str, &'a str)> {
    let pos = line.find(tag)?;
    let pmid = &line[..pos];
    if pmid.is_empty() || pmid.contains('\t') {
        return None;
    }
    Some((pmid, &line[pos + tag.len()..]))
}

fn build_document(
    raw: RawDoc,
    parsed: &mut Parsed,
    categories: &mut HashMap<String, usize>,
) -> Result<Document> {
    let title = raw.title.unwrap_or_default();
    let abstract_text = raw.abstract_text.ok_or_else(|| Error::Malformed {
        line: raw.line,
        message: format!("document {} has no abstract line", raw.pmid),
    })?;
    let title_chars = title.chars().count();
    let mut sentences = tokenize_from(&title, 0, 0);
    let n_title = sentences.len();
    sentences.extend(tokenize_from(&abstract_text, title_chars + 1, n_title));

    let mut doc = Document {
        doc_id: raw.pmid,
        title,
        abstract_text,
        sentences,
        mentions: Vec::new(),
        entities: Vec::new(),
        relations: Vec::new(),
    };

    for ann in &raw.annotations {
        let Ok(semantic_type) = ann.kind.parse::<SemanticType>() else {
            parsed.dropped_annotations += 1;
            continue;
        };
        let Some((sentence, token_start, token_end)) = covering_span(&doc, ann.start, ann.end)
        else {
            parsed.dropped_annotations += 1;
            continue;
        };
        // composite mentions carry several ids joined by `|`
        for kb in ann.kb_ids.split('|').filter(|k| !k.is_empty()) {
            let entity = match doc.entity_by_kb(kb) {
                Some(e) if doc.entities[e].semantic_type != semantic_type => {
                    parsed.dropped_annotations += 1;
                    continue;
                }
                Some(e) => e,
                None => {
                    doc.entities.push(Entity {
                        kb_id: kb.to_string(),
                        semantic_type,
                        mentions: Vec::new(),
                    });
                    doc.entities.len() - 1
                }
            };
            doc.entities[entity].mentions.push(doc.mentions.len());
            doc.mentions.push(Mention {
                sentence,
                token_start,
                token_end,
                entity,
                semantic_type,
                surface: ann.surface.clone(),
                char_span: (ann.start, ann.end),
            });
        }
    }

    for (name, id1, id2) in raw.relations {
        let (Some(head), Some(tail)) = (doc.entity_by_kb(&id1), doc.entity_by_kb(&id2)) else {
            parsed.dropped_relations += 1;
            continue;
        };
        if head == tail {
            parsed.dropped_relations += 1;
            continue;
        }
        let next = categories.len();
        let category = *categories.entry(name.clone()).or_insert_with(|| {
            parsed.relation_names.push(name.clone());
            next
        });
        let label = RelationLabel {
            head,
            tail,
            name,
            category,
        };
        if !doc.relations.contains(&label) {
            doc.relations.push(label);
        }
    }
    Ok(doc)
}

/// Smallest token span covering `[start, end)`, clipped to the sentence of
/// its first token.
fn covering_span(doc: &Document, start: usize, end: usize) -> Option<(usize, usize, usize)> {
    for s in &doc.sentences {
        let hits: Vec<usize> = s
            .offsets
            .iter()
            .enumerate()
            .filter(|(_, &(ts, te))| ts < end && te > start)
            .map(|(i, _)| i)
            .collect();
        if let (Some(&a), Some(&b)) = (hits.first(), hits.last()) {
            return Some((s.index, a, b + 1));
        }
    }
    None
}

/// Writes documents back in PubTator layout. Each mention becomes one
/// annotation line.
pub fn to_pubtator(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        let _ = writeln!(out, "{}|t|{}", doc.doc_id, doc.title);
        let _ = writeln!(out, "{}|a|{}", doc.doc_id, doc.abstract_text);
        for m in &doc.mentions {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                doc.doc_id,
                m.char_span.0,
                m.char_span.1,
                m.surface,
                m.semantic_type,
                doc.entities[m.entity].kb_id
            );
        }
        for r in &doc.relations {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                doc.doc_id, r.name, doc.entities[r.head].kb_id, doc.entities[r.tail].kb_id
            );
        }
        out.push('\n');
    }
    out
}
