use super::structure::{NodeKind, NodeLayout};
use super::GraphParams;
use crate::autodiff::{Tape, Var};
use crate::corpus::Document;
use crate::error::{Error, Result};

/// Node vectors of one document in [`NodeLayout`] order.
#[derive(Clone, Debug)]
pub struct NodeSet {
    pub layout: NodeLayout,
    /// `n x word_dim` averaged contextual vectors.
    pub word_parts: Var,
    /// `n x node_dim`: word parts followed by the node type embedding.
    pub nodes: Var,
    /// Contextual vectors of each sentence, `len x word_dim`.
    pub sentences: Vec<Var>,
}

pub fn construct_nodes(
    tape: &mut Tape,
    params: &GraphParams,
    doc: &Document,
    encoded: Vec<Var>,
) -> Result<NodeSet> {
    if encoded.len() != doc.sentences.len() {
        return Err(Error::InvalidDocument {
            doc: doc.doc_id.clone(),
            message: format!("{} encoded sentences for {}", encoded.len(), doc.sentences.len()),
        });
    }
    let layout = NodeLayout::of(doc);
    let mut mention_parts = Vec::with_capacity(doc.mentions.len());
    for m in &doc.mentions {
        let rows: Vec<usize> = m.tokens().collect();
        mention_parts.push(tape.mean_rows(encoded[m.sentence], &rows)?);
    }
    let mut parts = Vec::with_capacity(layout.len());
    if !mention_parts.is_empty() {
        let mentions = tape.stack_rows(&mention_parts)?;
        for (i, e) in doc.entities.iter().enumerate() {
            if e.mentions.is_empty() {
                return Err(Error::InvalidDocument {
                    doc: doc.doc_id.clone(),
                    message: format!("entity {i} ({}) has no mentions", e.kb_id),
                });
            }
            parts.push(tape.mean_rows(mentions, &e.mentions)?);
        }
    } else if !doc.entities.is_empty() {
        return Err(Error::InvalidDocument {
            doc: doc.doc_id.clone(),
            message: "entities without mentions".into(),
        });
    }
    parts.extend(mention_parts);
    for (s, &h) in doc.sentences.iter().zip(&encoded) {
        let rows: Vec<usize> = (0..s.len()).collect();
        parts.push(tape.mean_rows(h, &rows)?);
    }
    let word_parts = tape.stack_rows(&parts)?;
    let nodes = match params.types {
        Some(table) => {
            let kinds: Vec<usize> = (0..layout.len())
                .map(|i| layout.node(i).0.type_index())
                .collect();
            let t = tape.lookup(table, &kinds)?;
            tape.concat(&[word_parts, t])?
        }
        None => word_parts,
    };
    Ok(NodeSet {
        layout,
        word_parts,
        nodes,
        sentences: encoded,
    })
}

impl NodeSet {
    pub fn kind(&self, node: usize) -> NodeKind {
        self.layout.node(node).0
    }
}
