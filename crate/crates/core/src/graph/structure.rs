use std::fmt;

use serde::Serialize;

use crate::config::EdgeFlags;
use crate::corpus::Document;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum NodeKind {
    E,
    M,
    S,
}

impl NodeKind {
    pub fn type_index(self) -> usize {
        match self {
            NodeKind::M => 0,
            NodeKind::E => 1,
            NodeKind::S => 2,
        }
    }
}

/// Node ordering of a document graph: entities, then mentions, then sentences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeLayout {
    pub entities: usize,
    pub mentions: usize,
    pub sentences: usize,
}

impl NodeLayout {
    pub fn of(doc: &Document) -> Self {
        Self {
            entities: doc.entities.len(),
            mentions: doc.mentions.len(),
            sentences: doc.sentences.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.entities + self.mentions + self.sentences
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entity(&self, i: usize) -> usize {
        i
    }

    pub fn mention(&self, i: usize) -> usize {
        self.entities + i
    }

    pub fn sentence(&self, i: usize) -> usize {
        self.entities + self.mentions + i
    }

    /// Kind and per-kind index of a node.
    pub fn node(&self, node: usize) -> (NodeKind, usize) {
        if node < self.entities {
            (NodeKind::E, node)
        } else if node < self.entities + self.mentions {
            (NodeKind::M, node - self.entities)
        } else {
            (NodeKind::S, node - self.entities - self.mentions)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeFamily {
    MM,
    MS,
    ME,
    SS,
    ES,
    EE,
}

impl EdgeFamily {
    pub const ALL: [EdgeFamily; 6] = [
        EdgeFamily::MM,
        EdgeFamily::MS,
        EdgeFamily::ME,
        EdgeFamily::SS,
        EdgeFamily::ES,
        EdgeFamily::EE,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Family implied by the kinds of the two endpoints.
    pub fn between(a: NodeKind, b: NodeKind) -> Self {
        use NodeKind::*;
        match (a.min(b), a.max(b)) {
            (E, E) => EdgeFamily::EE,
            (E, M) => EdgeFamily::ME,
            (E, S) => EdgeFamily::ES,
            (M, M) => EdgeFamily::MM,
            (M, S) => EdgeFamily::MS,
            (S, S) => EdgeFamily::SS,
            _ => unreachable!(),
        }
    }
}

impl fmt::Display for EdgeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// An undirected edge with `a < b` in node order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeSpec {
    pub a: usize,
    pub b: usize,
    pub family: EdgeFamily,
}

/// Initial edges of the partially connected document graph.
pub fn edge_structure(doc: &Document, flags: &EdgeFlags) -> Vec<EdgeSpec> {
    let layout = NodeLayout::of(doc);
    let mut edges = Vec::new();
    let mut push = |x: usize, y: usize, family| {
        edges.push(EdgeSpec {
            a: x.min(y),
            b: x.max(y),
            family,
        })
    };
    if flags.mm {
        for (i, mi) in doc.mentions.iter().enumerate() {
            for (j, mj) in doc.mentions.iter().enumerate().skip(i + 1) {
                if mi.sentence == mj.sentence {
                    push(layout.mention(i), layout.mention(j), EdgeFamily::MM);
                }
            }
        }
    }
    for (i, m) in doc.mentions.iter().enumerate() {
        if flags.ms {
            push(layout.mention(i), layout.sentence(m.sentence), EdgeFamily::MS);
        }
        if flags.me {
            push(layout.entity(m.entity), layout.mention(i), EdgeFamily::ME);
        }
    }
    for s in 0..layout.sentences {
        for t in s + 1..layout.sentences {
            let direct = t - s == 1;
            if direct && flags.ss_direct || !direct && flags.ss_indirect {
                push(layout.sentence(s), layout.sentence(t), EdgeFamily::SS);
            }
        }
    }
    if flags.es {
        for e in 0..layout.entities {
            for s in doc.entity_sentences(e) {
                push(layout.entity(e), layout.sentence(s), EdgeFamily::ES);
            }
        }
    }
    edges.sort();
    edges
}

/// Every node pair connected, the family following the endpoint kinds.
pub fn full_structure(doc: &Document) -> Vec<EdgeSpec> {
    let layout = NodeLayout::of(doc);
    let n = layout.len();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let family = EdgeFamily::between(layout.node(a).0, layout.node(b).0);
            edges.push(EdgeSpec { a, b, family });
        }
    }
    edges
}

/// Symmetric `n x n` existence mask of an edge list.
pub fn existence_mask(edges: &[EdgeSpec], n: usize) -> Vec<bool> {
    let mut mask = vec![false; n * n];
    for e in edges {
        mask[e.a * n + e.b] = true;
        mask[e.b * n + e.a] = true;
    }
    mask
}

pub const DISTANCE_BUCKETS: usize = 8;

/// Logarithmic bucket: 0, 1, 2, 3-4, 5-7, 8-15, 16-31, 32+.
pub fn distance_bucket(d: usize) -> usize {
    match d {
        0..=2 => d,
        3..=4 => 3,
        5..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        _ => 7,
    }
}

/// Words strictly between two mentions, counted over the document token
/// sequence; overlapping spans give zero.
pub fn mention_distance(doc: &Document, i: usize, j: usize) -> usize {
    let offset = |s: usize| -> usize { doc.sentences[..s].iter().map(|x| x.len()).sum() };
    let span = |m: usize| {
        let m = &doc.mentions[m];
        let o = offset(m.sentence);
        (o + m.token_start, o + m.token_end)
    };
    let (a, b) = (span(i), span(j));
    if a.1 <= b.0 {
        b.0 - a.1
    } else if b.1 <= a.0 {
        a.0 - b.1
    } else {
        0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DumpNode {
    pub kind: NodeKind,
    pub index: usize,
}

/// One line of a graph dump.
#[derive(Clone, Debug, Serialize)]
pub struct DumpRecord {
    pub doc_id: String,
    pub family: EdgeFamily,
    pub a: DumpNode,
    pub b: DumpNode,
    pub exists: bool,
    pub exists_after_inference: bool,
}

/// Records for every unordered node pair of a document.
pub fn graph_dump(doc: &Document, initial: &[bool], after: &[bool]) -> Vec<DumpRecord> {
    let layout = NodeLayout::of(doc);
    let n = layout.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let (ka, ia) = layout.node(a);
            let (kb, ib) = layout.node(b);
            out.push(DumpRecord {
                doc_id: doc.doc_id.clone(),
                family: EdgeFamily::between(ka, kb),
                a: DumpNode { kind: ka, index: ia },
                b: DumpNode { kind: kb, index: ib },
                exists: initial[a * n + b],
                exists_after_inference: after[a * n + b],
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SemanticType;
    use crate::synthetic::doc_from_spec;

    fn count(edges: &[EdgeSpec], f: EdgeFamily) -> usize {
        edges.iter().filter(|e| e.family == f).count()
    }

    #[test]
    fn one_sentence_one_mention() {
        let doc = doc_from_spec(&[3], &[(0, 0, 1, 0)], &[SemanticType::Chemical]);
        let e = edge_structure(&doc, &EdgeFlags::default());
        let fams: Vec<_> = e.iter().map(|x| x.family).collect();
        assert_eq!(e.len(), 3);
        for f in [EdgeFamily::ME, EdgeFamily::MS, EdgeFamily::ES] {
            assert!(fams.contains(&f));
        }
    }

    #[test]
    fn two_sentences_two_entities() {
        let doc = doc_from_spec(
            &[3, 3],
            &[(0, 0, 1, 0), (1, 1, 2, 1)],
            &[SemanticType::Chemical, SemanticType::Disease],
        );
        let e = edge_structure(&doc, &EdgeFlags::default());
        assert_eq!(count(&e, EdgeFamily::ME), 2);
        assert_eq!(count(&e, EdgeFamily::MS), 2);
        assert_eq!(count(&e, EdgeFamily::ES), 2);
        assert_eq!(count(&e, EdgeFamily::SS), 1);
        assert_eq!(count(&e, EdgeFamily::MM), 0);
        assert_eq!(e.len(), 7);
    }

    #[test]
    fn direct_only_sentence_edges() {
        let doc = doc_from_spec(&[2, 2, 2, 2], &[(0, 0, 1, 0)], &[SemanticType::Chemical]);
        let mut flags = EdgeFlags::default();
        flags.ss_indirect = false;
        assert_eq!(count(&edge_structure(&doc, &flags), EdgeFamily::SS), 3);
        assert_eq!(count(&edge_structure(&doc, &EdgeFlags::default()), EdgeFamily::SS), 6);
    }

    #[test]
    fn buckets() {
        let got: Vec<usize> = [0, 1, 2, 3, 4, 5, 7, 8, 15, 16, 31, 32, 500]
            .iter()
            .map(|&d| distance_bucket(d))
            .collect();
        assert_eq!(got, vec![0, 1, 2, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7]);
    }

    #[test]
    fn mention_distance_counts_intermediate_words() {
        let doc = doc_from_spec(
            &[6, 4],
            &[(0, 0, 2, 0), (0, 4, 5, 1), (0, 1, 3, 1), (1, 1, 2, 0)],
            &[SemanticType::Chemical, SemanticType::Disease],
        );
        assert_eq!(mention_distance(&doc, 0, 1), 2);
        assert_eq!(mention_distance(&doc, 1, 0), 2);
        assert_eq!(mention_distance(&doc, 0, 2), 0);
        assert_eq!(mention_distance(&doc, 1, 3), 2);
    }

}
