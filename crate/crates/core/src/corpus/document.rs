use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SemanticType {
    Chemical,
    Disease,
    Gene,
}

impl FromStr for SemanticType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Chemical" => Ok(Self::Chemical),
            "Disease" => Ok(Self::Disease),
            "Gene" => Ok(Self::Gene),
            other => Err(Error::InvalidArgument(format!("unknown entity type `{other}`"))),
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Chemical => "Chemical",
            Self::Disease => "Disease",
            Self::Gene => "Gene",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<String>,
    /// Character offsets `[start, end)` of each token in the document text.
    #[serde(default)]
    pub offsets: Vec<(usize, usize)>,
    pub char_span: (usize, usize),
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub sentence: usize,
    pub token_start: usize,
    /// Exclusive.
    pub token_end: usize,
    pub entity: usize,
    pub semantic_type: SemanticType,
    pub surface: String,
    /// Original annotation offsets into the document text.
    #[serde(default)]
    pub char_span: (usize, usize),
}

impl Mention {
    pub fn tokens(&self) -> std::ops::Range<usize> {
        self.token_start..self.token_end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub kb_id: String,
    pub semantic_type: SemanticType,
    pub mentions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationLabel {
    pub head: usize,
    pub tail: usize,
    /// Relation name as written in the source, e.g. `CID`.
    pub name: String,
    pub category: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<Mention>,
    pub entities: Vec<Entity>,
    pub relations: Vec<RelationLabel>,
}

impl Document {
    /// Title and abstract joined by one space; annotation offsets address this.
    pub fn text(&self) -> String {
        format!("{} {}", self.title, self.abstract_text)
    }

    pub fn entity_by_kb(&self, kb_id: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.kb_id == kb_id)
    }

    /// Sentence indices holding at least one mention of `entity`.
    pub fn entity_sentences(&self, entity: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.entities[entity]
            .mentions
            .iter()
            .map(|&m| self.mentions[m].sentence)
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Checks the structural invariants of the document model.
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::InvalidDocument {
            doc: self.doc_id.clone(),
            message,
        };
        for (i, s) in self.sentences.iter().enumerate() {
            if s.index != i {
                return Err(bad(format!("sentence {i} carries index {}", s.index)));
            }
            if s.tokens.is_empty() {
                return Err(bad(format!("sentence {i} has no tokens")));
            }
        }
        for (mi, m) in self.mentions.iter().enumerate() {
            let Some(s) = self.sentences.get(m.sentence) else {
                return Err(bad(format!("mention {mi} points at missing sentence {}", m.sentence)));
            };
            if m.token_start >= m.token_end || m.token_end > s.len() {
                return Err(bad(format!(
                    "mention {mi} span {}..{} outside sentence of {} tokens",
                    m.token_start,
                    m.token_end,
                    s.len()
                )));
            }
            let Some(e) = self.entities.get(m.entity) else {
                return Err(bad(format!("mention {mi} points at missing entity {}", m.entity)));
            };
            if e.semantic_type != m.semantic_type {
                return Err(bad(format!("mention {mi} type differs from its entity")));
            }
            if !e.mentions.contains(&mi) {
                return Err(bad(format!("entity {} does not list mention {mi}", m.entity)));
            }
        }
        for (ei, e) in self.entities.iter().enumerate() {
            if e.mentions.is_empty() {
                return Err(bad(format!("entity {} has no mentions", e.kb_id)));
            }
            if e.mentions.iter().any(|&m| self.mentions.get(m).map(|x| x.entity) != Some(ei)) {
                return Err(bad(format!("entity {} lists a foreign mention", e.kb_id)));
            }
            if self.entities[..ei].iter().any(|o| o.kb_id == e.kb_id) {
                return Err(bad(format!("duplicate KB id {}", e.kb_id)));
            }
        }
        for r in &self.relations {
            if r.head == r.tail || r.head >= self.entities.len() || r.tail >= self.entities.len() {
                return Err(bad(format!("relation {} -> {} is invalid", r.head, r.tail)));
            }
        }
        Ok(())
    }
}
