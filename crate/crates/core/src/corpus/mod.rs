//! Annotated documents: PubTator ingestion, filtering, candidate pairs,
//! vocabulary and pretrained embeddings.

mod document;
mod pairs;
mod pubtator;
mod tokenize;
mod vocab;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub use document::{Document, Entity, Mention, RelationLabel, SemanticType, Sentence};
pub use pairs::{
    corpus_stats, filter_ungrounded, generate_pairs, merge_train_dev, CandidatePair, CorpusStats,
    ExclusionList, UNGROUNDED,
};
pub use pubtator::{parse_pubtator, to_pubtator, Parsed};
pub use tokenize::fallback_tokenize;
pub use vocab::{load_embeddings, parse_embeddings, LoadedEmbeddings, Vocabulary, PAD, UNK};

use crate::error::{Error, Result};

/// One JSON document per line.
pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_pubtator(path: &Path) -> Result<Parsed> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pubtator(&text)
}
