use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use super::document::Document;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Lowercased token inventory. Index 0 is padding, index 1 unknown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(PAD);
        v.insert(UNK);
        v
    }

    /// Tokens in order of first appearance across the documents.
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut v = Self::new();
        for d in docs {
            for s in &d.sentences {
                for t in &s.tokens {
                    v.insert(t);
                }
            }
        }
        v
    }

    pub fn insert(&mut self, token: &str) -> usize {
        let key = token.to_lowercase();
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.tokens.push(key.clone());
        self.index.insert(key, self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn pad(&self) -> usize {
        0
    }

    pub fn unk(&self) -> usize {
        1
    }

    /// Index of the lowercased token, or UNK.
    pub fn get(&self, token: &str) -> usize {
        self.index
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(1)
    }

    pub fn lookup_exact(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    /// Tokens other than PAD and UNK.
    pub fn regular(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut v = Self::new();
        for (i, line) in text.lines().enumerate() {
            if i < 2 {
                let expect = if i == 0 { PAD } else { UNK };
                if line != expect {
                    return Err(Error::Malformed {
                        line: i + 1,
                        message: format!("expected `{expect}`"),
                    });
                }
                continue;
            }
            if v.lookup_exact(line).is_some() || line.to_lowercase() != line {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: format!("token `{line}` repeated or not lowercase"),
                });
            }
            v.insert(line);
        }
        Ok(v)
    }
}

/// Embedding table built from a word-vector text file.
#[derive(Clone, Debug)]
pub struct LoadedEmbeddings {
    pub table: Tensor,
    /// Fraction of regular vocabulary tokens found in the file.
    pub coverage: f64,
}

/// Parses `token v1 ... v_dim` lines (an optional `count dim` header is
/// skipped). Vocabulary rows found in the file are copied; the rest are
/// drawn uniformly from `[-0.05, 0.05]`; the PAD row is zero.
pub fn parse_embeddings<R: Rng>(
    text: &str,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<LoadedEmbeddings> {
    let mut data: Vec<f64> = (0..vocab.len() * dim)
        .map(|_| rng.gen_range(-0.05..=0.05))
        .collect();
    data[..dim].iter_mut().for_each(|x| *x = 0.0);
    let mut found = vec![false; vocab.len()];
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(Error::Malformed {
                line: i + 1,
                message: format!("expected {dim} values, found {}", fields.len() - 1),
            });
        }
        let Some(row) = vocab.lookup_exact(&fields[0].to_lowercase()) else {
            continue;
        };
        if row < 2 || found[row] {
            continue;
        }
        for (k, f) in fields[1..].iter().enumerate() {
            data[row * dim + k] = f.parse().map_err(|_| Error::Malformed {
                line: i + 1,
                message: format!("`{f}` is not a number"),
            })?;
        }
        found[row] = true;
    }
    let hits = found.iter().filter(|&&f| f).count();
    let coverage = if vocab.regular() == 0 {
        0.0
    } else {
        hits as f64 / vocab.regular() as f64
    };
    Ok(LoadedEmbeddings {
        table: Tensor::matrix(vocab.len(), dim, data)?,
        coverage,
    })
}

pub fn load_embeddings<R: Rng>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<LoadedEmbeddings> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, vocab, dim, rng)
}
