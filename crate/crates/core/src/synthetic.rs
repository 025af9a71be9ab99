//! Generated documents for tests, oracles and smoke runs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::corpus::{Document, Entity, Mention, RelationLabel, SemanticType, Sentence};

/// Builds a document from token lists. Mentions are
/// `(sentence, token_start, token_end, entity)`; entity `i` gets KB id
/// `E{i}` and type `types[i]`. The title is the first sentence.
pub fn document_from_tokens(
    doc_id: &str,
    sentences: Vec<Vec<String>>,
    mentions: &[(usize, usize, usize, usize)],
    types: &[SemanticType],
    relations: &[(usize, usize)],
) -> Document {
    let mut built = Vec::with_capacity(sentences.len());
    let mut cursor = 0;
    for (index, tokens) in sentences.into_iter().enumerate() {
        let start = cursor;
        let mut offsets = Vec::with_capacity(tokens.len());
        for (k, t) in tokens.iter().enumerate() {
            if k > 0 {
                cursor += 1;
            }
            let len = t.chars().count();
            offsets.push((cursor, cursor + len));
            cursor += len;
        }
        built.push(Sentence {
            index,
            tokens,
            offsets,
            char_span: (start, cursor),
        });
        cursor += 1;
    }
    let join = |s: &[Sentence]| {
        s.iter()
            .map(|x| x.tokens.join(" "))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let title = join(&built[..built.len().min(1)]);
    let abstract_text = join(&built[built.len().min(1)..]);
    let mut entities: Vec<Entity> = types
        .iter()
        .enumerate()
        .map(|(i, &t)| Entity {
            kb_id: format!("E{i}"),
            semantic_type: t,
            mentions: Vec::new(),
        })
        .collect();
    let mentions = mentions
        .iter()
        .enumerate()
        .map(|(mi, &(s, a, b, e))| {
            entities[e].mentions.push(mi);
            let sent = &built[s];
            Mention {
                sentence: s,
                token_start: a,
                token_end: b,
                entity: e,
                semantic_type: types[e],
                surface: sent.tokens[a..b].join(" "),
                char_span: (sent.offsets[a].0, sent.offsets[b - 1].1),
            }
        })
        .collect();
    let relations = relations
        .iter()
        .map(|&(head, tail)| RelationLabel {
            head,
            tail,
            name: "CID".into(),
            category: 0,
        })
        .collect();
    Document {
        doc_id: doc_id.into(),
        title,
        abstract_text,
        sentences: built,
        mentions,
        entities,
        relations,
    }
}

/// A document of filler words with the given sentence lengths.
pub fn doc_from_spec(
    lengths: &[usize],
    mentions: &[(usize, usize, usize, usize)],
    types: &[SemanticType],
) -> Document {
    let sentences = lengths
        .iter()
        .enumerate()
        .map(|(s, &n)| (0..n).map(|k| format!("w{s}x{k}")).collect())
        .collect();
    document_from_tokens("spec", sentences, mentions, types, &[])
}

/// Bounds for [`random_document`].
#[derive(Clone, Copy, Debug)]
pub struct RandomShape {
    pub max_sentences: usize,
    pub max_mentions: usize,
    pub max_entities: usize,
    pub max_sentence_len: usize,
    pub vocabulary: usize,
}

impl Default for RandomShape {
    fn default() -> Self {
        Self {
            max_sentences: 4,
            max_mentions: 6,
            max_entities: 4,
            max_sentence_len: 8,
            vocabulary: 20,
        }
    }
}

/// A valid random document. Mentions may overlap; every entity has at least
/// one mention; each chemical-disease pair is related with probability 1/2.
pub fn random_document<R: Rng>(rng: &mut R, id: &str, shape: RandomShape) -> Document {
    let n_sent = rng.gen_range(1..=shape.max_sentences);
    let sentences: Vec<Vec<String>> = (0..n_sent)
        .map(|_| {
            let len = rng.gen_range(2..=shape.max_sentence_len.max(2));
            (0..len)
                .map(|_| format!("t{}", rng.gen_range(0..shape.vocabulary)))
                .collect()
        })
        .collect();
    let n_ent = rng.gen_range(1..=shape.max_entities);
    let n_men = rng.gen_range(n_ent..=shape.max_mentions.max(n_ent));
    let types: Vec<SemanticType> = (0..n_ent)
        .map(|_| {
            if rng.gen_bool(0.5) {
                SemanticType::Chemical
            } else {
                SemanticType::Disease
            }
        })
        .collect();
    let mut owners: Vec<usize> = (0..n_ent)
        .chain((n_ent..n_men).map(|_| rng.gen_range(0..n_ent)))
        .collect();
    owners.shuffle(rng);
    let mentions: Vec<(usize, usize, usize, usize)> = owners
        .into_iter()
        .map(|e| {
            let s = rng.gen_range(0..n_sent);
            let len = sentences[s].len();
            let a = rng.gen_range(0..len);
            let b = rng.gen_range(a + 1..=len.min(a + 2));
            (s, a, b, e)
        })
        .collect();
    let mut relations = Vec::new();
    for h in 0..n_ent {
        for t in 0..n_ent {
            if types[h] == SemanticType::Chemical
                && types[t] == SemanticType::Disease
                && rng.gen_bool(0.5)
            {
                relations.push((h, t));
            }
        }
    }
    document_from_tokens(id, sentences, &mentions, &types, &relations)
}

/// The word whose presence in a sentence makes its chemical-disease pair
/// related in [`lexical_cue_corpus`].
pub const CUE: &str = "induces";

/// Small corpus where a pair is related exactly when the pair shares a
/// sentence containing [`CUE`].
pub fn lexical_cue_corpus(docs: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fillers = ["the", "patient", "was", "given", "after", "with", "and", "report"];
    let neutral = ["accompanies", "precedes", "follows"];
    let mut out = Vec::with_capacity(docs);
    for d in 0..docs {
        let mut sentences = Vec::new();
        let mut mentions = Vec::new();
        let mut relations = Vec::new();
        let mut types = Vec::new();
        let n_clauses = rng.gen_range(2..=3);
        for c in 0..n_clauses {
            let chem = types.len();
            types.push(SemanticType::Chemical);
            let dis = types.len();
            types.push(SemanticType::Disease);
            let related = c == 0 || rng.gen_bool(0.4);
            let verb = if related {
                CUE
            } else {
                neutral[rng.gen_range(0..neutral.len())]
            };
            let mut tokens: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(0..=2) {
                tokens.push(fillers[rng.gen_range(0..fillers.len())].into());
            }
            let ci = tokens.len();
            tokens.push(format!("drug{}", rng.gen_range(0..12)));
            tokens.push(verb.into());
            let di = tokens.len();
            tokens.push(format!("illness{}", rng.gen_range(0..12)));
            tokens.push(".".into());
            let s = sentences.len();
            mentions.push((s, ci, ci + 1, chem));
            mentions.push((s, di, di + 1, dis));
            if related {
                relations.push((chem, dis));
            }
            sentences.push(tokens);
        }
        out.push(document_from_tokens(
            &format!("cue{d}"),
            sentences,
            &mentions,
            &types,
            &relations,
        ));
    }
    out
}
