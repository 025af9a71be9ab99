//! The assembled relation model: encoder, graph layers, inference and
//! classifier, with the per-variant document pipelines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::classifier::{self, ClassifierParams};
use crate::config::{EdgeFlags, TrainConfig, Variant};
use crate::corpus::{generate_pairs, Document, ExclusionList, Vocabulary};
use crate::encoder::EncoderParams;
use crate::eval::{pair_locality, PairPrediction};
use crate::graph::{
    build_edges, construct_nodes, edge_structure, entity_pair_features, existence_mask,
    full_structure, EdgeFamily, EdgeSpec, GraphOptions, GraphParams,
};
use crate::inference::{existence_after, infer, InferenceParams};
use crate::error::{Error, Result};

/// Which graph a variant builds and how it is read out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    /// Partially connected graph with the given families.
    Partial(EdgeFlags),
    /// Every node pair connected, entity pairs included.
    Full,
    /// Entity pairs classified straight from their node vectors.
    NodesOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PipelinePlan {
    pub structure: Structure,
    pub inference_steps: usize,
    /// Run every sentence as its own document and merge pair decisions.
    pub per_sentence: bool,
}

pub fn apply_variant(config: &TrainConfig) -> Result<PipelinePlan> {
    config.validate()?;
    let steps = config.inference_iterations;
    Ok(match config.variant {
        Variant::EoG => PipelinePlan {
            structure: Structure::Partial(config.edges),
            inference_steps: steps,
            per_sentence: false,
        },
        Variant::Full => PipelinePlan {
            structure: Structure::Full,
            inference_steps: steps,
            per_sentence: false,
        },
        Variant::NoInf => PipelinePlan {
            structure: Structure::NodesOnly,
            inference_steps: 0,
            per_sentence: false,
        },
        Variant::Sent => PipelinePlan {
            structure: Structure::Partial(config.edges),
            inference_steps: steps,
            per_sentence: true,
        },
    })
}

/// Initial edges of a document under a plan.
pub fn plan_edges(plan: &PipelinePlan, doc: &Document) -> Vec<EdgeSpec> {
    match plan.structure {
        Structure::Partial(flags) => edge_structure(doc, &flags),
        Structure::Full => full_structure(doc),
        Structure::NodesOnly => Vec::new(),
    }
}

/// Existence masks before and after inference.
pub fn structure_masks(plan: &PipelinePlan, doc: &Document) -> (Vec<bool>, Vec<bool>) {
    let n = doc.entities.len() + doc.mentions.len() + doc.sentences.len();
    let initial = existence_mask(&plan_edges(plan, doc), n);
    let after = existence_after(&initial, n, plan.inference_steps);
    (initial, after)
}

#[derive(Clone, Copy, Debug)]
pub struct ModelParts {
    pub encoder: EncoderParams,
    pub graph: GraphParams,
    pub inference: InferenceParams,
    pub classifier: ClassifierParams,
}

/// A trainable model with its vocabulary and label inventory.
#[derive(Clone, Debug)]
pub struct EogModel {
    pub config: TrainConfig,
    pub plan: PipelinePlan,
    pub vocab: Vocabulary,
    /// Relation names by category; the no-relation class follows them.
    pub relations: Vec<String>,
    pub store: ParamStore,
    pub parts: ModelParts,
}

/// Per-document training instances: entity pairs and their gold classes.
#[derive(Clone, Debug, Default)]
struct Instances {
    pairs: Vec<(usize, usize)>,
    gold: Vec<usize>,
}

impl EogModel {
    /// Fresh parameters drawn from `config.seed`. `embeddings`, when given,
    /// replaces the word table and must be `vocab.len() x word_dim`.
    pub fn new(
        config: TrainConfig,
        vocab: Vocabulary,
        relations: Vec<String>,
        embeddings: Option<Tensor>,
    ) -> Result<Self> {
        let plan = apply_variant(&config)?;
        if relations.is_empty() {
            return Err(Error::InvalidArgument("at least one relation name is needed".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::new(&mut store, vocab.len(), config.word_dim, config.hidden_dim, &mut rng);
        if let Some(table) = embeddings {
            if table.dims() != (vocab.len(), config.word_dim) {
                return Err(Error::shape("embeddings", table.shape(), &[vocab.len(), config.word_dim]));
            }
            store.get_mut(encoder.words).value = table;
        }
        if config.freeze_words {
            store.get_mut(encoder.words).requires_grad = false;
        }
        let mut families = [false; 6];
        match plan.structure {
            Structure::Partial(f) => {
                families[EdgeFamily::MM.index()] = f.mm;
                families[EdgeFamily::MS.index()] = f.ms;
                families[EdgeFamily::ME.index()] = f.me;
                families[EdgeFamily::SS.index()] = f.ss_direct || f.ss_indirect;
                families[EdgeFamily::ES.index()] = f.es;
            }
            Structure::Full => families = [true; 6],
            Structure::NodesOnly => families[EdgeFamily::EE.index()] = true,
        }
        let graph_edges = plan.structure != Structure::NodesOnly;
        let options = GraphOptions {
            word_dim: encoder.output_dim(),
            node_type_dim: config.node_type_dim,
            distance_dim: config.distance_dim,
            edge_dim: config.edge_dim,
            node_types: config.node_types,
            mm_context: config.mm_context,
            distances: config.distances && graph_edges,
            families,
        };
        let graph = GraphParams::new(&mut store, options, &mut rng);
        let inference = InferenceParams::new(
            &mut store,
            config.edge_dim,
            config.beta,
            plan.inference_steps,
            &mut rng,
        );
        if plan.inference_steps == 0 {
            store.get_mut(inference.weight).requires_grad = false;
        }
        let classifier = ClassifierParams::new(&mut store, config.edge_dim, relations.len() + 1, &mut rng)?;
        Ok(Self {
            config,
            plan,
            vocab,
            relations,
            store,
            parts: ModelParts {
                encoder,
                graph,
                inference,
                classifier,
            },
        })
    }

    pub fn none_class(&self) -> usize {
        self.relations.len()
    }

    fn gold_class(&self, category: Option<usize>) -> Result<usize> {
        match category {
            None => Ok(self.none_class()),
            Some(c) if c < self.relations.len() => Ok(c),
            Some(c) => Err(Error::InvalidArgument(format!(
                "relation category {c} beyond the {} known relations",
                self.relations.len()
            ))),
        }
    }

    fn instances(&self, doc: &Document, exclusions: Option<&ExclusionList>) -> Result<Instances> {
        let mut out = Instances::default();
        for p in generate_pairs(doc, self.config.head_type, self.config.tail_type) {
            if let Some(x) = exclusions {
                if x.contains(&doc.doc_id, &doc.entities[p.head].kb_id, &doc.entities[p.tail].kb_id) {
                    continue;
                }
            }
            out.pairs.push((p.head, p.tail));
            out.gold.push(self.gold_class(p.category)?);
        }
        Ok(out)
    }

    /// Classification targets contributed to the loss by one document.
    pub fn training_pairs(&self, doc: &Document, exclusions: Option<&ExclusionList>) -> Result<usize> {
        let inst = self.instances(doc, exclusions)?;
        if !self.plan.per_sentence {
            return Ok(inst.pairs.len());
        }
        Ok((0..doc.sentences.len())
            .map(|s| sentence_view(doc, s).restrict(&inst).pairs.len())
            .sum())
    }

    /// `k x r` logits for entity pairs of one (sentence or whole) document.
    fn graph_logits(
        &self,
        tape: &mut Tape,
        doc: &Document,
        pairs: &[(usize, usize)],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let mut encoded = Vec::with_capacity(doc.sentences.len());
        for s in &doc.sentences {
            let ids: Vec<usize> = s.tokens.iter().map(|t| self.vocab.get(t)).collect();
            let drop = rng.as_deref_mut().map(|r| (cfg.dropout_word, r));
            encoded.push(self.parts.encoder.encode_sentence(tape, &ids, drop)?);
        }
        let nodes = construct_nodes(tape, &self.parts.graph, doc, encoded)?;
        let reps = if self.plan.structure == Structure::NodesOnly {
            entity_pair_features(tape, &self.parts.graph, &nodes, pairs)?
        } else {
            let edges = plan_edges(&self.plan, doc);
            let graph = build_edges(tape, &self.parts.graph, doc, &nodes, &edges)?;
            let (cells, _) = infer(tape, &self.parts.inference, graph.cells, &graph.mask, graph.n)?;
            let rows: Vec<usize> = pairs
                .iter()
                .map(|&(h, t)| nodes.layout.entity(h) * graph.n + nodes.layout.entity(t))
                .collect();
            tape.select_rows(cells, &rows)?
        };
        let drop = rng.map(|r| (cfg.dropout_classification, r));
        classifier::logits(tape, &self.parts.classifier, reps, drop)
    }

    /// Summed pair NLL of one document, scaled by `scale`, on `tape`.
    /// Returns `None` when the document has no training pairs.
    pub fn document_loss(
        &self,
        tape: &mut Tape,
        doc: &Document,
        exclusions: Option<&ExclusionList>,
        scale: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Option<Var>> {
        let inst = self.instances(doc, exclusions)?;
        let mut terms = Vec::new();
        if self.plan.per_sentence {
            for s in 0..doc.sentences.len() {
                let view = sentence_view(doc, s);
                let local = view.restrict(&inst);
                if local.pairs.is_empty() {
                    continue;
                }
                let z = self.graph_logits(tape, &view.doc, &local.pairs, rng.as_deref_mut())?;
                terms.push(tape.cross_entropy(z, &local.gold)?);
            }
        } else if !inst.pairs.is_empty() {
            let z = self.graph_logits(tape, doc, &inst.pairs, rng)?;
            terms.push(tape.cross_entropy(z, &inst.gold)?);
        }
        let Some(&first) = terms.first() else {
            return Ok(None);
        };
        let mut total = first;
        for &t in &terms[1..] {
            total = tape.add(total, t)?;
        }
        Ok(Some(tape.scale(total, scale)))
    }

    /// Class distributions for the candidate pairs of one document, in
    /// candidate order. Under the sentence variant a pair takes the most
    /// confident relation predicted in any sentence, and pairs that never
    /// share a sentence get no distribution.
    pub fn pair_distributions(
        &self,
        doc: &Document,
        exclusions: Option<&ExclusionList>,
    ) -> Result<Vec<((usize, usize), usize, Option<Vec<f64>>)>> {
        let inst = self.instances(doc, exclusions)?;
        if inst.pairs.is_empty() {
            return Ok(Vec::new());
        }
        let none = self.none_class();
        let mut out: Vec<_> = inst
            .pairs
            .iter()
            .zip(&inst.gold)
            .map(|(&p, &g)| (p, g, None))
            .collect();
        if !self.plan.per_sentence {
            let mut tape = Tape::new(&self.store);
            let z = self.graph_logits(&mut tape, doc, &inst.pairs, None)?;
            for (slot, probs) in out.iter_mut().zip(classifier::probabilities(&tape, z)?) {
                slot.2 = Some(probs);
            }
            return Ok(out);
        }
        for s in 0..doc.sentences.len() {
            let view = sentence_view(doc, s);
            let local = view.restrict(&inst);
            if local.pairs.is_empty() {
                continue;
            }
            let mut tape = Tape::new(&self.store);
            let z = self.graph_logits(&mut tape, &view.doc, &local.pairs, None)?;
            for (&i, probs) in local.source.iter().zip(classifier::probabilities(&tape, z)?) {
                let slot = &mut out[i].2;
                *slot = Some(match slot.take() {
                    None => probs,
                    Some(prev) => merge_max(prev, probs, none),
                });
            }
        }
        Ok(out)
    }

    pub fn predict_document(
        &self,
        doc: &Document,
        exclusions: Option<&ExclusionList>,
    ) -> Result<Vec<PairPrediction>> {
        let none = self.none_class();
        Ok(self
            .pair_distributions(doc, exclusions)?
            .into_iter()
            .map(|((h, t), gold, probs)| {
                let (intra, distance) = pair_locality(doc, h, t);
                PairPrediction {
                    doc_id: doc.doc_id.clone(),
                    head: doc.entities[h].kb_id.clone(),
                    tail: doc.entities[t].kb_id.clone(),
                    predicted: probs.map_or(none, |p| classifier::decide(&p)),
                    gold,
                    intra,
                    distance,
                }
            })
            .collect())
    }

    /// Predictions for every candidate pair, documents in input order.
    pub fn predict(&self, docs: &[Document], exclusions: Option<&ExclusionList>) -> Result<Vec<PairPrediction>> {
        let per_doc: Vec<Result<Vec<PairPrediction>>> = docs
            .par_iter()
            .map(|d| self.predict_document(d, exclusions))
            .collect();
        let mut out = Vec::new();
        for r in per_doc {
            out.extend(r?);
        }
        Ok(out)
    }
}

/// Keeps whichever distribution predicts a relation with more confidence;
/// a relation prediction always beats a no-relation one.
fn merge_max(a: Vec<f64>, b: Vec<f64>, none: usize) -> Vec<f64> {
    let score = |p: &[f64]| {
        let c = classifier::decide(p);
        if c == none {
            (false, -p[none])
        } else {
            (true, p[c])
        }
    };
    let (sa, sb) = (score(&a), score(&b));
    if sb.0 && !sa.0 || sb.0 == sa.0 && sb.1 > sa.1 {
        b
    } else {
        a
    }
}

/// A single sentence of a document as a document of its own.
pub struct SentenceView {
    pub doc: Document,
    /// Original entity index of each entity of the view.
    pub entities: Vec<usize>,
}

struct LocalInstances {
    pairs: Vec<(usize, usize)>,
    gold: Vec<usize>,
    /// Position of each local pair in the document's instance list.
    source: Vec<usize>,
}

impl SentenceView {
    fn restrict(&self, inst: &Instances) -> LocalInstances {
        let local = |e: usize| self.entities.iter().position(|&x| x == e);
        let mut out = LocalInstances {
            pairs: Vec::new(),
            gold: Vec::new(),
            source: Vec::new(),
        };
        for (i, (&(h, t), &g)) in inst.pairs.iter().zip(&inst.gold).enumerate() {
            if let (Some(a), Some(b)) = (local(h), local(t)) {
                out.pairs.push((a, b));
                out.gold.push(g);
                out.source.push(i);
            }
        }
        out
    }
}

pub fn sentence_view(doc: &Document, s: usize) -> SentenceView {
    let mut sentence = doc.sentences[s].clone();
    sentence.index = 0;
    let mut entities: Vec<usize> = Vec::new();
    let mut mentions = Vec::new();
    for m in doc.mentions.iter().filter(|m| m.sentence == s) {
        let e = match entities.iter().position(|&x| x == m.entity) {
            Some(e) => e,
            None => {
                entities.push(m.entity);
                entities.len() - 1
            }
        };
        let mut m = m.clone();
        m.sentence = 0;
        m.entity = e;
        mentions.push(m);
    }
    let mut ents: Vec<_> = entities
        .iter()
        .map(|&e| {
            let mut x = doc.entities[e].clone();
            x.mentions.clear();
            x
        })
        .collect();
    for (i, m) in mentions.iter().enumerate() {
        ents[m.entity].mentions.push(i);
    }
    SentenceView {
        doc: Document {
            doc_id: format!("{}#{s}", doc.doc_id),
            title: String::new(),
            abstract_text: String::new(),
            sentences: vec![sentence],
            mentions,
            entities: ents,
            relations: Vec::new(),
        },
        entities,
    }
}

/// Relation names by category as recorded in the documents' labels.
pub fn relation_names(docs: &[Document]) -> Result<Vec<String>> {
    let mut names: Vec<Option<String>> = Vec::new();
    for d in docs {
        for r in &d.relations {
            if names.len() <= r.category {
                names.resize(r.category + 1, None);
            }
            match &names[r.category] {
                Some(n) if n != &r.name => {
                    return Err(Error::InvalidDocument {
                        doc: d.doc_id.clone(),
                        message: format!("category {} named both {n} and {}", r.category, r.name),
                    })
                }
                _ => names[r.category] = Some(r.name.clone()),
            }
        }
    }
    let names: Vec<String> = names
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.unwrap_or_else(|| format!("REL{i}")))
        .collect();
    Ok(if names.is_empty() { vec!["REL0".into()] } else { names })
}
