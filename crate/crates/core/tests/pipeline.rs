use eog::checkpoint::{self, CheckpointInfo};
use eog::config::{TrainConfig, Variant};
use eog::corpus::{generate_pairs, parse_pubtator, to_pubtator, Document, Vocabulary};
use eog::eval::score;
use eog::model::{relation_names, EogModel};
use eog::synthetic::lexical_cue_corpus;
use eog::trainer::{train, TrainOptions};

fn small(variant: Variant, seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        word_dim: 10,
        hidden_dim: 8,
        edge_dim: 8,
        node_type_dim: 3,
        distance_dim: 3,
        variant,
        seed,
        max_epochs: epochs,
        ..TrainConfig::default()
    }
}

fn model(cfg: TrainConfig, docs: &[Document]) -> EogModel {
    EogModel::new(cfg, Vocabulary::from_documents(docs), relation_names(docs).unwrap(), None).unwrap()
}

#[test]
fn pubtator_round_trip_keeps_structure() {
    let docs = lexical_cue_corpus(5, 9);
    let parsed = parse_pubtator(&to_pubtator(&docs)).unwrap();
    assert_eq!(parsed.dropped_annotations, 0);
    assert_eq!(parsed.dropped_relations, 0);
    assert_eq!(parsed.relation_names, vec!["CID".to_string()]);
    for (a, b) in docs.iter().zip(&parsed.documents) {
        let tokens = |d: &Document| d.sentences.iter().flat_map(|s| s.tokens.clone()).collect::<Vec<_>>();
        assert_eq!(tokens(a), tokens(b));
        let spans = |d: &Document| {
            let offset = |s: usize| d.sentences[..s].iter().map(|x| x.len()).sum::<usize>();
            d.mentions
                .iter()
                .map(|m| {
                    let o = offset(m.sentence);
                    (o + m.token_start, o + m.token_end, d.entities[m.entity].kb_id.clone())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(spans(a), spans(b));
        let rels = |d: &Document| {
            let mut r: Vec<_> = d
                .relations
                .iter()
                .map(|r| (d.entities[r.head].kb_id.clone(), d.entities[r.tail].kb_id.clone()))
                .collect();
            r.sort();
            r
        };
        assert_eq!(rels(a), rels(b));
    }
}

#[test]
fn checkpoint_preserves_dev_scores() {
    let docs = lexical_cue_corpus(6, 4);
    let (train_docs, dev_docs) = docs.split_at(4);
    let out = train(model(small(Variant::EoG, 2, 4), train_docs), train_docs, dev_docs, &TrainOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let info = CheckpointInfo {
        best_f1: out.best_f1,
        epoch: out.best_epoch,
    };
    checkpoint::save(dir.path(), &out.model, info).unwrap();
    let (back, got) = checkpoint::load(dir.path()).unwrap();
    assert_eq!(got, info);
    let before = out.model.predict(dev_docs, None).unwrap();
    let after = back.predict(dev_docs, None).unwrap();
    assert_eq!(before, after);
    let f1 = score(&after, back.none_class()).unwrap().overall.f1;
    assert_eq!(f1, out.best_f1);
}

#[test]
fn every_variant_trains_and_predicts_each_pair_once() {
    let docs = lexical_cue_corpus(4, 6);
    let expected: usize = docs
        .iter()
        .map(|d| generate_pairs(d, TrainConfig::default().head_type, TrainConfig::default().tail_type).len())
        .sum();
    for variant in [Variant::EoG, Variant::Full, Variant::NoInf, Variant::Sent] {
        let mut cfg = small(variant, 1, 2);
        if variant == Variant::NoInf {
            cfg.inference_iterations = 0;
        }
        let out = train(model(cfg, &docs), &docs, &docs, &TrainOptions::default()).unwrap();
        assert_eq!(out.records.len(), 2, "{variant}");
        assert!(out.records.iter().all(|r| r.train_loss.is_finite() && r.train_loss > 0.0), "{variant}");
        let preds = out.model.predict(&docs, None).unwrap();
        assert_eq!(preds.len(), expected, "{variant}");
        if variant == Variant::Sent {
            let none = out.model.none_class();
            assert!(preds.iter().filter(|p| !p.intra).all(|p| p.predicted == none));
        }
    }
}

#[test]
fn training_reduces_loss() {
    let docs = lexical_cue_corpus(8, 3);
    let cfg = TrainConfig {
        max_epochs: 15,
        ..small(Variant::EoG, 4, 15)
    };
    let out = train(model(cfg, &docs), &docs, &[], &TrainOptions::default()).unwrap();
    let first = out.records[0].train_loss;
    let last = out.records.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}
