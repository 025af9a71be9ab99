//! Batched training with early stopping on dev micro F1.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::autodiff::{clip_param_grads, AdamState, Gradients, Tape, Tensor};
use crate::classifier::{add_l2_gradient, l2_penalty};
use crate::corpus::{Document, ExclusionList};
use crate::error::{Error, Result};
use crate::eval::{score, Metrics};
use crate::model::EogModel;

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Line-delimited epoch records are appended here.
    pub log: Option<PathBuf>,
    pub exclusions: Option<ExclusionList>,
    /// Stop as soon as dev F1 reaches this value.
    pub target_f1: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Option<Metrics>,
    /// Wall time; left out of the log so runs compare byte for byte.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Model holding the best parameters (the last ones without dev data).
    pub model: EogModel,
    pub best_f1: f64,
    pub best_epoch: usize,
    pub records: Vec<EpochRecord>,
}

/// Trains `model` in place and returns it with the best parameters loaded.
pub fn train(
    mut model: EogModel,
    train_docs: &[Document],
    dev_docs: &[Document],
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    if train_docs.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let cfg = model.config.clone();
    let train_exclusions = if cfg.exclude_in_training {
        options.exclusions.as_ref()
    } else {
        None
    };
    let mut log = match &options.log {
        Some(path) => Some(std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        )),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut since_best = 0;
    let mut records = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let docs: Vec<&Document> = batch.iter().map(|&i| &train_docs[i]).collect();
            let seeds: Vec<u64> = docs.iter().map(|_| rng.next_u64()).collect();
            let counts = docs
                .iter()
                .map(|d| model.training_pairs(d, train_exclusions))
                .collect::<Result<Vec<_>>>()?;
            let total: usize = counts.iter().sum();
            if total == 0 {
                continue;
            }
            let scale = 1.0 / total as f64;
            let results: Vec<Result<Option<(f64, Gradients)>>> = docs
                .par_iter()
                .zip(&seeds)
                .map(|(d, &seed)| {
                    let mut drng = ChaCha8Rng::seed_from_u64(seed);
                    let mut tape = Tape::new(&model.store);
                    let Some(loss) = model.document_loss(&mut tape, d, train_exclusions, scale, Some(&mut drng))? else {
                        return Ok(None);
                    };
                    let value = tape.value(loss).item();
                    Ok(Some((value, tape.backward(loss)?)))
                })
                .collect();
            model.store.zero_grad();
            let mut loss = cfg.regularization * l2_penalty(&model.store);
            for r in results {
                if let Some((v, g)) = r? {
                    loss += v;
                    model.store.accumulate(&g);
                }
            }
            add_l2_gradient(&mut model.store, cfg.regularization);
            let norm = clip_param_grads(&mut model.store, cfg.gradient_clipping);
            if !loss.is_finite() || !norm.is_finite() {
                return Err(Error::Divergence { epoch, batch: b + 1 });
            }
            adam.step(&mut model.store)?;
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = if batches == 0 { 0.0 } else { epoch_loss / batches as f64 };
        let dev = if dev_docs.is_empty() {
            None
        } else {
            let preds = model.predict(dev_docs, options.exclusions.as_ref())?;
            Some(score(&preds, model.none_class())?)
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            dev,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(w) = log.as_mut() {
            let path = options.log.as_ref().expect("log path");
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
        }
        records.push(record);

        let Some(m) = dev else { continue };
        let f1 = m.overall.f1;
        if best.as_ref().map_or(true, |b| f1 > b.0) {
            let snapshot = model.store.iter().map(|(_, p)| p.value.clone()).collect();
            best = Some((f1, epoch, snapshot));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if options.target_f1.is_some_and(|t| f1 >= t) || since_best >= cfg.early_stop_patience {
            break;
        }
    }

    let (best_f1, best_epoch) = match best {
        Some((f1, epoch, snapshot)) => {
            for (p, v) in model.store.iter_mut().zip(snapshot) {
                p.value = v;
            }
            (f1, epoch)
        }
        None => (0.0, records.len()),
    };
    Ok(TrainOutcome {
        model,
        best_f1,
        best_epoch,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::corpus::Vocabulary;
    use crate::model::relation_names;
    use crate::synthetic::lexical_cue_corpus;

    fn setup(seed: u64, max_epochs: usize) -> (EogModel, Vec<Document>) {
        let docs = lexical_cue_corpus(4, 5);
        let cfg = TrainConfig {
            word_dim: 8,
            hidden_dim: 6,
            edge_dim: 6,
            node_type_dim: 3,
            distance_dim: 3,
            inference_iterations: 1,
            seed,
            max_epochs,
            ..TrainConfig::default()
        };
        let m = EogModel::new(cfg, Vocabulary::from_documents(&docs), relation_names(&docs).unwrap(), None).unwrap();
        (m, docs)
    }

    #[test]
    fn same_seed_same_losses() {
        let run = || {
            let (m, docs) = setup(3, 3);
            let out = train(m, &docs, &[], &TrainOptions::default()).unwrap();
            out.records.iter().map(|r| r.train_loss.to_bits()).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a.len(), 3);
        assert_eq!(a, run());
    }

    #[test]
    fn patience_stops_and_restores_best() {
        let (mut m, docs) = setup(1, 50);
        m.config.early_stop_patience = 2;
        m.config.learning_rate = 1e-12;
        let out = train(m, &docs, &docs, &TrainOptions::default()).unwrap();
        assert_eq!(out.best_epoch, 1);
        assert_eq!(out.records.len(), 3);
    }

    #[test]
    fn zero_loss_leaves_params_unchanged() {
        let (mut m, mut docs) = setup(2, 2);
        for d in &mut docs {
            d.relations.clear();
        }
        m.config.regularization = 0.0;
        let none = m.none_class();
        let bias = m.parts.classifier.bias;
        m.store.get_mut(bias).value.data_mut()[none] = 1000.0;
        for p in m.store.iter_mut().filter(|p| p.name == "classifier.w") {
            p.value.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let before: Vec<_> = m.store.iter().map(|(_, p)| p.value.clone()).collect();
        let out = train(m, &docs, &[], &TrainOptions::default()).unwrap();
        assert!(out.records.iter().all(|r| r.train_loss == 0.0));
        for ((_, p), b) in out.model.store.iter().zip(before) {
            assert_eq!(p.value, b, "{}", p.name);
        }
    }

    #[test]
    fn log_lines_match_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let (m, docs) = setup(4, 2);
        let opts = TrainOptions {
            log: Some(path.clone()),
            ..Default::default()
        };
        train(m, &docs, &docs, &opts).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 2);
        for l in text.lines() {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert!(v["dev"]["overall"]["f1"].is_number() && v.get("seconds").is_none());
        }
    }

    #[test]
    fn divergence_names_epoch_and_batch() {
        let (mut m, docs) = setup(5, 2);
        let id = m.parts.classifier.bias;
        m.store.get_mut(id).value.data_mut()[0] = f64::NAN;
        match train(m, &docs, &[], &TrainOptions::default()) {
            Err(Error::Divergence { epoch, batch }) => assert_eq!((epoch, batch), (1, 1)),
            other => panic!("{other:?}"),
        }
    }
}
