//! Per-layer finite-difference checks on a tiny model.

use serde::Serialize;

use crate::autodiff::{gradient_report, Tape};
use crate::config::TrainConfig;
use crate::corpus::{Document, SemanticType, Vocabulary};
use crate::error::Result;
use crate::graph::mm_context;
use crate::model::{relation_names, EogModel};
use crate::synthetic::document_from_tokens;

#[derive(Clone, Debug, Serialize)]
pub struct LayerCheck {
    pub layer: String,
    pub entries: usize,
    pub max_relative: f64,
    pub max_absolute: f64,
}

/// Two sentences, three entities, mention pairs sharing sentences with
/// words on both sides.
pub fn gradcheck_document() -> Document {
    let words = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
    document_from_tokens(
        "gradcheck",
        vec![
            words("alpha causes beta in the rat"),
            words("gamma and beta were seen with alpha today"),
        ],
        &[(0, 0, 1, 0), (0, 2, 3, 1), (1, 0, 1, 2), (1, 2, 3, 1), (1, 6, 7, 0)],
        &[SemanticType::Chemical, SemanticType::Disease, SemanticType::Disease],
        &[(0, 1)],
    )
}

pub fn gradcheck_config(seed: u64) -> TrainConfig {
    TrainConfig {
        word_dim: 4,
        hidden_dim: 3,
        edge_dim: 3,
        node_type_dim: 2,
        distance_dim: 2,
        inference_iterations: 2,
        seed,
        ..TrainConfig::default()
    }
}

/// Compares tape and central-difference gradients of the document loss for
/// each parameter group, and of the mention-pair context for the encoder
/// below the attention.
pub fn gradient_suite(seed: u64, eps: f64) -> Result<Vec<LayerCheck>> {
    let doc = gradcheck_document();
    let docs = std::slice::from_ref(&doc);
    let mut model = EogModel::new(
        gradcheck_config(seed),
        Vocabulary::from_documents(docs),
        relation_names(docs)?,
        None,
    )?;
    let groups: [(&str, fn(&str) -> bool); 5] = [
        ("embeddings", |n| {
            n == "word_embeddings" || n == "node_types" || n.starts_with("distance.")
        }),
        ("bilstm", |n| n.starts_with("lstm.")),
        ("edge_reductions", |n| n.starts_with("reduce.")),
        ("inference_w_2_steps", |n| n == "inference.w"),
        ("classifier", |n| n.starts_with("classifier.")),
    ];
    let mut out = Vec::new();
    let shared = model.clone();
    let loss = |tape: &mut Tape| {
        let l = shared.document_loss(tape, &doc, None, 1.0, None)?;
        Ok(l.expect("gradcheck document has pairs"))
    };
    for (name, select) in groups {
        let r = gradient_report(&mut model.store, eps, select, loss)?;
        out.push(LayerCheck {
            layer: name.into(),
            entries: r.entries,
            max_relative: r.max_relative,
            max_absolute: r.max_absolute,
        });
    }

    let ids: Vec<usize> = doc.sentences[1].tokens.iter().map(|t| model.vocab.get(t)).collect();
    let encoder = model.parts.encoder;
    let attention = |tape: &mut Tape| {
        let h = encoder.encode_sentence::<rand_chacha::ChaCha8Rng>(tape, &ids, None)?;
        let h_t = tape.transpose(h);
        let u1 = tape.mean_rows(h, &[0])?;
        let u2 = tape.mean_rows(h, &[2])?;
        let ctx = mm_context(tape, h, h_t, (u1, 0..1), (u2, 2..3))?;
        Ok(tape.sum_squares(ctx.context))
    };
    let r = gradient_report(
        &mut model.store,
        eps,
        |n| n.starts_with("lstm.") || n == "word_embeddings",
        attention,
    )?;
    out.push(LayerCheck {
        layer: "attention_path".into(),
        entries: r.entries,
        max_relative: r.max_relative,
        max_absolute: r.max_absolute,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_covers_every_group() {
        let checks = gradient_suite(1, 1e-6).unwrap();
        assert_eq!(checks.len(), 6);
        for c in &checks {
            assert!(c.entries > 0, "{}", c.layer);
            assert!(c.max_relative < 1e-3, "{c:?}");
        }
    }
}
