//! Softmax relation classifier over entity-pair representations.

use rand::Rng;

use crate::autodiff::{softmax_row, ParamId, ParamKind, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct ClassifierParams {
    /// `d x r`.
    pub weight: ParamId,
    /// `1 x r`.
    pub bias: ParamId,
    pub classes: usize,
}

impl ClassifierParams {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        Ok(Self {
            weight: store.add_weight("classifier.w", dim, classes, rng),
            bias: store.add_bias("classifier.b", vec![0.0; classes]),
            classes,
        })
    }

    /// Index of the no-relation class.
    pub fn none_class(&self) -> usize {
        self.classes - 1
    }
}

/// `k x r` logits for `k x d` pair representations, with dropout on the
/// representations when given.
pub fn logits<R: Rng>(
    tape: &mut Tape,
    params: &ClassifierParams,
    reps: Var,
    dropout: Option<(f64, &mut R)>,
) -> Result<Var> {
    let x = match dropout {
        Some((rate, rng)) => tape.dropout(reps, rate, rng)?,
        None => reps,
    };
    let w = tape.param(params.weight);
    let b = tape.param(params.bias);
    let z = tape.matmul(x, w)?;
    tape.add_row(z, b)
}

/// Row-wise class distributions of a logit matrix.
pub fn probabilities(tape: &Tape, logits: Var) -> Result<Vec<Vec<f64>>> {
    let v = tape.value(logits);
    (0..v.rows()).map(|r| softmax_row(v.row_slice(r), None)).collect()
}

/// Sum of squares of every weight matrix; embeddings and biases excluded.
pub fn l2_penalty(store: &ParamStore) -> f64 {
    store
        .iter()
        .filter(|(_, p)| p.kind == ParamKind::Weight && p.requires_grad)
        .map(|(_, p)| p.value.data().iter().map(|x| x * x).sum::<f64>())
        .sum()
}

/// Adds the gradient of `lambda * l2_penalty` to the stored gradients.
pub fn add_l2_gradient(store: &mut ParamStore, lambda: f64) {
    for p in store.iter_mut() {
        if p.kind != ParamKind::Weight || !p.requires_grad {
            continue;
        }
        let n = p.value.len();
        let g = p.grad.get_or_insert_with(|| vec![0.0; n]);
        for (g, &w) in g.iter_mut().zip(p.value.data()) {
            *g += 2.0 * lambda * w;
        }
    }
}

/// Mean negative log-likelihood of `gold` plus `lambda` times the squared
/// norm of every weight matrix, all on the tape.
pub fn pair_loss(tape: &mut Tape, logits: Var, gold: &[usize], lambda: f64) -> Result<Var> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no pairs to score".into()));
    }
    let nll = tape.cross_entropy(logits, gold)?;
    let mut loss = tape.scale(nll, 1.0 / gold.len() as f64);
    if lambda != 0.0 {
        let ids: Vec<ParamId> = tape
            .params()
            .iter()
            .filter(|(_, p)| p.kind == ParamKind::Weight && p.requires_grad)
            .map(|(id, _)| id)
            .collect();
        for id in ids {
            let w = tape.param(id);
            let sq = tape.sum_squares(w);
            let sq = tape.scale(sq, lambda);
            loss = tape.add(loss, sq)?;
        }
    }
    Ok(loss)
}

/// Arg-max class; ties go to the lower index.
pub fn decide(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}
