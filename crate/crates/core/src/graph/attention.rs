use std::ops::Range;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

/// Context vector of a mention pair and the word weights behind it.
#[derive(Clone, Copy, Debug)]
pub struct MmContext {
    /// `1 x word_dim`.
    pub context: Var,
    /// `1 x len` weights over the sentence, or `None` when neither argument
    /// has an eligible word and the context is zero.
    pub weights: Option<Var>,
    /// Distribution of each argument, `None` when it has no eligible word.
    pub arguments: [Option<Var>; 2],
}

/// Argument-based attention over sentence `h` (`len x word_dim`, with
/// `h_t` its transpose). Each argument's logits are the dot products of its
/// word part with every word; the softmax skips the argument's own tokens.
/// The two distributions are averaged and `c = Hᵀ a`; an argument that
/// covers the whole sentence drops out of the average.
pub fn mm_context(
    tape: &mut Tape,
    h: Var,
    h_t: Var,
    first: (Var, Range<usize>),
    second: (Var, Range<usize>),
) -> Result<MmContext> {
    let len = tape.value(h).rows();
    let mut arguments = [None, None];
    for (k, (part, span)) in [first, second].into_iter().enumerate() {
        let mask: Vec<bool> = (0..len).map(|i| !span.contains(&i)).collect();
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let logits = tape.matmul(part, h_t)?;
        arguments[k] = Some(tape.softmax(logits, Some(&mask))?);
    }
    let dists: Vec<Var> = arguments.iter().flatten().copied().collect();
    let weights = match dists[..] {
        [] => {
            let width = tape.value(h).cols();
            let context = tape.constant(Tensor::zeros(&[1, width]));
            return Ok(MmContext {
                context,
                weights: None,
                arguments,
            });
        }
        [a] => a,
        [a, b] => tape.interpolate(a, b, 0.5)?,
        _ => unreachable!(),
    };
    let context = tape.matmul(weights, h)?;
    Ok(MmContext {
        context,
        weights: Some(weights),
        arguments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;

    fn run(words: &[[f64; 2]], s1: Range<usize>, s2: Range<usize>) -> (Vec<f64>, Option<Vec<f64>>) {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let flat: Vec<f64> = words.iter().flatten().copied().collect();
        let h = tape.constant(Tensor::matrix(words.len(), 2, flat).unwrap());
        let h_t = tape.transpose(h);
        let mean = |tape: &mut Tape, r: &Range<usize>| {
            let rows: Vec<usize> = r.clone().collect();
            tape.mean_rows(h, &rows).unwrap()
        };
        let u1 = mean(&mut tape, &s1);
        let u2 = mean(&mut tape, &s2);
        let out = mm_context(&mut tape, h, h_t, (u1, s1), (u2, s2)).unwrap();
        (
            tape.value(out.context).data().to_vec(),
            out.weights.map(|w| tape.value(w).data().to_vec()),
        )
    }

    #[test]
    fn hand_computed_three_words() {
        let (c, w) = run(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 0..1, 1..2);
        // argument 1 = [1,0]: logits over words 2,3 are 0 and 1
        let e = std::f64::consts::E;
        let a1 = [0.0, 1.0 / (1.0 + e), e / (1.0 + e)];
        // argument 2 = [0,1]: logits over words 1,3 are 0 and 1
        let a2 = [1.0 / (1.0 + e), 0.0, e / (1.0 + e)];
        let a: Vec<f64> = (0..3).map(|i| (a1[i] + a2[i]) / 2.0).collect();
        let w = w.unwrap();
        for i in 0..3 {
            assert!((w[i] - a[i]).abs() < 1e-12);
        }
        let expect = [a[0] + a[2], a[1] + a[2]];
        assert!((c[0] - expect[0]).abs() < 1e-12 && (c[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn identical_words_give_uniform_support() {
        let (_, w) = run(&[[0.3, 0.3]; 5], 0..2, 4..5);
        let w = w.unwrap();
        let a1 = [0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let a2 = [0.25, 0.25, 0.25, 0.25, 0.0];
        for i in 0..5 {
            assert!((w[i] - (a1[i] + a2[i]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sentence_of_only_mentions_gives_zero_context() {
        let (c, w) = run(&[[1.0, 2.0], [3.0, 4.0]], 0..1, 1..2);
        assert!(w.is_some());
        assert!(c.iter().all(|x| x.is_finite()));
        let (c, w) = run(&[[1.0, 2.0], [3.0, 4.0]], 0..2, 0..2);
        assert!(w.is_none());
        assert_eq!(c, vec![0.0, 0.0]);
    }
}
