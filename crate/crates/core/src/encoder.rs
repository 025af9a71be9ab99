//! Word embeddings followed by a single-layer bidirectional LSTM, applied to
//! each sentence independently.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// One LSTM direction. Gates are laid out `[input, forget, cell, output]`
/// along the columns of each matrix.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
}

impl LstmParams {
    fn new<R: Rng>(store: &mut ParamStore, prefix: &str, inp: usize, hidden: usize, rng: &mut R) -> Self {
        let input = store.add_weight(format!("{prefix}.w_ih"), inp, 4 * hidden, rng);
        let recurrent = store.add_weight(format!("{prefix}.w_hh"), hidden, 4 * hidden, rng);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let bias = store.add_bias(format!("{prefix}.bias"), b);
        Self {
            input,
            recurrent,
            bias,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderParams {
    pub words: ParamId,
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub hidden: usize,
}

impl EncoderParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        vocab_size: usize,
        word_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let words = store.add_embedding("word_embeddings", vocab_size, word_dim, rng);
        let forward = LstmParams::new(store, "lstm.fwd", word_dim, hidden, rng);
        let backward = LstmParams::new(store, "lstm.bwd", word_dim, hidden, rng);
        Self {
            words,
            forward,
            backward,
            hidden,
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// The same encoder with its two directions exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            forward: self.backward,
            backward: self.forward,
            ..*self
        }
    }

    pub fn embed_tokens(&self, tape: &mut Tape, tokens: &[usize]) -> Result<Var> {
        tape.lookup(self.words, tokens)
    }

    /// `len x 2*hidden` contextual vectors. Position `t` holds the forward
    /// state after tokens `0..=t` followed by the backward state after
    /// tokens `t..`. With `dropout`, the embedded inputs are dropped at
    /// the given rate.
    pub fn encode_sentence<R: Rng>(
        &self,
        tape: &mut Tape,
        tokens: &[usize],
        dropout: Option<(f64, &mut R)>,
    ) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("cannot encode an empty sentence".into()));
        }
        let mut x = self.embed_tokens(tape, tokens)?;
        if let Some((rate, rng)) = dropout {
            x = tape.dropout(x, rate, rng)?;
        }
        let order: Vec<usize> = (0..tokens.len()).collect();
        let fwd = self.run_direction(tape, x, &self.forward, &order)?;
        let rev: Vec<usize> = order.iter().rev().copied().collect();
        let bwd = self.run_direction(tape, x, &self.backward, &rev)?;
        tape.concat(&[fwd, bwd])
    }

    /// Runs one direction over the rows of `x` in `order`; returns hidden
    /// states placed back at their original row positions.
    fn run_direction(&self, tape: &mut Tape, x: Var, p: &LstmParams, order: &[usize]) -> Result<Var> {
        let h = self.hidden;
        let w_ih = tape.param(p.input);
        let w_hh = tape.param(p.recurrent);
        let bias = tape.param(p.bias);
        let projected = tape.matmul(x, w_ih)?;
        let projected = tape.add_row(projected, bias)?;

        let mut states: Vec<Option<Var>> = vec![None; order.len()];
        let mut prev: Option<(Var, Var)> = None;
        for &t in order {
            let mut gates = tape.select_rows(projected, &[t])?;
            if let Some((h_prev, _)) = prev {
                let rec = tape.matmul(h_prev, w_hh)?;
                gates = tape.add(gates, rec)?;
            }
            let i = tape.slice_cols(gates, 0, h)?;
            let i = tape.sigmoid(i);
            let f = tape.slice_cols(gates, h, h)?;
            let f = tape.sigmoid(f);
            let g = tape.slice_cols(gates, 2 * h, h)?;
            let g = tape.tanh(g);
            let o = tape.slice_cols(gates, 3 * h, h)?;
            let o = tape.sigmoid(o);
            let mut c = tape.mul(i, g)?;
            if let Some((_, c_prev)) = prev {
                let keep = tape.mul(f, c_prev)?;
                c = tape.add(keep, c)?;
            }
            let ct = tape.tanh(c);
            let hidden = tape.mul(o, ct)?;
            states[t] = Some(hidden);
            prev = Some((hidden, c));
        }
        let states: Vec<Var> = states.into_iter().map(|s| s.expect("every row visited")).collect();
        tape.stack_rows(&states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type NoRng = ChaCha8Rng;

    fn setup(vocab: usize, dim: usize, hidden: usize, seed: u64) -> (ParamStore, EncoderParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = EncoderParams::new(&mut store, vocab, dim, hidden, &mut rng);
        // larger weights so the recurrence is not nearly linear
        for p in store.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|x| *x *= 4.0);
        }
        (store, enc)
    }

    #[test]
    fn single_token_shape() {
        let (store, enc) = setup(5, 4, 3, 0);
        let mut tape = Tape::new(&store);
        let out = enc.encode_sentence::<NoRng>(&mut tape, &[2], None).unwrap();
        assert_eq!(tape.value(out).dims(), (1, 6));
    }

    #[test]
    fn empty_sentence_rejected() {
        let (store, enc) = setup(5, 4, 3, 0);
        let mut tape = Tape::new(&store);
        assert!(enc.encode_sentence::<NoRng>(&mut tape, &[], None).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let (mut store, enc) = setup(5, 4, 3, 0);
        for p in store.iter_mut() {
            if p.name.starts_with("lstm") {
                p.value.data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let mut tape = Tape::new(&store);
        let out = enc.encode_sentence::<NoRng>(&mut tape, &[1, 2, 3], None).unwrap();
        assert!(tape.value(out).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn direction_symmetry() {
        let (store, enc) = setup(10, 4, 3, 7);
        let tokens = [3, 1, 4, 1, 5];
        let reversed: Vec<usize> = tokens.iter().rev().copied().collect();
        let mut tape = Tape::new(&store);
        let a = enc.encode_sentence::<NoRng>(&mut tape, &tokens, None).unwrap();
        let b = enc
            .swapped()
            .encode_sentence::<NoRng>(&mut tape, &reversed, None)
            .unwrap();
        let (a, b) = (tape.value(a), tape.value(b));
        let h = 3;
        for t in 0..5 {
            let ra = a.row_slice(t);
            let rb = b.row_slice(4 - t);
            for k in 0..h {
                assert!((ra[k] - rb[h + k]).abs() < 1e-12);
                assert!((ra[h + k] - rb[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embed_tokens_fixture() {
        let (store, enc) = setup(4, 2, 1, 3);
        let mut tape = Tape::new(&store);
        let x = enc.embed_tokens(&mut tape, &[2, 0]).unwrap();
        let table = store.value(enc.words);
        assert_eq!(tape.value(x).row_slice(0), table.row_slice(2));
        assert_eq!(tape.value(x).row_slice(1), table.row_slice(0));
        assert!(enc.embed_tokens(&mut tape, &[4]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut store, enc) = setup(6, 3, 3, 11);
        let err = finite_difference_check(&mut store, 1e-5, |tape| {
            let out = enc.encode_sentence::<NoRng>(tape, &[1, 4, 2, 4], None)?;
            let w = tape.constant(crate::autodiff::Tensor::matrix(
                4,
                6,
                (0..24).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect(),
            )?);
            let p = tape.mul(out, w)?;
            Ok(tape.sum(p))
        })
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let (store, enc) = setup(6, 3, 3, 2);
        let mut t1 = Tape::new(&store);
        let a = enc.encode_sentence::<NoRng>(&mut t1, &[1, 2, 3], None).unwrap();
        let mut t2 = Tape::new(&store);
        let b = enc.encode_sentence::<NoRng>(&mut t2, &[1, 2, 3], None).unwrap();
        assert_eq!(t1.value(a), t2.value(b));
    }
}
