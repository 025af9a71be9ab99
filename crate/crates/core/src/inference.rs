//! Iterative edge inference: walks of length two through an intermediate
//! node are folded into the direct edge, doubling the covered path length
//! with every step.

use rand::Rng;

use crate::autodiff::{sigmoid, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct InferenceParams {
    /// `d x d` bilinear matrix.
    pub weight: ParamId,
    pub beta: f64,
    pub steps: usize,
}

impl InferenceParams {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, beta: f64, steps: usize, rng: &mut R) -> Self {
        Self {
            weight: store.add_weight("inference.w", dim, dim, rng),
            beta,
            steps,
        }
    }
}

/// `σ(e_ik ⊙ W e_kj)` with `w` a row-major `d x d` matrix.
pub fn combine_pair(e_ik: &[f64], e_kj: &[f64], w: &Tensor) -> Vec<f64> {
    let d = e_ik.len();
    (0..d)
        .map(|a| {
            let proj: f64 = (0..d).map(|b| w.get(a, b) * e_kj[b]).sum();
            sigmoid(e_ik[a] * proj)
        })
        .collect()
}

/// Plain symmetric edge matrix, used outside the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMatrix {
    pub n: usize,
    pub dim: usize,
    /// Row `i*n + j` holds cell `(i, j)`.
    pub cells: Vec<f64>,
    pub mask: Vec<bool>,
}

impl EdgeMatrix {
    pub fn new(n: usize, dim: usize, cells: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if cells.len() != n * n * dim || mask.len() != n * n {
            return Err(Error::shape("edge matrix", &[n, n, dim], &[cells.len(), mask.len()]));
        }
        Ok(Self { n, dim, cells, mask })
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.n + j) * self.dim;
        &self.cells[o..o + self.dim]
    }

    pub fn exists(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }
}

/// One synchronous update of every unordered pair, computed pair by pair.
pub fn inference_step(m: &EdgeMatrix, w: &Tensor, beta: f64) -> EdgeMatrix {
    let (n, d) = (m.n, m.dim);
    let mut next = m.clone();
    for i in 0..n {
        for j in i + 1..n {
            let mut agg = vec![0.0; d];
            let mut reached = false;
            for k in 0..n {
                if k == i || k == j || !m.exists(i, k) || !m.exists(k, j) {
                    continue;
                }
                reached = true;
                for (a, f) in agg.iter_mut().zip(combine_pair(m.cell(i, k), m.cell(k, j), w)) {
                    *a += f;
                }
            }
            let old = m.cell(i, j);
            let v: Vec<f64> = old
                .iter()
                .zip(&agg)
                .map(|(&e, &s)| beta * e + (1.0 - beta) * s)
                .collect();
            for (x, y) in [(i, j), (j, i)] {
                let o = (x * n + y) * d;
                next.cells[o..o + d].copy_from_slice(&v);
                next.mask[x * n + y] = m.exists(i, j) || reached;
            }
        }
    }
    next
}

pub fn run_inference(m: &EdgeMatrix, w: &Tensor, beta: f64, steps: usize) -> EdgeMatrix {
    let mut cur = m.clone();
    for _ in 0..steps {
        cur = inference_step(&cur, w, beta);
    }
    cur
}

/// Existence after one step: an edge exists if it did or if some other node
/// is adjacent to both ends.
pub fn existence_step(mask: &[bool], n: usize) -> Vec<bool> {
    let mut next = mask.to_vec();
    for i in 0..n {
        for j in 0..n {
            if i != j && !mask[i * n + j] {
                next[i * n + j] = (0..n).any(|k| k != i && k != j && mask[i * n + k] && mask[k * n + j]);
            }
        }
    }
    next
}

pub fn existence_after(mask: &[bool], n: usize, steps: usize) -> Vec<bool> {
    let mut cur = mask.to_vec();
    for _ in 0..steps {
        cur = existence_step(&cur, n);
    }
    cur
}

/// Runs `params.steps` updates on the tape. Returns the final cells and
/// existence mask.
pub fn infer(
    tape: &mut Tape,
    params: &InferenceParams,
    cells: Var,
    mask: &[bool],
    n: usize,
) -> Result<(Var, Vec<bool>)> {
    let w = tape.param(params.weight);
    let mut cur = cells;
    let mut mask = mask.to_vec();
    for _ in 0..params.steps {
        cur = tape.pair_walk(cur, w, &mask, n, params.beta)?;
        mask = existence_step(&mask, n);
    }
    Ok((cur, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_check, ParamKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one() -> Tensor {
        Tensor::matrix(1, 1, vec![1.0]).unwrap()
    }

    /// Three nodes, path 0 - 2 - 1 with the given values on (0,1), (0,2), (2,1).
    fn triangle(e01: Option<f64>, e02: f64, e21: f64) -> EdgeMatrix {
        let n = 3;
        let mut cells = vec![0.0; 9];
        let mut mask = vec![false; 9];
        let mut set = |i: usize, j: usize, v: f64| {
            for (x, y) in [(i, j), (j, i)] {
                cells[x * n + y] = v;
                mask[x * n + y] = true;
            }
        };
        if let Some(v) = e01 {
            set(0, 1, v);
        }
        set(0, 2, e02);
        set(2, 1, e21);
        EdgeMatrix::new(n, 1, cells, mask).unwrap()
    }

    #[test]
    fn combine_hand_value() {
        let f = combine_pair(&[0.5], &[0.5], &one());
        assert!((f[0] - 0.5622).abs() < 1e-4);
        assert_eq!(combine_pair(&[0.0, 0.0], &[3.0, -2.0], &Tensor::matrix(2, 2, vec![1.0; 4]).unwrap()), vec![0.5, 0.5]);
    }

    #[test]
    fn interpolated_hand_value() {
        let out = inference_step(&triangle(Some(0.2), 0.5, 0.5), &one(), 0.8);
        assert!((out.cell(0, 1)[0] - 0.2724).abs() < 1e-4);
        assert_eq!(out.cell(0, 1), out.cell(1, 0));
    }

    #[test]
    fn missing_edge_created_from_zero() {
        let out = inference_step(&triangle(None, 0.5, 0.5), &one(), 0.8);
        assert!(out.exists(0, 1) && out.exists(1, 0));
        assert!((out.cell(0, 1)[0] - 0.2 * sigmoid(0.25)).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_is_identity() {
        let m = triangle(None, 0.3, -0.1);
        assert_eq!(run_inference(&m, &one(), 0.8, 0), m);
    }

    #[test]
    fn beta_one_keeps_existing_edges() {
        let m = triangle(Some(0.7), 0.3, -0.1);
        let out = run_inference(&m, &one(), 1.0, 3);
        assert_eq!(out, m);
    }

    #[test]
    fn tape_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, d) = (6, 3);
        let mut mask = vec![false; n * n];
        let mut cells = vec![0.0; n * n * d];
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.4) {
                    for (x, y) in [(i, j), (j, i)] {
                        mask[x * n + y] = true;
                    }
                    for a in 0..d {
                        let v = rng.gen_range(-1.0..1.0);
                        cells[(i * n + j) * d + a] = v;
                        cells[(j * n + i) * d + a] = v;
                    }
                }
            }
        }
        let mut store = ParamStore::new();
        let p = InferenceParams::new(&mut store, d, 0.8, 2, &mut rng);
        let reference = run_inference(
            &EdgeMatrix::new(n, d, cells.clone(), mask.clone()).unwrap(),
            store.value(p.weight),
            0.8,
            2,
        );
        let mut tape = Tape::new(&store);
        let c = tape.constant(Tensor::matrix(n * n, d, cells).unwrap());
        let (out, m) = infer(&mut tape, &p, c, &mask, n).unwrap();
        assert_eq!(m, reference.mask);
        for (a, b) in tape.value(out).data().iter().zip(&reference.cells) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_through_two_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, d) = (5, 3);
        let mut store = ParamStore::new();
        let p = InferenceParams::new(&mut store, d, 0.8, 2, &mut rng);
        let init: Vec<f64> = (0..n * n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = store.add("edges", ParamKind::Weight, Tensor::matrix(n * n, d, init).unwrap());
        let mut mask = vec![false; n * n];
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)] {
            mask[i * n + j] = true;
            mask[j * n + i] = true;
        }
        let err = finite_difference_check(&mut store, 1e-6, |tape| {
            let cells = tape.param(e);
            let (out, _) = infer(tape, &p, cells, &mask, n)?;
            let sq = tape.sum_squares(out);
            Ok(sq)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    proptest! {
        #[test]
        fn existence_is_monotone_and_symmetric(bits in proptest::collection::vec(any::<bool>(), 36), steps in 0usize..4) {
            let n = 9;
            let mut mask = vec![false; n * n];
            let mut b = bits.into_iter();
            for i in 0..n {
                for j in i + 1..n {
                    if b.next().unwrap_or(false) {
                        mask[i * n + j] = true;
                        mask[j * n + i] = true;
                    }
                }
            }
            let after = existence_after(&mask, n, steps);
            for i in 0..n {
                prop_assert!(!after[i * n + i]);
                for j in 0..n {
                    prop_assert_eq!(after[i * n + j], after[j * n + i]);
                    prop_assert!(!mask[i * n + j] || after[i * n + j]);
                }
            }
        }
    }
}
