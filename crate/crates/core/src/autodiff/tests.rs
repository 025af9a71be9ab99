use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn store_with(values: &[(&str, Vec<usize>, Vec<f64>)]) -> ParamStore {
    let mut s = ParamStore::new();
    for (name, shape, data) in values {
        s.add(
            *name,
            ParamKind::Weight,
            Tensor::new(shape.clone(), data.clone()).unwrap(),
        );
    }
    s
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Contracts an arbitrary output with fixed random weights so every entry
/// contributes a distinct amount to the scalar.
fn project(tape: &mut Tape, v: Var, seed: u64) -> crate::Result<Var> {
    let (m, n) = tape.value(v).dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(Tensor::matrix(m, n, random(&mut rng, m * n)).unwrap());
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

#[test]
fn sigmoid_at_zero() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.constant(Tensor::row(vec![0.0]));
    let y = t.sigmoid(x);
    assert_eq!(t.value(y).data(), &[0.5]);
}

#[test]
fn softmax_two_logits() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.constant(Tensor::row(vec![1.0, -1.0]));
    let y = t.softmax(x, None).unwrap();
    let v = t.value(y).data();
    // e / (e + e^-1) and its complement
    let e = 1f64.exp();
    let expect0 = e / (e + 1.0 / e);
    assert!((v[0] - expect0).abs() < 1e-15);
    assert!((v[0] - 0.8808).abs() < 1e-4 && (v[1] - 0.1192).abs() < 1e-4);
}

#[test]
fn masked_softmax_zero_at_mask() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.constant(Tensor::row(vec![3.0, 1.0, 2.0]));
    let y = t.softmax(x, Some(&[true, false, true])).unwrap();
    let v = t.value(y).data();
    assert_eq!(v[1], 0.0);
    assert!((v[0] + v[2] - 1.0).abs() < 1e-15);
}

#[test]
fn all_masked_softmax_errors() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.constant(Tensor::row(vec![3.0, 1.0]));
    assert!(matches!(
        t.softmax(x, Some(&[false, false])),
        Err(Error::AllMasked)
    ));
}

#[test]
fn concat_last_axis() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let a = t.constant(Tensor::row(vec![1.0, 2.0]));
    let b = t.constant(Tensor::row(vec![3.0]));
    let c = t.concat(&[a, b]).unwrap();
    assert_eq!(t.value(c).data(), &[1.0, 2.0, 3.0]);
}

#[test]
fn shape_error_names_primitive_and_shapes() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    let err = t.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
}

#[test]
fn linear_loss_gradient() {
    let s = store_with(&[("p", vec![1], vec![0.3])]);
    let mut t = Tape::new(&s);
    let p = t.param(ParamId(0));
    let l = t.scale(p, 2.0);
    let l = t.sum(l);
    let g = t.backward(l).unwrap();
    assert_eq!(g.dense(ParamId(0), 1).unwrap(), vec![2.0]);
}

#[test]
fn sigmoid_gradient_at_zero() {
    let s = store_with(&[("p", vec![1], vec![0.0])]);
    let mut t = Tape::new(&s);
    let p = t.param(ParamId(0));
    let l = t.sigmoid(p);
    let g = t.backward(l).unwrap();
    assert_eq!(g.dense(ParamId(0), 1).unwrap(), vec![0.25]);
}

#[test]
fn detached_param_gets_no_grad() {
    let mut s = store_with(&[("p", vec![1], vec![1.0]), ("q", vec![1], vec![2.0])]);
    s.get_mut(ParamId(1)).requires_grad = false;
    let mut t = Tape::new(&s);
    let p = t.param(ParamId(0));
    let q = t.param(ParamId(1));
    let l = t.mul(p, q).unwrap();
    let g = t.backward(l).unwrap();
    assert!(g.contains(ParamId(0)));
    assert!(!g.contains(ParamId(1)));
}

#[test]
fn non_scalar_loss_rejected() {
    let s = store_with(&[("p", vec![2], vec![1.0, 2.0])]);
    let mut t = Tape::new(&s);
    let p = t.param(ParamId(0));
    assert!(matches!(t.backward(p), Err(Error::NonScalarLoss(_))));
}

#[test]
fn lookup_accumulates_repeated_rows() {
    let s = store_with(&[("emb", vec![3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0])]);
    let mut t = Tape::new(&s);
    let x = t.lookup(ParamId(0), &[2, 0, 2]).unwrap();
    assert_eq!(t.value(x).data(), &[4.0, 5.0, 0.0, 1.0, 4.0, 5.0]);
    let l = t.sum(x);
    let g = t.backward(l).unwrap().dense(ParamId(0), 6).unwrap();
    assert_eq!(g, vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
}

#[test]
fn eps_must_be_positive() {
    let mut s = store_with(&[("p", vec![1], vec![1.0])]);
    let r = finite_difference_check(&mut s, 0.0, |t| {
        let p = t.param(ParamId(0));
        Ok(t.sum(p))
    });
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn finite_difference_exact_for_linear() {
    let mut s = store_with(&[("p", vec![1, 3], vec![0.5, -1.0, 2.0])]);
    let err = finite_difference_check(&mut s, 1e-4, |t| {
        let p = t.param(ParamId(0));
        project(t, p, 9)
    })
    .unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn dropout_inverted_scaling() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.constant(Tensor::row(vec![1.0; 1000]));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = t.dropout(x, 0.5, &mut rng).unwrap();
    for &v in t.value(y).data() {
        assert!(v == 0.0 || v == 2.0);
    }
    assert!(t.dropout(x, 1.0, &mut rng).is_err());
}

/// Every primitive's gradient at random small shapes.
#[test]
fn primitives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    type Build = fn(&mut Tape, Var, Var) -> crate::Result<Var>;
    let cases: Vec<(&str, Build)> = vec![
        ("matmul", |t, a, b| {
            let bt = t.transpose(b);
            t.matmul(a, bt)
        }),
        ("add", |t, a, b| t.add(a, b)),
        ("add_row", |t, a, b| {
            let r = t.select_rows(b, &[1])?;
            t.add_row(a, r)
        }),
        ("mul", |t, a, b| t.mul(a, b)),
        ("scale", |t, a, _| Ok(t.scale(a, -1.7))),
        ("sigmoid", |t, a, _| Ok(t.sigmoid(a))),
        ("tanh", |t, a, _| Ok(t.tanh(a))),
        ("concat", |t, a, b| t.concat(&[a, b, a])),
        ("stack_rows", |t, a, b| t.stack_rows(&[b, a])),
        ("select_rows", |t, a, _| t.select_rows(a, &[2, 0, 2])),
        ("slice_cols", |t, a, _| t.slice_cols(a, 1, 2)),
        ("mean_rows", |t, a, _| t.mean_rows(a, &[0, 2])),
        ("softmax", |t, a, _| t.softmax(a, None)),
        ("masked_softmax", |t, a, _| {
            t.softmax(a, Some(&[true, false, true, true]))
        }),
        ("interpolate", |t, a, b| t.interpolate(a, b, 0.8)),
        ("scatter_rows", |t, a, _| t.scatter_rows(a, &[4, 1, 4], 6)),
        ("sum_squares", |t, a, _| Ok(t.sum_squares(a))),
        ("cross_entropy", |t, a, _| t.cross_entropy(a, &[3, 0, 1])),
    ];
    for (name, build) in cases {
        for trial in 0..3 {
            let mut s = store_with(&[
                ("a", vec![3, 4], random(&mut rng, 12)),
                ("b", vec![3, 4], random(&mut rng, 12)),
            ]);
            let err = finite_difference_check(&mut s, 1e-5, |t| {
                let a = t.param(ParamId(0));
                let b = t.param(ParamId(1));
                let out = build(t, a, b)?;
                project(t, out, 100 + trial)
            })
            .unwrap();
            assert!(err < 1e-4, "{name}: relative error {err}");
        }
    }
}

#[test]
fn lookup_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = store_with(&[("emb", vec![4, 3], random(&mut rng, 12))]);
    let err = finite_difference_check(&mut s, 1e-5, |t| {
        let x = t.lookup(ParamId(0), &[1, 3, 1])?;
        let y = t.tanh(x);
        project(t, y, 3)
    })
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn pair_walk_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 4;
    let d = 3;
    let mask = vec![
        false, true, false, true, //
        true, false, true, true, //
        false, true, false, false, //
        true, true, false, false,
    ];
    let mut edges = random(&mut rng, n * n * d);
    for c in 0..n * n {
        if !mask[c] {
            edges[c * d..(c + 1) * d].iter_mut().for_each(|x| *x = 0.0);
        }
    }
    let mut s = store_with(&[
        ("edges", vec![n * n, d], edges),
        ("w", vec![d, d], random(&mut rng, d * d)),
    ]);
    let err = finite_difference_check(&mut s, 1e-5, |t| {
        let e = t.param(ParamId(0));
        let w = t.param(ParamId(1));
        let once = t.pair_walk(e, w, &mask, n, 0.8)?;
        let mut mask2 = mask.clone();
        for (i, m) in mask2.iter_mut().enumerate() {
            *m = *m || (i / n != i % n);
        }
        let twice = t.pair_walk(once, w, &mask2, n, 0.8)?;
        project(t, twice, 17)
    })
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    proptest! {
        #[test]
        fn masked_softmax_sums_to_one(
            logits in prop::collection::vec(-50.0f64..50.0, 1..20),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mask: Vec<bool> = logits.iter().map(|_| rng.gen_bool(0.6)).collect();
            mask[0] = true;
            let p = softmax_row(&logits, Some(&mask)).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (pi, m) in p.iter().zip(&mask) {
                prop_assert!(*pi >= 0.0);
                if !m { prop_assert_eq!(*pi, 0.0); }
            }
        }
    }
}

#[test]
fn softmax_propagates_nan_instead_of_failing() {
    let p = super::softmax_row(&[f64::NAN, 1.0], Some(&[true, true])).unwrap();
    assert!(p.iter().all(|x| x.is_nan()));
    assert!(matches!(super::softmax_row(&[1.0], Some(&[false])), Err(crate::Error::AllMasked)));
}
