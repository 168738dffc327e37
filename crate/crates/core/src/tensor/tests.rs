use std::sync::Arc;

use proptest::prelude::*;

use super::kernels::*;
use super::*;
use crate::rng;

fn m(rows: &[&[f64]]) -> Matrix<f64> {
    Matrix::from_rows(rows).unwrap()
}

#[test]
fn matmul_examples() {
    let id = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let b = m(&[&[3.0, 4.0], &[5.0, 6.0]]);
    assert_eq!(matmul(&id, &b).unwrap(), b);
    assert_eq!(matmul(&m(&[&[1.0, 2.0]]), &m(&[&[3.0], &[4.0]])).unwrap(), m(&[&[11.0]]));
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let err = matmul(&Matrix::<f64>::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("(2, 3)"), "{msg}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let a = m(&[&[1.0, 2.0]]);
    let b = m(&[&[3.0], &[4.0]]);
    let mut tape = Tape::new();
    let va = tape.param(a.clone());
    let vb = tape.constant(b.clone());
    let out = tape.matmul(va, vb).unwrap();
    let s = tape.sum(out);
    let g = tape.backward(s).unwrap();
    let ga = g.get(va).unwrap();
    assert!((ga[(0, 0)] - 3.0).abs() < 1e-12 && (ga[(0, 1)] - 4.0).abs() < 1e-12);
    assert!(g.get(vb).is_none());
    let err = grad_check(
        |t, v| {
            let o = t.matmul(v[0], v[1])?;
            Ok(t.sum(o))
        },
        &[a, b],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-6);
}

#[test]
fn spmm_examples() {
    let id = SparseCsr::<f64>::identity(2);
    let x = m(&[&[1.5, -0.0], &[2.0, 7.0]]);
    let y = id.spmm(&x).unwrap();
    assert_eq!(
        y.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let half = SparseCsr::from_triplets(2, 2, vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]).unwrap();
    assert_eq!(half.spmm(&m(&[&[2.0], &[4.0]])).unwrap(), m(&[&[3.0], &[3.0]]));
    assert!(half.spmm(&Matrix::zeros(3, 1)).is_err());
}

#[test]
fn spmm_gradient_is_transpose_times_ones() {
    let s = Arc::new(SparseCsr::from_triplets(3, 2, vec![(0, 0, 0.2), (1, 1, 0.7), (2, 0, -1.3), (2, 1, 0.4)]).unwrap());
    let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
    let mut tape = Tape::new();
    let vx = tape.param(x.clone());
    let out = tape.spmm(&s, vx).unwrap();
    let total = tape.sum(out);
    let g = tape.backward(total).unwrap();
    let expected = matmul(&s.to_dense().transpose(), &Matrix::filled(3, 2, 1.0)).unwrap();
    assert!(g.get(vx).unwrap().max_abs_diff(&expected) < 1e-12);
    let err = grad_check(
        |t, v| {
            let o = t.spmm(&s, v[0])?;
            Ok(t.sum(o))
        },
        &[x],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-6);
}

#[test]
fn elementwise_examples() {
    assert_eq!(relu(&m(&[&[-1.0, 2.0]])), m(&[&[0.0, 2.0]]));
    assert_eq!(concat_cols(&m(&[&[1.0]]), &m(&[&[2.0]])).unwrap(), m(&[&[1.0, 2.0]]));
    assert!(concat_cols(&m(&[&[1.0]]), &Matrix::zeros(2, 1)).is_err());
    assert!(add(&m(&[&[1.0]]), &Matrix::zeros(1, 2)).is_err());
    assert!(add_bias(&Matrix::<f64>::zeros(3, 2), &Matrix::zeros(1, 3)).is_err());

    // relu'(0) = 0, upstream [[5, 5]]
    let mut tape = Tape::new();
    let x = tape.param(m(&[&[-1.0, 2.0, 0.0]]));
    let r = tape.relu(x);
    let w = tape.constant(m(&[&[5.0], &[5.0], &[5.0]]));
    let o = tape.matmul(r, w).unwrap();
    let g = tape.backward(o).unwrap();
    assert_eq!(g.get(x).unwrap(), &m(&[&[0.0, 5.0, 0.0]]));
}

#[test]
fn softmax_examples() {
    assert_eq!(softmax_rows(&m(&[&[0.0, 0.0]])), m(&[&[0.5, 0.5]]));
    let big = softmax_rows(&m(&[&[1000.0, 0.0]]));
    assert!(big.all_finite());
    assert!((big[(0, 0)] - 1.0).abs() < 1e-15 && big[(0, 1)] < 1e-300);
    let p = softmax_rows(&m(&[&[2f64.ln(), 0.0]]));
    assert!((p[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    assert!((p[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn cross_entropy_examples() {
    let uniform = Matrix::filled(3, 4, 0.25);
    let ce = cross_entropy(&uniform, &[0, 3, 2], None).unwrap();
    assert!((ce - 4f64.ln()).abs() < 1e-12);
    let onehot = Matrix::<f64>::one_hot(&[1, 0], 2).unwrap();
    assert_eq!(cross_entropy(&onehot, &[1, 0], None).unwrap(), 0.0);
    let ce = cross_entropy(&m(&[&[0.25, 0.75]]), &[1], None).unwrap();
    assert!((ce - 0.2876820724517809).abs() < 1e-12);
    assert!(matches!(
        cross_entropy(&m(&[&[0.5, 0.5]]), &[2], None),
        Err(crate::Error::Index(_))
    ));
    // zero probability clamps at ln 1e-12 instead of diverging
    let clamp = cross_entropy(&m(&[&[1.0, 0.0]]), &[1], None).unwrap();
    assert!((clamp - 1e12f64.ln()).abs() < 1e-9);
}

#[test]
fn weighted_cross_entropy_is_weighted_mean() {
    let p = m(&[&[0.5, 0.5], &[0.25, 0.75]]);
    let w = [1.0, 3.0];
    let ce = cross_entropy(&p, &[0, 1], Some(&w)).unwrap();
    let expected = (2f64.ln() + 3.0 * -(0.75f64.ln())) / 4.0;
    assert!((ce - expected).abs() < 1e-12);
}

#[test]
fn fused_softmax_cross_entropy_agrees_with_composition() {
    let z = m(&[&[0.3, -1.2, 2.0], &[1.0, 1.0, -0.5]]);
    let mut tape = Tape::new();
    let v = tape.constant(z.clone());
    let fused = tape.softmax_cross_entropy(v, &[2, 0], None).unwrap();
    let p = softmax_rows(&z);
    let composed = cross_entropy(&p, &[2, 0], None).unwrap();
    assert!((tape.scalar(fused) - composed).abs() < 1e-12);
}

#[test]
fn kl_examples() {
    let p = m(&[&[0.3, 0.7]]);
    assert_eq!(kl_div_rows(&p, &p).unwrap(), 0.0);
    let kl = kl_div_rows(&m(&[&[1.0, 0.0]]), &m(&[&[0.5, 0.5]])).unwrap();
    assert!((kl - 2f64.ln()).abs() < 1e-12);
    let half = Matrix::filled(2, 2, 0.5);
    assert_eq!(kl_div_rows(&half, &half).unwrap(), 0.0);
    assert!(kl_div_rows(&half, &Matrix::filled(2, 3, 0.2)).is_err());
}

#[test]
fn kl_gradient_flows_only_into_q() {
    let target = m(&[&[0.2, 0.8]]);
    let mut tape = Tape::new();
    let q = tape.param(m(&[&[0.5, 0.5]]));
    let kl = tape.kl_div_rows(&target, q).unwrap();
    let g = tape.backward(kl).unwrap();
    let gq = g.get(q).unwrap();
    assert!((gq[(0, 0)] + 0.4).abs() < 1e-12 && (gq[(0, 1)] + 1.6).abs() < 1e-12);
}

#[test]
fn grad_check_of_constant_is_zero() {
    let err = grad_check(
        |t, _v| Ok(t.constant(Matrix::filled(1, 1, 3.0))),
        &[m(&[&[1.0, 2.0]])],
        1e-6,
    )
    .unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn grad_check_rejects_bad_step_and_nonfinite() {
    assert!(grad_check(|t, v| Ok(t.sum(v[0])), &[m(&[&[1.0]])], 1e-2).is_err());
    let r = grad_check(
        |t, v| {
            let s = t.sum(v[0]);
            Ok(t.scale(s, f64::INFINITY))
        },
        &[m(&[&[1.0]])],
        1e-6,
    );
    assert!(matches!(r, Err(crate::Error::NonFinite(_))));
}

#[test]
fn softmax_cross_entropy_of_linear_map_passes_grad_check() {
    let mut r = rng::stream(7, 0);
    let w: Matrix<f64> = rng::uniform(&mut r, 4, 3, -2.0, 2.0);
    let x: Matrix<f64> = rng::uniform(&mut r, 5, 4, -2.0, 2.0);
    let labels = [0, 2, 1, 1, 0];
    let err = grad_check(
        |t, v| {
            let xv = t.constant(x.clone());
            let z = t.matmul(xv, v[0])?;
            t.softmax_cross_entropy(z, &labels, None)
        },
        &[w],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn backward_requires_scalar_output() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Matrix::zeros(2, 2));
    assert!(tape.backward(x).is_err());
}

#[test]
fn tape_records_topological_order() {
    let mut tape = Tape::<f64>::new();
    let a = tape.param(Matrix::filled(2, 2, 1.0));
    let b = tape.constant(Matrix::filled(2, 2, 2.0));
    let c = tape.matmul(a, b).unwrap();
    let d = tape.relu(c);
    let e = tape.mean(d);
    for v in [c, d, e] {
        assert!(tape.inputs(v).iter().all(|i| i.id() < v.id()));
    }
    assert_eq!(tape.op_kind(c), OpKind::MatMul);
    assert!(!tape.needs_grad(b) && tape.needs_grad(e));
}

/// One random instance per primitive, each reduced to a scalar through a
/// fixed random linear functional so every output entry is exercised.
pub(crate) fn primitive_check(op: &str, seed: u64) -> f64 {
    let mut r = rng::stream(seed, 99);
    let mut rand = |rows, cols| -> Matrix<f64> { rng::uniform(&mut r, rows, cols, -2.0, 2.0) };
    let probe = |t: &mut Tape<f64>, out: Var, w: &Matrix<f64>| -> crate::Result<Var> {
        let s = t.mask(out, w.clone())?;
        Ok(t.sum(s))
    };
    let (a, b) = (rand(3, 4), rand(4, 2));
    let res = match op {
        "matmul" => {
            let w = rand(3, 2);
            grad_check(|t, v| { let o = t.matmul(v[0], v[1])?; probe(t, o, &w) }, &[a, b], 1e-6)
        }
        "spmm" => {
            let dense = rand(3, 3);
            let mut trip = vec![];
            for i in 0..3 {
                for j in 0..3 {
                    if (i + j + seed as usize).is_multiple_of(2) {
                        trip.push((i, j, dense[(i, j)]));
                    }
                }
            }
            let s = Arc::new(SparseCsr::from_triplets(3, 3, trip).unwrap());
            let x = rand(3, 4);
            let w = rand(3, 4);
            grad_check(|t, v| { let o = t.spmm(&s, v[0])?; probe(t, o, &w) }, &[x], 1e-6)
        }
        "relu" => {
            let w = rand(3, 4);
            grad_check(|t, v| { let o = t.relu(v[0]); probe(t, o, &w) }, &[a], 1e-6)
        }
        "add" => {
            let (c, w) = (rand(3, 4), rand(3, 4));
            grad_check(|t, v| { let o = t.add(v[0], v[1])?; probe(t, o, &w) }, &[a, c], 1e-6)
        }
        "sub" => {
            let (c, w) = (rand(3, 4), rand(3, 4));
            grad_check(|t, v| { let o = t.sub(v[0], v[1])?; probe(t, o, &w) }, &[a, c], 1e-6)
        }
        "add_bias" => {
            let (bias, w) = (rand(1, 4), rand(3, 4));
            grad_check(|t, v| { let o = t.add_bias(v[0], v[1])?; probe(t, o, &w) }, &[a, bias], 1e-6)
        }
        "concat_cols" => {
            let (c, w) = (rand(3, 2), rand(3, 6));
            grad_check(|t, v| { let o = t.concat_cols(v[0], v[1])?; probe(t, o, &w) }, &[a, c], 1e-6)
        }
        "scale" => {
            let w = rand(3, 4);
            grad_check(|t, v| { let o = t.scale(v[0], -1.7); probe(t, o, &w) }, &[a], 1e-6)
        }
        "row_scale" => {
            let w = rand(3, 4);
            grad_check(|t, v| { let o = t.row_scale(v[0], vec![0.5, -2.0, 1.5])?; probe(t, o, &w) }, &[a], 1e-6)
        }
        "abs" => {
            let w = rand(3, 4);
            grad_check(|t, v| { let o = t.abs(v[0]); probe(t, o, &w) }, &[a], 1e-6)
        }
        "gather_rows" => {
            let w = rand(4, 4);
            grad_check(|t, v| { let o = t.gather_rows(v[0], vec![2, 0, 2, 1])?; probe(t, o, &w) }, &[a], 1e-6)
        }
        "softmax_rows" => {
            let w = rand(3, 4);
            grad_check(|t, v| { let o = t.softmax_rows(v[0]); probe(t, o, &w) }, &[a], 1e-6)
        }
        "mean" => grad_check(|t, v| { let o = t.relu(v[0]); Ok(t.mean(o)) }, &[a], 1e-6),
        "cross_entropy" => {
            let labels = [1, 3, 0];
            grad_check(
                |t, v| { let p = t.softmax_rows(v[0]); t.cross_entropy(p, &labels, Some(&[1.0, 0.5, 2.0])) },
                &[a],
                1e-6,
            )
        }
        "softmax_cross_entropy" => {
            let labels = [1, 3, 0];
            grad_check(|t, v| t.softmax_cross_entropy(v[0], &labels, None), &[a], 1e-6)
        }
        "kl_div_rows" => {
            let target = softmax_rows(&rand(3, 4));
            grad_check(|t, v| { let q = t.softmax_rows(v[0]); t.kl_div_rows(&target, q) }, &[a], 1e-6)
        }
        "kl_div_logits" => {
            let target = softmax_rows(&rand(3, 4));
            grad_check(|t, v| t.kl_div_logits(&target, v[0]), &[a], 1e-6)
        }
        other => panic!("unknown primitive {other}"),
    };
    res.unwrap()
}

pub(crate) const PRIMITIVES: &[&str] = &[
    "matmul",
    "spmm",
    "relu",
    "add",
    "sub",
    "add_bias",
    "concat_cols",
    "scale",
    "row_scale",
    "abs",
    "gather_rows",
    "softmax_rows",
    "mean",
    "cross_entropy",
    "softmax_cross_entropy",
    "kl_div_rows",
    "kl_div_logits",
];

#[test]
fn every_primitive_passes_grad_check_on_100_random_instances() {
    for op in PRIMITIVES {
        let worst = (0..100).map(|s| primitive_check(op, s)).fold(0.0, f64::max);
        assert!(worst < 1e-4, "{op}: {worst}");
    }
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(vals in proptest::collection::vec(-50.0f64..50.0, 12)) {
        let p = softmax_rows(&Matrix::from_vec(3, 4, vals).unwrap());
        for i in 0..3 {
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn kl_is_nonnegative(a in proptest::collection::vec(-5.0f64..5.0, 8), b in proptest::collection::vec(-5.0f64..5.0, 8)) {
        let p = softmax_rows(&Matrix::from_vec(2, 4, a).unwrap());
        let q = softmax_rows(&Matrix::from_vec(2, 4, b).unwrap());
        prop_assert!(kl_div_rows(&p, &q).unwrap() >= -1e-12);
        prop_assert_eq!(kl_div_rows(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn identity_spmm_is_bit_exact(vals in proptest::collection::vec(proptest::num::f64::ANY, 15)) {
        let x = Matrix::from_vec(5, 3, vals).unwrap();
        let y = SparseCsr::identity(5).spmm(&x).unwrap();
        let bits = |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&x), bits(&y));
    }

    #[test]
    fn kernels_are_deterministic(vals in proptest::collection::vec(-3.0f64..3.0, 12)) {
        let a = Matrix::from_vec(3, 4, vals).unwrap();
        let b = a.transpose();
        prop_assert_eq!(matmul(&a, &b).unwrap(), matmul(&a, &b).unwrap());
        prop_assert_eq!(softmax_rows(&a), softmax_rows(&a));
    }
}

#[test]
fn csr_rejects_invalid_structure() {
    assert!(SparseCsr::<f64>::new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
    assert!(SparseCsr::<f64>::new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
    assert!(SparseCsr::<f64>::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
    assert!(SparseCsr::<f64>::new(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
}

#[test]
fn f32_kernels_work() {
    let a = Matrix::<f32>::from_rows(&[[1.0, 2.0]]).unwrap();
    let b = Matrix::<f32>::from_rows(&[[3.0], [4.0]]).unwrap();
    assert_eq!(matmul(&a, &b).unwrap()[(0, 0)], 11.0f32);
}
