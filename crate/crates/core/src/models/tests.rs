use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::graph::synth_sbm;
use crate::tensor::{grad_check, Tape};

fn small_graph(seed: u64) -> Graph<f64> {
    synth_sbm(12, 3, 0.5, 0.2, 5, 1.0, seed).unwrap()
}

fn model(g: &Graph<f64>, hidden: &[usize], kind: PropagationKind, seed: u64) -> Model<f64> {
    let specs = LayerSpec::chain(g.feature_dim(), hidden, g.num_classes(), 0.5);
    Model::new(init_params(&specs, seed).unwrap(), Propagation::build(kind, g)).unwrap()
}

#[test]
fn one_layer_linear_example() {
    let op = SparseCsr::from_triplets(2, 2, vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]).unwrap();
    let prop = Propagation {
        kind: PropagationKind::GcnSym,
        op: Arc::new(op),
    };
    let params = ModelParams {
        specs: LayerSpec::chain(1, &[], 1, 0.0),
        weights: vec![Matrix::from_rows(&[[1.0]]).unwrap()],
        biases: vec![Matrix::zeros(1, 1)],
    };
    let x = Matrix::from_rows(&[[2.0], [4.0]]).unwrap();
    let out = forward(&params, &prop, &x, Mode::Eval).unwrap();
    assert_eq!(out.logits, Matrix::from_rows(&[[3.0], [3.0]]).unwrap());
}

#[test]
fn identity_forward_is_bit_identical_to_mlp_forward() {
    let g = small_graph(1);
    let m = model(&g, &[8, 6], PropagationKind::GcnSym, 2).derive_mlp();
    let a = m.eval(g.features()).unwrap();
    let b = mlp_forward(&m.params(), g.features()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn eval_is_deterministic_and_train_mode_uses_dropout() {
    let g = small_graph(1);
    let m = model(&g, &[8], PropagationKind::GcnSym, 2);
    assert_eq!(m.eval(g.features()).unwrap(), m.eval(g.features()).unwrap());
    let mut r = rng::stream(0, streams::DROPOUT);
    let t = m.forward(g.features(), Mode::Train(&mut r)).unwrap();
    assert_ne!(t.logits, m.eval(g.features()).unwrap().logits);
    for row in 0..t.probabilities.rows() {
        let s: f64 = t.probabilities.row(row).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn derive_mlp_shares_parameters() {
    let g = small_graph(3);
    let gnn = model(&g, &[8], PropagationKind::GcnSym, 4);
    let mlp = gnn.derive_mlp();
    assert!(mlp.shares_params_with(&gnn));
    assert_eq!(mlp.prop.kind, PropagationKind::Identity);
    let twice = mlp.derive_mlp();
    assert_eq!(twice.prop.kind, mlp.prop.kind);
    assert_eq!(*twice.prop.op, *mlp.prop.op);
    assert_eq!(twice.eval(g.features()).unwrap(), mlp.eval(g.features()).unwrap());

    assert_ne!(gnn.eval(g.features()).unwrap().logits, mlp.eval(g.features()).unwrap().logits);

    let before = mlp.eval(g.features()).unwrap();
    gnn.params_mut().weights[0].as_mut_slice()[0] += 1.0;
    assert_ne!(mlp.eval(g.features()).unwrap(), before);
    mlp.params_mut().biases[1].as_mut_slice()[0] -= 0.5;
    assert_eq!(gnn.params().biases[1].as_slice()[0], -0.5);
}

#[test]
fn derived_mlp_ignores_edges() {
    let g = small_graph(5);
    let h = Graph::from_edges([(0, 7), (2, 3)], g.features().clone(), g.labels().to_vec(), 3).unwrap();
    let m = model(&g, &[8], PropagationKind::Mean, 6);
    let on_h = m.with_propagation(Propagation::build(PropagationKind::GcnSym, &h)).derive_mlp();
    assert_eq!(m.derive_mlp().eval(g.features()).unwrap(), on_h.eval(g.features()).unwrap());
}

#[test]
fn extractor_classifier_split() {
    let g = small_graph(7);
    for hidden in [&[8][..], &[8, 4]] {
        let m = model(&g, hidden, PropagationKind::GcnSym, 8);
        let p = m.params();
        let (fe, fc) = split_extractor_classifier(&p).unwrap();
        let z = fe.apply(&m.prop, g.features()).unwrap();
        assert_eq!(z.cols(), fc.in_dim());
        let out = m.eval(g.features()).unwrap();
        assert_eq!(z, out.representations);
        assert_eq!(fc.apply(&z).unwrap(), out.logits);
        let one = Matrix::zeros(1, fc.in_dim());
        assert_eq!(fc.apply(&one).unwrap().shape(), (1, 3));
    }
    let single = init_params::<f64>(&LayerSpec::chain(5, &[], 3, 0.0), 0).unwrap();
    assert!(matches!(split_extractor_classifier(&single).unwrap_err(), Error::Structure(_)));
}

#[test]
fn init_params_properties() {
    let specs = LayerSpec::chain(10, &[6], 4, 0.0);
    let a = init_params::<f64>(&specs, 1).unwrap();
    assert_eq!(a, init_params(&specs, 1).unwrap());
    assert_ne!(a, init_params(&specs, 2).unwrap());
    for (w, s) in a.weights.iter().zip(&specs) {
        let bound = (6.0 / (s.in_dim + s.out_dim) as f64).sqrt();
        assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
    }
    assert!(a.biases.iter().all(|b| b.as_slice().iter().all(|&v| v == 0.0)));
}

#[test]
fn spec_chain_validation() {
    let mut s = LayerSpec::chain(4, &[3], 2, 0.1);
    assert!(LayerSpec::validate_chain(&s).is_ok());
    s[1].in_dim = 5;
    assert!(LayerSpec::validate_chain(&s).is_err());
    let mut s = LayerSpec::chain(4, &[3], 2, 0.1);
    s[1].has_activation = true;
    assert!(LayerSpec::validate_chain(&s).is_err());
    assert!(LayerSpec::validate_chain(&LayerSpec::chain(4, &[], 2, 1.0)).is_err());
    assert!(LayerSpec::validate_chain(&[]).is_err());
}

#[test]
fn forward_shape_errors() {
    let g = small_graph(1);
    let m = model(&g, &[8], PropagationKind::GcnSym, 2);
    assert!(matches!(m.eval(&Matrix::zeros(12, 4)).unwrap_err(), Error::Dimension { .. }));
    assert!(matches!(m.eval(&Matrix::zeros(11, 5)).unwrap_err(), Error::Dimension { .. }));
}

fn end_to_end_error(kind: PropagationKind, hidden: &[usize], seed: u64) -> f64 {
    let g = small_graph(seed);
    let m = model(&g, hidden, kind, seed).snapshot().with_dropout(0.0);
    let prop = Propagation::build(kind, &g);
    let l = m.num_layers();
    let tensors: Vec<Matrix<f64>> = m.tensors().cloned().collect();
    let labels = g.labels().to_vec();
    grad_check(
        |t: &mut Tape<f64>, v: &[Var]| {
            let vars = ParamVars {
                weights: v[..l].to_vec(),
                biases: v[l..].to_vec(),
            };
            let x = t.constant(g.features().clone());
            let out = forward_on_tape(t, &m, &vars, &prop.op, x, None)?;
            t.softmax_cross_entropy(out.logits, &labels, None)
        },
        &tensors,
        1e-6,
    )
    .unwrap()
}

use crate::tensor::Var;

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for kind in [PropagationKind::GcnSym, PropagationKind::Identity, PropagationKind::Mean] {
        for hidden in [&[6][..], &[6, 4]] {
            for seed in 0..3 {
                let e = end_to_end_error(kind, hidden, seed);
                assert!(e < 1e-4, "{kind:?} {hidden:?} seed {seed}: {e}");
            }
        }
    }
}

#[test]
fn logits_are_finite_over_many_random_passes() {
    for k in 0..1000u64 {
        let g = synth_sbm::<f64>(10, 2, 0.4, 0.1, 3, 1.0 + (k % 7) as f64, k).unwrap();
        let kind = [PropagationKind::GcnSym, PropagationKind::Mean, PropagationKind::Identity][(k % 3) as usize];
        let m = model(&g, &[5], kind, k);
        assert!(m.eval(g.features()).unwrap().logits.all_finite());
    }
}

#[test]
fn checkpoint_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.bin");
    let params = init_params::<f64>(&LayerSpec::chain(5, &[7], 3, 0.0), 9).unwrap();
    save_checkpoint(&params, &p).unwrap();
    assert_eq!(load_checkpoint::<f64>(&p).unwrap(), params);

    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(&bytes[..4], b"BIKT");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
    assert_eq!(bytes.len(), 12 + 2 * 8 + 8 * (5 * 7 + 7 + 7 * 3 + 3));

    std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_checkpoint::<f64>(&p).unwrap_err(), Error::Checkpoint(_)));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&p, &bad).unwrap();
    assert!(matches!(load_checkpoint::<f64>(&p).unwrap_err(), Error::Checkpoint(_)));

    let f32_params = load_checkpoint::<f32>({
        std::fs::write(&p, &bytes).unwrap();
        &p
    })
    .unwrap();
    assert_eq!(f32_params.weights[0].as_slice()[0], params.weights[0].as_slice()[0] as f32);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identity_forward_is_permutation_equivariant(seed in any::<u64>(), shift in 1usize..12) {
        let g = small_graph(seed);
        let m = model(&g, &[6], PropagationKind::Identity, seed);
        let perm: Vec<usize> = (0..12).map(|i| (i + shift) % 12).collect();
        let x = g.features();
        let px = x.gather_rows(&perm);
        let out = m.eval(x).unwrap().logits;
        let pout = m.eval(&px).unwrap().logits;
        prop_assert_eq!(out.gather_rows(&perm), pout);
    }
}
