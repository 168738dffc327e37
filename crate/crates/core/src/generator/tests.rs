use super::*;
use crate::tensor::grad_check;

fn identity_classifier() -> (Matrix<f64>, Matrix<f64>) {
    (Matrix::identity(2), Matrix::zeros(1, 2))
}

/// Generator that ignores the label and returns its noise.
fn noise_passthrough(classes: usize, dim: usize) -> GeneratorParams<f64> {
    let mut w1 = Matrix::zeros(classes + dim, 2 * dim);
    let mut w2 = Matrix::zeros(2 * dim, dim);
    for j in 0..dim {
        w1.row_mut(classes + j)[j] = 1.0;
        w1.row_mut(classes + j)[dim + j] = -1.0;
        w2.row_mut(j)[j] = 1.0;
        w2.row_mut(dim + j)[j] = -1.0;
    }
    GeneratorParams {
        num_classes: classes,
        dim,
        w1,
        b1: Matrix::zeros(1, 2 * dim),
        w2,
        b2: Matrix::zeros(1, dim),
    }
}

#[test]
fn uniform_prior_counts_are_binomially_plausible() {
    let g = init_generator::<f64>(5, 3, 0);
    let b = sample(&g, 1000, &LabelPrior::Uniform(5), 7).unwrap();
    for c in 0..5 {
        let k = b.labels.iter().filter(|&&y| y == c).count();
        assert!((140..=260).contains(&k), "class {c}: {k}");
    }
    assert_eq!(b.samples.shape(), (1000, 3));
    assert_eq!(b.samples, g.generate(&b.labels, &b.noise).unwrap());
    assert_eq!(b, sample(&g, 1000, &LabelPrior::Uniform(5), 7).unwrap());
    assert!(sample(&g, 0, &LabelPrior::Uniform(5), 7).is_err());
}

#[test]
fn empirical_prior() {
    assert!(matches!(
        LabelPrior::resolve(PriorKind::Empirical, 3, &[]).unwrap_err(),
        Error::Config(_)
    ));
    let p = LabelPrior::resolve(PriorKind::Empirical, 3, &[0, 0, 0, 2]).unwrap();
    assert_eq!(p, LabelPrior::Empirical(vec![0.75, 0.0, 0.25]));
    let g = init_generator::<f64>(3, 2, 0);
    let b = sample(&g, 400, &p, 1).unwrap();
    assert!(b.labels.iter().all(|&y| y != 1));
    let zeros = b.labels.iter().filter(|&&y| y == 0).count();
    assert!((250..350).contains(&zeros));
}

#[test]
fn mode_seeking_examples() {
    let mut r = rng::stream(3, 0);
    let e1: Matrix<f64> = rng::standard_normal(&mut r, 50, 4);
    let e2: Matrix<f64> = rng::standard_normal(&mut r, 50, 4);
    let labels = vec![0; 50];
    let g = init_generator::<f64>(2, 4, 1);
    assert_eq!(mode_seeking_term(&g, &labels, &e1, &e1).unwrap(), 0.0);
    let id = noise_passthrough(2, 4);
    assert!((mode_seeking_term(&id, &labels, &e1, &e2).unwrap() - 1.0).abs() < 1e-12);
    let mut constant = g.clone();
    constant.w1 = Matrix::zeros(6, 8);
    constant.w2 = Matrix::zeros(8, 4);
    assert_eq!(mode_seeking_term(&constant, &labels, &e1, &e2).unwrap(), 0.0);
}

#[test]
fn generator_loss_gradient_matches_finite_differences() {
    let (w, b) = identity_classifier();
    for seed in 0..5 {
        let g = init_generator::<f64>(2, 2, seed);
        let mut r = rng::stream(seed, 77);
        let labels = LabelPrior::Uniform(2).draw(&mut r, 6);
        let e1: Matrix<f64> = rng::standard_normal(&mut r, 6, 2);
        let e2: Matrix<f64> = rng::standard_normal(&mut r, 6, 2);
        let params: Vec<Matrix<f64>> = g.tensors().into_iter().cloned().collect();
        let err = grad_check(
            |t, v| {
                let cls = (t.constant(w.clone()), t.constant(b.clone()));
                let vars = [v[0], v[1], v[2], v[3]];
                Ok(generator_loss_on_tape(t, &g, &vars, cls, &labels, &e1, &e2, 0.7)?.0)
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn two_class_toy_learns_to_separate() {
    let (w, b) = identity_classifier();
    let cls = Classifier { weight: &w, bias: &b };
    let mut g = init_generator::<f64>(2, 2, 4);
    let cfg = GenTrainConfig {
        epochs: 200,
        lr: 1e-2,
        lambda_ms: 0.1,
        k: 64,
    };
    let before = (w.clone(), b.clone());
    let report = train_generator(&mut g, &cls, &LabelPrior::Uniform(2), &cfg, &mut rng::stream(4, 5), None).unwrap();
    assert_eq!(report.epochs.len(), 200);
    assert_eq!((w.clone(), b.clone()), before);
    let batch = sample(&g, 1000, &LabelPrior::Uniform(2), 9).unwrap();
    let (mut hits, mut total) = (0, 0);
    for (i, &y) in batch.labels.iter().enumerate() {
        if y == 0 {
            total += 1;
            hits += (batch.samples[(i, 0)] > batch.samples[(i, 1)]) as usize;
        }
    }
    assert!(hits as f64 >= 0.95 * total as f64, "{hits}/{total}");
}

#[test]
fn single_class_without_diversity_has_zero_loss() {
    let w = Matrix::filled(3, 1, 0.3);
    let b = Matrix::zeros(1, 1);
    let cls = Classifier { weight: &w, bias: &b };
    let mut g = init_generator::<f64>(1, 3, 0);
    let cfg = GenTrainConfig {
        epochs: 5,
        lr: 1e-3,
        lambda_ms: 0.0,
        k: 8,
    };
    let report = train_generator(&mut g, &cls, &LabelPrior::Uniform(1), &cfg, &mut rng::stream(0, 0), None).unwrap();
    assert!(report.epochs.iter().all(|e| e.total == 0.0));
}

#[test]
fn classification_term_decreases_on_average() {
    let mut first = 0.0;
    let mut last = 0.0;
    for seed in 0..5 {
        let mut r = rng::stream(seed, 1);
        let w: Matrix<f64> = rng::standard_normal(&mut r, 4, 3);
        let b = Matrix::zeros(1, 3);
        let cls = Classifier { weight: &w, bias: &b };
        let mut g = init_generator::<f64>(3, 4, seed);
        let report = train_generator(
            &mut g,
            &cls,
            &LabelPrior::Uniform(3),
            &GenTrainConfig::default(),
            &mut rng::stream(seed, 2),
            None,
        )
        .unwrap();
        first += report.epochs[0].classification;
        last += report.epochs.last().unwrap().classification;
    }
    assert!(last < first, "{last} >= {first}");
}

fn class_variance(g: &GeneratorParams<f64>, class: usize) -> f64 {
    let labels = vec![class; 500];
    let noise = rng::standard_normal(&mut rng::stream(0, 3), 500, g.dim);
    let z = g.generate(&labels, &noise).unwrap();
    (0..z.cols())
        .map(|j| {
            let col: Vec<f64> = (0..z.rows()).map(|i| z[(i, j)]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64
        })
        .sum()
}

#[test]
fn diversity_term_increases_sample_spread() {
    let (w, b) = identity_classifier();
    let cls = Classifier { weight: &w, bias: &b };
    let run = |lambda_ms| {
        let mut g = init_generator::<f64>(2, 2, 11);
        let cfg = GenTrainConfig {
            lambda_ms,
            ..GenTrainConfig::default()
        };
        train_generator(&mut g, &cls, &LabelPrior::Uniform(2), &cfg, &mut rng::stream(11, 5), None).unwrap();
        g
    };
    let (with, without) = (run(1.0), run(0.0));
    for c in 0..2 {
        assert!(class_variance(&with, c) > class_variance(&without, c));
    }
}

#[test]
fn mmd_decreases_across_checkpoints_on_two_class_toy() {
    let (w, b) = identity_classifier();
    let cls = Classifier { weight: &w, bias: &b };
    let mut r = rng::stream(21, 0);
    let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
    let mut targets: Matrix<f64> = rng::standard_normal(&mut r, 100, 2);
    for (i, &y) in labels.iter().enumerate() {
        let s = if y == 0 { 1.0 } else { -1.0 };
        let row = targets.row_mut(i);
        row[0] = 0.5 * row[0] + 2.0 * s;
        row[1] = 0.5 * row[1] - 2.0 * s;
    }
    let probe = MmdProbe {
        targets,
        labels,
        per_target: 4,
        seed: 21,
    };
    let mut g = init_generator::<f64>(2, 2, 21);
    let report = train_generator(
        &mut g,
        &cls,
        &LabelPrior::Uniform(2),
        &GenTrainConfig::default(),
        &mut rng::stream(21, 5),
        Some(&probe),
    )
    .unwrap();
    let m: Vec<f64> = report.mmd.iter().map(|c| c.mmd).collect();
    assert_eq!(report.mmd.iter().map(|c| c.epoch).collect::<Vec<_>>(), vec![0, 100, 200]);
    assert!(m[0] > m[1] && m[1] > m[2], "{m:?}");
}

#[test]
fn mmd_examples() {
    let mut r = rng::stream(5, 0);
    let a: Matrix<f64> = rng::standard_normal(&mut r, 500, 4);
    let b: Matrix<f64> = rng::standard_normal::<f64, _>(&mut r, 500, 4).map(|v| v + 5.0);
    assert!(mmd_rbf(&a, &a, Bandwidth::Auto).unwrap().abs() < 1e-10);
    assert!(mmd_rbf(&a, &b, Bandwidth::Auto).unwrap() > 0.5);
    assert_eq!(
        mmd_rbf(&a, &b, Bandwidth::Auto).unwrap(),
        mmd_rbf(&b, &a, Bandwidth::Auto).unwrap()
    );
    let c = a.gather_rows(&(0..123).collect::<Vec<_>>());
    assert_eq!(
        mmd_rbf(&c, &b, Bandwidth::Fixed(2.0)).unwrap(),
        mmd_rbf(&b, &c, Bandwidth::Fixed(2.0)).unwrap()
    );
    let one = Matrix::<f64>::zeros(1, 4);
    assert!(matches!(mmd_rbf(&one, &a, Bandwidth::Auto).unwrap_err(), Error::SampleSize(_)));
    assert!(mmd_rbf(&a, &Matrix::zeros(5, 3), Bandwidth::Auto).is_err());
}

#[test]
fn generator_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.bin");
    let g = init_generator::<f64>(5, 7, 3);
    save_generator(&g, &p).unwrap();
    assert_eq!(&std::fs::read(&p).unwrap()[..4], b"BIKG");
    assert_eq!(load_generator::<f64>(&p).unwrap(), g);
    crate::models::save_checkpoint(&ModelParams {
        specs: LayerSpec::chain(12, &[14], 7, 0.0),
        weights: vec![g.w1.clone(), g.w2.clone()],
        biases: vec![g.b1.clone(), g.b2.clone()],
    }, &p)
    .unwrap();
    assert!(matches!(load_generator::<f64>(&p).unwrap_err(), Error::Checkpoint(_)));
}
