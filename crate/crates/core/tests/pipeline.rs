use bikt_core::diagnostics::{assortativity_eval, mlp_share_eval, train_mlp_re, PredictionSet};
use bikt_core::graph::{homophily, load_graph, make_inductive, make_splits, read_splits, synth_sbm, write_graph, write_splits};
use bikt_core::models::{load_checkpoint, save_checkpoint, Model, Propagation, PropagationKind};
use bikt_core::train::{init_model, run_bikt, EpochConfig, PhaseId, TrainConfig, TrainData};
use bikt_core::Scalar;

fn quick_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: 1,
        epochs: EpochConfig {
            base: 40,
            gnn: 15,
            mlp: 15,
            gen: 15,
        },
        seed,
        ..TrainConfig::default()
    }
}

fn pipeline<T: Scalar>(seed: u64) -> (f64, f64) {
    let g = synth_sbm::<T>(240, 3, 0.06, 0.006, 12, 1.0, seed).unwrap();
    let masks = make_splits(&g, 0.1, 0.1, seed, true).unwrap();
    let data = TrainData {
        features: g.features(),
        labels: g.labels(),
        masks: &masks,
    };
    let cfg = quick_cfg(seed);
    let prop = Propagation::build(PropagationKind::GcnSym, &g);
    let model = init_model(12, &[16], 3, prop.clone(), &cfg).unwrap();
    let run = run_bikt(model, &data, &cfg).unwrap();
    let phases: Vec<PhaseId> = run.records.iter().map(|r| r.phase).collect();
    assert_eq!(phases, [PhaseId::BaseGnn, PhaseId::GenGnn, PhaseId::Mlp, PhaseId::GenMlp, PhaseId::Gnn]);
    assert!(run.model.snapshot().all_finite());

    let test = masks.test_idx();
    let logits = Model::new(run.model.snapshot(), prop).unwrap().eval(g.features()).unwrap().logits;
    let pred = PredictionSet::from_logits(&logits, g.labels(), &test).unwrap();
    let report = assortativity_eval(&pred, g.labels(), 3, &homophily(&g));
    let (_, share) = mlp_share_eval(&run.model, g.features(), g.labels(), &test).unwrap();
    (report.accuracy, share.accuracy)
}

#[test]
fn f64_pipeline_learns() {
    let (gnn, mlp) = pipeline::<f64>(1);
    assert!(gnn > 0.8, "{gnn}");
    assert!(mlp > 1.0 / 3.0, "{mlp}");
}

#[test]
fn f32_pipeline_learns() {
    let (gnn, _) = pipeline::<f32>(1);
    assert!(gnn > 0.8, "{gnn}");
}

#[test]
fn dataset_and_split_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = synth_sbm::<f64>(60, 3, 0.2, 0.02, 5, 0.5, 3).unwrap();
    write_graph(&g, dir.path()).unwrap();
    let back = load_graph::<f64>(dir.path().join("edges.txt"), dir.path().join("features.csv"), dir.path().join("labels.csv")).unwrap();
    assert_eq!(back.labels(), g.labels());
    assert_eq!(back.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
    assert_eq!(back.features(), g.features());

    let masks = make_splits(&g, 0.2, 0.2, 3, true).unwrap();
    let (_, masks) = make_inductive(&g, &masks, 0.5, 3).unwrap();
    let path = dir.path().join("splits.json");
    write_splits(&masks, &path).unwrap();
    assert_eq!(read_splits(&path, 60).unwrap(), masks);
    assert!(read_splits(&path, 59).is_err());
}

#[test]
fn checkpoint_restores_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let g = synth_sbm::<f64>(90, 3, 0.1, 0.01, 6, 1.0, 5).unwrap();
    let masks = make_splits(&g, 0.2, 0.1, 5, true).unwrap();
    let data = TrainData {
        features: g.features(),
        labels: g.labels(),
        masks: &masks,
    };
    let cfg = quick_cfg(5);
    let (mlp, _) = train_mlp_re(&[8], 3, &data, &cfg).unwrap();
    let path = dir.path().join("m.bin");
    save_checkpoint(&mlp.snapshot(), &path).unwrap();
    let restored = Model::new(load_checkpoint::<f64>(&path).unwrap(), Propagation::identity(90)).unwrap();
    assert_eq!(restored.eval(g.features()).unwrap().logits, mlp.eval(g.features()).unwrap().logits);
}
