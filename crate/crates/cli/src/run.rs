use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use bikt_core::diagnostics::{
    aggregate_runs, assortativity_eval, train_mlp_re, union_intersection, EvalReport, MeanStd, PredictionSet,
};
use bikt_core::generator::{save_generator, MmdCheckpoint};
use bikt_core::graph::{homophily, load_graph, make_inductive, make_splits, HomophilyReport};
use bikt_core::models::save_checkpoint;
use bikt_core::train::{init_model, run_bikt, train_supervised, LossWeights, PhaseId, PhaseRecord, TrainData};
use bikt_core::{Error, Graph, Model, ModelParams, Propagation};
use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, RunConfig, RunMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomophilySummary {
    pub mean: Option<f64>,
    pub assortative: usize,
    pub disassortative: usize,
    pub middle: usize,
    pub isolated: usize,
}

impl From<&HomophilyReport> for HomophilySummary {
    fn from(h: &HomophilyReport) -> Self {
        Self {
            mean: h.mean(),
            assortative: h.assortative.len(),
            disassortative: h.disassortative.len(),
            middle: h.middle().len(),
            isolated: h.ratios.iter().filter(|r| r.is_none()).count(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnionIntersection {
    pub union: f64,
    pub intersection: f64,
}

/// A phase record without its per-epoch trace (that goes to metrics.csv).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: PhaseId,
    pub iteration: usize,
    pub weights: LossWeights,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
    pub mmd: Vec<MmdCheckpoint>,
    pub checkpoint: Option<String>,
    pub wall_clock_s: f64,
}

impl From<&PhaseRecord> for PhaseSummary {
    fn from(r: &PhaseRecord) -> Self {
        Self {
            phase: r.phase,
            iteration: r.iteration,
            weights: r.weights,
            epochs: r.epochs.len(),
            final_loss: r.epochs.last().map(|e| e.loss_total),
            best_epoch: r.best_epoch,
            best_val_acc: r.best_val_acc,
            mmd: r.mmd.clone(),
            checkpoint: r.checkpoint.clone(),
            wall_clock_s: r.wall_clock_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub split: SplitSizes,
    pub views: BTreeMap<String, EvalReport>,
    pub union_intersection: BTreeMap<String, UnionIntersection>,
    pub phases: Vec<PhaseSummary>,
    pub wall_clock_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub unobserved: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub config: RunConfig,
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub homophily: HomophilySummary,
    pub runs: Vec<SeedSummary>,
    /// Mean and sample std per view and metric; present with two or more seeds.
    pub aggregate: Option<Aggregate>,
    pub wall_clock_s: f64,
}

/// Failure while executing a validated config.
#[derive(Debug)]
pub struct RunError(pub String);

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RunError {}

fn ctx(what: impl std::fmt::Display) -> impl FnOnce(Error) -> RunError {
    move |e| RunError(format!("{what}: {e}"))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Graph, RunError> {
    match (&cfg.dataset.files, &cfg.dataset.sbm) {
        (Some(f), _) => load_graph(&f.edges, &f.features, &f.labels).map_err(ctx("loading dataset")),
        (None, Some(s)) => s.generate().map_err(ctx("generating SBM dataset")),
        (None, None) => Err(RunError("no dataset source".into())),
    }
}

struct SeedOutput {
    summary: SeedSummary,
    records: Vec<PhaseRecord>,
}

fn evaluate(
    model: &Model,
    g: &Graph,
    h: &HomophilyReport,
    nodes: &[usize],
) -> Result<(PredictionSet, EvalReport), Error> {
    let logits = model.eval(g.features())?.logits;
    let pred = PredictionSet::from_logits(&logits, g.labels(), nodes)?;
    let report = assortativity_eval(&pred, g.labels(), g.num_classes(), h);
    Ok((pred, report))
}

fn view(params: &ModelParams, prop: &Propagation) -> Result<Model, Error> {
    Model::new(params.clone(), prop.clone())
}

fn save_model_checkpoint(
    out: &Path,
    seed: u64,
    index: usize,
    rec: &mut PhaseRecord,
    params: &ModelParams,
) -> Result<(), RunError> {
    let rel = format!("checkpoints/seed_{seed}/{index:02}_{}_{}.bin", rec.phase, rec.iteration);
    let path = out.join(&rel);
    fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| RunError(format!("{}: {e}", path.display())))?;
    save_checkpoint(params, &path).map_err(ctx(format!("writing {}", path.display())))?;
    rec.checkpoint = Some(rel);
    Ok(())
}

fn run_seed(cfg: &RunConfig, g: &Graph, h: &HomophilyReport, seed: u64, out: &Path) -> Result<SeedOutput, RunError> {
    let start = Instant::now();
    let split_seed = cfg.split.seed.unwrap_or(seed);
    let mut masks = make_splits(g, cfg.split.train_frac, cfg.split.val_frac, split_seed, cfg.split.stratified)
        .map_err(ctx("building splits"))?;
    let train_graph = if cfg.split.inductive {
        let (gt, m) = make_inductive(g, &masks, cfg.split.holdout_frac.unwrap_or(0.2), split_seed)
            .map_err(ctx("building inductive split"))?;
        masks = m;
        gt
    } else {
        g.clone()
    };
    let tc = cfg.train_config(seed);
    let kind = cfg.model.propagation;
    let train_prop = Propagation::build(kind, &train_graph);
    let eval_prop = Propagation::build(kind, g);
    let identity = Propagation::identity(g.n());
    let data = TrainData {
        features: g.features(),
        labels: g.labels(),
        masks: &masks,
    };
    let hidden = cfg.model.hidden_dims();
    let test = masks.test_idx();
    let model = init_model(g.feature_dim(), &hidden, g.num_classes(), train_prop, &tc).map_err(ctx("building model"))?;

    let mut views = BTreeMap::new();
    let mut preds = BTreeMap::new();
    let mut records = Vec::new();
    let mut add_view = |name: &str, m: &Model| -> Result<(), RunError> {
        let (p, r) = evaluate(m, g, h, &test).map_err(ctx(format!("evaluating {name}")))?;
        views.insert(name.to_string(), r);
        preds.insert(name.to_string(), p);
        Ok(())
    };

    let fail = |e: Error| RunError(format!("seed {seed}: {e}"));
    let base_params = match cfg.mode {
        RunMode::Supervised | RunMode::Investigate => {
            let mut rec = train_supervised(&model, &data, &tc).map_err(fail)?;
            let p = model.snapshot();
            save_model_checkpoint(out, seed, 0, &mut rec, &p)?;
            records.push(rec);
            p
        }
        RunMode::Bikt => {
            let run = run_bikt(model, &data, &tc).map_err(fail)?;
            let (mut gnn_i, mut mlp_i, mut gen_i) = (0, 0, 0);
            for (k, mut rec) in run.records.into_iter().enumerate() {
                match rec.phase {
                    PhaseId::BaseGnn | PhaseId::Gnn => {
                        save_model_checkpoint(out, seed, k, &mut rec, &run.gnn_checkpoints[gnn_i])?;
                        gnn_i += 1;
                    }
                    PhaseId::Mlp => {
                        save_model_checkpoint(out, seed, k, &mut rec, &run.mlp_checkpoints[mlp_i])?;
                        mlp_i += 1;
                    }
                    PhaseId::GenGnn | PhaseId::GenMlp => {
                        let rel = format!("checkpoints/seed_{seed}/{k:02}_{}_{}.bin", rec.phase, rec.iteration);
                        let path = out.join(&rel);
                        fs::create_dir_all(path.parent().expect("has parent"))
                            .map_err(|e| RunError(format!("{}: {e}", path.display())))?;
                        save_generator(&run.generators[gen_i].2, &path)
                            .map_err(ctx(format!("writing {}", path.display())))?;
                        rec.checkpoint = Some(rel);
                        gen_i += 1;
                    }
                    PhaseId::MlpRe => {}
                }
                records.push(rec);
            }
            let final_params = run.model.snapshot();
            add_view("bikt_gnn", &view(&final_params, &eval_prop).map_err(fail)?)?;
            add_view("bikt_mlp", &view(&final_params, &identity).map_err(fail)?)?;
            run.gnn_checkpoints[0].clone()
        }
    };
    add_view("gnn", &view(&base_params, &eval_prop).map_err(fail)?)?;

    let mut ui = BTreeMap::new();
    if cfg.mode != RunMode::Supervised {
        add_view("mlp_share", &view(&base_params, &identity).map_err(fail)?)?;
        let (mlp_re, mut rec) = train_mlp_re(&hidden, g.num_classes(), &data, &tc).map_err(fail)?;
        let k = records.len();
        save_model_checkpoint(out, seed, k, &mut rec, &mlp_re.snapshot())?;
        records.push(rec);
        add_view("mlp_re", &mlp_re)?;
        for other in ["mlp_share", "mlp_re"] {
            let (u, i) = union_intersection(&preds["gnn"], &preds[other]).map_err(fail)?;
            ui.insert(
                format!("gnn_{other}"),
                UnionIntersection {
                    union: u,
                    intersection: i,
                },
            );
        }
    }

    let summary = SeedSummary {
        seed,
        split: SplitSizes {
            train: masks.train_idx().len(),
            val: masks.val_idx().len(),
            test: test.len(),
            unobserved: masks.observed.iter().filter(|&&o| !o).count(),
        },
        views,
        union_intersection: ui,
        phases: records.iter().map(PhaseSummary::from).collect(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok(SeedOutput { summary, records })
}

/// Mean and sample std per view, then per metric.
pub type Aggregate = BTreeMap<String, BTreeMap<String, MeanStd>>;

fn aggregate(runs: &[SeedSummary]) -> Result<Option<Aggregate>, RunError> {
    if runs.len() < 2 {
        return Ok(None);
    }
    let mut groups: BTreeMap<String, Vec<BTreeMap<String, f64>>> = BTreeMap::new();
    for r in runs {
        for (name, report) in &r.views {
            groups.entry(name.clone()).or_default().push(report.metrics());
        }
        for (name, x) in &r.union_intersection {
            groups.entry(format!("union_intersection.{name}")).or_default().push(BTreeMap::from([
                ("union".to_string(), x.union),
                ("intersection".to_string(), x.intersection),
            ]));
        }
    }
    let mut out = BTreeMap::new();
    for (name, mut metrics) in groups {
        let common: Vec<String> = metrics[0]
            .keys()
            .filter(|k| metrics.iter().all(|m| m.contains_key(*k)))
            .cloned()
            .collect();
        for m in &mut metrics {
            m.retain(|k, _| common.contains(k));
        }
        out.insert(name, aggregate_runs(&metrics).map_err(ctx("aggregating runs"))?);
    }
    Ok(Some(out))
}

/// One line per epoch of every phase, seeds in config order.
pub fn metrics_csv(rows: &[(u64, Vec<PhaseRecord>)]) -> String {
    let mut s = String::from("seed,phase,epoch,loss_total,loss_sl,loss_ki,loss_ps,val_acc\n");
    for (seed, records) in rows {
        for r in records {
            for e in &r.epochs {
                let val = e.val_acc.map_or(String::new(), |v| v.to_string());
                writeln!(
                    s,
                    "{seed},{},{},{},{},{},{},{val}",
                    r.phase, e.epoch, e.loss_total, e.loss_sl, e.loss_ki, e.loss_ps
                )
                .expect("writing to a String");
            }
        }
    }
    s
}

/// Runs every seed of a loaded config and writes summary.json,
/// metrics.csv and checkpoints into `out`.
pub fn run(loaded: &LoadedConfig, out: &Path, jobs: usize) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    let cfg = &loaded.config;
    fs::create_dir_all(out).map_err(|e| RunError(format!("{}: {e}", out.display())))?;
    let g = load_dataset(cfg)?;
    let h = homophily(&g);
    log::info!(
        "{} nodes, {} edges, {} classes, mean homophily {:?}",
        g.n(),
        g.edge_count(),
        g.num_classes(),
        h.mean()
    );

    let seeds = &cfg.seeds;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SeedOutput, RunError>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    let workers = jobs.clamp(1, seeds.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                log::info!("seed {} started", seeds[i]);
                let r = run_seed(cfg, &g, &h, seeds[i], out);
                log::info!("seed {} finished", seeds[i]);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });

    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for (seed, r) in seeds.iter().zip(results.into_inner().expect("result lock")) {
        let r = r.expect("every seed ran")?;
        rows.push((*seed, r.records));
        runs.push(r.summary);
    }
    fs::write(out.join("metrics.csv"), metrics_csv(&rows)).map_err(|e| RunError(format!("metrics.csv: {e}")))?;

    let mut config = cfg.clone();
    config.output_dir = None;
    let summary = RunSummary {
        config_hash: loaded.hash.clone(),
        config,
        nodes: g.n(),
        edges: g.edge_count(),
        classes: g.num_classes(),
        homophily: HomophilySummary::from(&h),
        aggregate: aggregate(&runs)?,
        runs,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| RunError(format!("summary.json: {e}")))?;
    fs::write(out.join("summary.json"), json + "\n").map_err(|e| RunError(format!("summary.json: {e}")))?;
    Ok(summary)
}

/// Output directory: the flag, then the config, then `runs/<hash prefix>`.
pub fn output_dir(loaded: &LoadedConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| loaded.config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&loaded.hash[..12]))
}
