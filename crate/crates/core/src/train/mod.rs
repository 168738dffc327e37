//! Supervised training, the two knowledge-infusion phases, generator fits
//! and the recurrent schedule that alternates them over shared parameters.

mod config;
mod record;

pub use config::{EpochConfig, TrainConfig};
pub use record::{EpochRecord, LossWeights, PhaseId, PhaseRecord};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::generator::{self, GenTrainConfig, GeneratorParams, LabelPrior, MmdProbe};
use crate::models::{
    forward_on_tape, init_params, split_extractor_classifier, Classifier, LayerSpec, Model, ModelParams, Mode,
    ParamVars, Propagation,
};
use crate::optim::Adam;
use crate::rng::{self, streams};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tape, Var};
use crate::graph::SplitMasks;

/// Node features, labels and split masks seen by a training phase.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a, T> {
    pub features: &'a Matrix<T>,
    pub labels: &'a [usize],
    pub masks: &'a SplitMasks,
}

impl<T: Scalar> TrainData<'_, T> {
    fn train_idx(&self) -> Result<Vec<usize>> {
        let idx = self.masks.train_idx();
        if idx.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        Ok(idx)
    }

    fn gather_labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Fraction of `idx` whose argmax logit matches the label.
pub fn accuracy<T: Scalar>(logits: &Matrix<T>, labels: &[usize], idx: &[usize]) -> Option<f64> {
    if idx.is_empty() {
        return None;
    }
    let pred = logits.argmax_rows();
    Some(idx.iter().filter(|&&i| pred[i] == labels[i]).count() as f64 / idx.len() as f64)
}

/// Glorot-initialized model over `prop` with the config's dropout.
pub fn init_model<T: Scalar>(
    in_dim: usize,
    hidden: &[usize],
    num_classes: usize,
    prop: Propagation<T>,
    cfg: &TrainConfig,
) -> Result<Model<T>> {
    let specs = LayerSpec::chain(in_dim, hidden, num_classes, cfg.dropout);
    Model::new(init_params(&specs, cfg.seed)?, prop)
}

/// Extra loss terms contributed by a phase on top of supervised CE.
struct Extras {
    ki: Option<Var>,
    ps: Option<Var>,
}

#[allow(clippy::too_many_arguments)]
/// Adam over `model` with best-validation selection. `extras` may add
/// knowledge-infusion and pseudo-supervision terms each epoch.
fn optimize<T: Scalar>(
    model: &Model<T>,
    data: &TrainData<'_, T>,
    cfg: &TrainConfig,
    phase: PhaseId,
    iteration: usize,
    epochs: usize,
    phase_index: u64,
    weights: LossWeights,
    mut extras: impl FnMut(&mut Tape<T>, &ModelParams<T>, &ParamVars, Var, usize) -> Result<Extras>,
) -> Result<PhaseRecord> {
    let start = Instant::now();
    let train = data.train_idx()?;
    let train_labels = data.gather_labels(&train);
    let val = data.masks.val_idx();
    let mut dropout = rng::substream(cfg.seed, streams::DROPOUT, phase_index);
    let mut adam = Adam::new(cfg.lr, cfg.weight_decay);
    let mut record = PhaseRecord::new(phase, iteration, weights);
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;

    for epoch in 0..epochs {
        let snapshot = model.snapshot();
        let mut tape = Tape::new();
        let vars = ParamVars::trainable(&mut tape, &snapshot);
        let x = tape.constant(data.features.clone());
        let out = forward_on_tape(&mut tape, &snapshot, &vars, &model.prop.op, x, Some(&mut dropout))?;
        let train_logits = tape.gather_rows(out.logits, train.clone())?;
        let sl = tape.softmax_cross_entropy(train_logits, &train_labels, None)?;
        let ex = extras(&mut tape, &snapshot, &vars, out.logits, epoch)?;
        let mut total = sl;
        if let Some(ki) = ex.ki {
            let s = tape.scale(ki, T::lit(weights.alpha));
            total = tape.add(total, s)?;
        }
        if let Some(ps) = ex.ps {
            let s = tape.scale(ps, T::lit(weights.beta));
            total = tape.add(total, s)?;
        }
        let loss = tape.scalar(total);
        if !loss.is_finite() {
            return Err(Error::Training {
                phase: phase.to_string(),
                epoch,
            });
        }
        let grads = tape.backward(total)?;
        let gs: Vec<Option<&Matrix<T>>> = vars.all().into_iter().map(|v| grads.get(v)).collect();
        {
            let mut p = model.params_mut();
            adam.step(p.tensors_mut(), &gs)?;
        }
        let val_acc = if val.is_empty() {
            None
        } else {
            accuracy(&model.eval(data.features)?.logits, data.labels, &val)
        };
        record.epochs.push(EpochRecord {
            epoch,
            loss_total: loss.as_f64(),
            loss_sl: tape.scalar(sl).as_f64(),
            loss_ki: ex.ki.map_or(0.0, |v| tape.scalar(v).as_f64()),
            loss_ps: ex.ps.map_or(0.0, |v| tape.scalar(v).as_f64()),
            loss_div: 0.0,
            val_acc,
        });
        let score = val_acc.unwrap_or(-loss.as_f64());
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, epoch, model.snapshot()));
        }
    }
    if let Some((score, epoch, params)) = best {
        *model.params_mut() = params;
        record.best_epoch = Some(epoch);
        record.best_val_acc = (!val.is_empty()).then_some(score);
    }
    record.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(record)
}

fn sample_count(cfg: &TrainConfig, data: &TrainData<'_, impl Scalar>) -> usize {
    cfg.k.unwrap_or(2 * data.masks.train_idx().len()).max(1)
}

fn label_prior<T: Scalar>(cfg: &TrainConfig, data: &TrainData<'_, T>, num_classes: usize) -> Result<LabelPrior> {
    let train = data.masks.train_idx();
    LabelPrior::resolve(cfg.label_prior, num_classes, &data.gather_labels(&train))
}

/// Plain cross-entropy training on the training nodes (α = β = 0).
pub fn train_supervised<T: Scalar>(model: &Model<T>, data: &TrainData<'_, T>, cfg: &TrainConfig) -> Result<PhaseRecord> {
    cfg.validate()?;
    optimize(model, data, cfg, PhaseId::BaseGnn, 0, cfg.epochs.base, 0, LossWeights::default(), |_, _, _, _, _| {
        Ok(Extras { ki: None, ps: None })
    })
}

/// Mean CE of the trainable classifier (`weight`, `bias` on the tape) on
/// generated representations. The samples enter as constants.
pub fn knowledge_infusion_loss<T: Scalar>(
    tape: &mut Tape<T>,
    batch: &generator::GenBatch<T>,
    weight: Var,
    bias: Var,
) -> Result<Var> {
    let z = tape.constant(batch.samples.clone());
    let logits = Classifier::on_tape(tape, weight, bias, z)?;
    tape.softmax_cross_entropy(logits, &batch.labels, None)
}

fn ki_term<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    g: &GeneratorParams<T>,
    k: usize,
    prior: &LabelPrior,
    r: &mut rng::SeededRng,
) -> Result<Var> {
    let batch = generator::sample_with(g, k, prior, r)?;
    let l = vars.weights.len() - 1;
    knowledge_infusion_loss(tape, &batch, vars.weights[l], vars.biases[l])
}

/// `L_sl + α·L_ki` over the GNN view, with samples from the MLP-side generator.
pub fn train_gnn_phase<T: Scalar>(
    model: &Model<T>,
    data: &TrainData<'_, T>,
    g_mlp: &GeneratorParams<T>,
    cfg: &TrainConfig,
    iteration: usize,
    phase_index: u64,
) -> Result<PhaseRecord> {
    cfg.validate()?;
    let k = sample_count(cfg, data);
    let prior = label_prior(cfg, data, g_mlp.num_classes)?;
    let mut samples = rng::substream(cfg.seed, streams::KI_SAMPLES, phase_index);
    let weights = LossWeights {
        alpha: cfg.alpha,
        ..LossWeights::default()
    };
    optimize(model, data, cfg, PhaseId::Gnn, iteration, cfg.epochs.gnn, phase_index, weights, |tape, _, vars, _, _| {
        let ki = if cfg.alpha > 0.0 {
            Some(ki_term(tape, vars, g_mlp, k, &prior, &mut samples)?)
        } else {
            None
        };
        Ok(Extras { ki, ps: None })
    })
}

#[allow(clippy::too_many_arguments)]
/// `L_sl + α·L_ki + β·L_ps` over the identity view of `gnn`'s parameters.
/// `gnn_probs` are the fixed GNN predictions over all nodes; only observed
/// rows enter `L_ps`.
pub fn train_mlp_phase<T: Scalar>(
    gnn: &Model<T>,
    data: &TrainData<'_, T>,
    g_gnn: &GeneratorParams<T>,
    gnn_probs: &Matrix<T>,
    cfg: &TrainConfig,
    iteration: usize,
    phase_index: u64,
) -> Result<PhaseRecord> {
    cfg.validate()?;
    let mlp = gnn.derive_mlp();
    let observed = data.masks.observed_idx();
    if gnn_probs.rows() != data.features.rows() {
        return Err(Error::Dimension {
            op: "train_mlp_phase",
            lhs: gnn_probs.shape(),
            rhs: data.features.shape(),
        });
    }
    let mut target = gnn_probs.gather_rows(&observed);
    let k = sample_count(cfg, data);
    let prior = label_prior(cfg, data, g_gnn.num_classes)?;
    let mut samples = rng::substream(cfg.seed, streams::KI_SAMPLES, phase_index);
    let weights = LossWeights {
        alpha: cfg.alpha,
        beta: cfg.beta,
        ..LossWeights::default()
    };
    optimize(&mlp, data, cfg, PhaseId::Mlp, iteration, cfg.epochs.mlp, phase_index, weights, |tape, params, vars, logits, epoch| {
        let ki = if cfg.alpha > 0.0 {
            Some(ki_term(tape, vars, g_gnn, k, &prior, &mut samples)?)
        } else {
            None
        };
        let ps = if cfg.beta > 0.0 {
            if cfg.refresh_pseudo_labels && epoch > 0 {
                let fresh = crate::models::forward(params, &gnn.prop, data.features, Mode::Eval)?;
                target = fresh.probabilities.gather_rows(&observed);
            }
            let obs = tape.gather_rows(logits, observed.clone())?;
            Some(tape.kl_div_logits(&target, obs)?)
        } else {
            None
        };
        Ok(Extras { ki, ps })
    })
}

#[allow(clippy::too_many_arguments)]
/// Fits a generator to the frozen classifier of `view` and probes MMD
/// against the view's training-node representations.
pub fn generator_fit_phase<T: Scalar>(
    view: &Model<T>,
    data: &TrainData<'_, T>,
    cfg: &TrainConfig,
    phase: PhaseId,
    iteration: usize,
    phase_index: u64,
    warm_start: Option<GeneratorParams<T>>,
) -> Result<(GeneratorParams<T>, PhaseRecord)> {
    cfg.validate()?;
    let start = Instant::now();
    let params = view.snapshot();
    let (_, cls) = split_extractor_classifier(&params)?;
    let prior = label_prior(cfg, data, cls.num_classes())?;
    let mut g = match warm_start {
        Some(g) => g,
        None => GeneratorParams::init(
            cls.num_classes(),
            cls.in_dim(),
            &mut rng::substream(cfg.seed, streams::GENERATOR_INIT, phase_index),
        ),
    };
    let train = data.train_idx()?;
    let reps = view.eval(data.features)?.representations;
    let probe = MmdProbe {
        targets: reps.gather_rows(&train),
        labels: data.gather_labels(&train),
        per_target: cfg.mmd_samples_per_node,
        seed: cfg.seed.wrapping_add(phase_index),
    };
    let gen_cfg = GenTrainConfig {
        epochs: cfg.epochs.gen,
        lr: cfg.gen_lr,
        lambda_ms: cfg.lambda_ms,
        k: sample_count(cfg, data),
    };
    let mut r = rng::substream(cfg.seed, streams::GENERATOR_TRAIN, phase_index);
    let report = generator::train_generator(&mut g, &cls, &prior, &gen_cfg, &mut r, Some(&probe))
        .map_err(|e| match e {
            Error::Training { epoch, .. } => Error::Training {
                phase: phase.to_string(),
                epoch,
            },
            e => e,
        })?;
    let mut record = PhaseRecord::new(
        phase,
        iteration,
        LossWeights {
            lambda_ms: cfg.lambda_ms,
            ..LossWeights::default()
        },
    );
    record.epochs = report
        .epochs
        .iter()
        .enumerate()
        .map(|(epoch, e)| EpochRecord {
            epoch,
            loss_total: e.total,
            loss_sl: e.classification,
            loss_ki: 0.0,
            loss_ps: 0.0,
            loss_div: e.diversity,
            val_acc: None,
        })
        .collect();
    record.mmd = report.mmd;
    record.wall_clock_s = start.elapsed().as_secs_f64();
    Ok((g, record))
}

/// Outcome of a recurrent run.
#[derive(Clone, Debug)]
pub struct BiktRun<T> {
    /// Parameters after the final phase; evaluate under the graph
    /// operator for the GNN view and under the identity for the MLP view.
    pub model: Model<T>,
    /// Parameters after the base phase and after each GNN phase.
    pub gnn_checkpoints: Vec<ModelParams<T>>,
    /// Parameters after each MLP phase.
    pub mlp_checkpoints: Vec<ModelParams<T>>,
    pub records: Vec<PhaseRecord>,
    pub generators: Vec<(PhaseId, usize, GeneratorParams<T>)>,
}

/// Base supervised phase followed by `cfg.iterations` rounds of
/// generator-on-GNN, MLP phase, generator-on-MLP, GNN phase. `model` is
/// the freshly initialized host GNN over the training-time operator.
pub fn run_bikt<T: Scalar>(model: Model<T>, data: &TrainData<'_, T>, cfg: &TrainConfig) -> Result<BiktRun<T>> {
    cfg.validate()?;
    let mut records = vec![train_supervised(&model, data, cfg)?];
    let mut gnn_checkpoints = vec![model.snapshot()];
    let mut mlp_checkpoints = Vec::new();
    let mut generators: Vec<(PhaseId, usize, GeneratorParams<T>)> = Vec::new();
    let mlp_view = model.derive_mlp();
    let mut last_gen: [Option<GeneratorParams<T>>; 2] = [None, None];

    for it in 1..=cfg.iterations {
        let base = 4 * it as u64;
        let warm = |slot: &Option<GeneratorParams<T>>| if cfg.warm_start_generators { slot.clone() } else { None };

        let (g_gnn, rec) =
            generator_fit_phase(&model, data, cfg, PhaseId::GenGnn, it, base - 3, warm(&last_gen[0]))?;
        records.push(rec);
        let gnn_probs = model.eval(data.features)?.probabilities;
        records.push(train_mlp_phase(&model, data, &g_gnn, &gnn_probs, cfg, it, base - 2)?);
        mlp_checkpoints.push(model.snapshot());

        let (g_mlp, rec) =
            generator_fit_phase(&mlp_view, data, cfg, PhaseId::GenMlp, it, base - 1, warm(&last_gen[1]))?;
        records.push(rec);
        records.push(train_gnn_phase(&model, data, &g_mlp, cfg, it, base)?);
        gnn_checkpoints.push(model.snapshot());

        generators.push((PhaseId::GenGnn, it, g_gnn.clone()));
        generators.push((PhaseId::GenMlp, it, g_mlp.clone()));
        last_gen = [Some(g_gnn), Some(g_mlp)];
    }
    Ok(BiktRun {
        model,
        gnn_checkpoints,
        mlp_checkpoints,
        records,
        generators,
    })
}
