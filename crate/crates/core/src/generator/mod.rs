//! Conditional generator `G(y, ε)` over classifier-input representations,
//! its training objective and the MMD fit probe.

mod mmd;

pub use mmd::{mmd_rbf, Bandwidth};

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{read_layers, write_layers, Classifier, LayerSpec, ModelParams};
use crate::optim::Adam;
use crate::rng::{self, streams, SeededRng};
use crate::scalar::Scalar;
use crate::tensor::{kernels, Matrix, Tape, Var};

const GENERATOR_MAGIC: &[u8; 4] = b"BIKG";
const DISTANCE_FLOOR: f64 = 1e-5;

/// `[onehot(y) | ε]` (C + d) -> 2d with ReLU -> d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams<T> {
    pub num_classes: usize,
    pub dim: usize,
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenBatch<T> {
    pub labels: Vec<usize>,
    pub noise: Matrix<T>,
    pub samples: Matrix<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Uniform,
    Empirical,
}

/// Label distribution used to draw generator conditions.
#[derive(Clone, Debug, PartialEq)]
pub enum LabelPrior {
    Uniform(usize),
    Empirical(Vec<f64>),
}

impl LabelPrior {
    /// `train_labels` are only consulted for the empirical prior.
    pub fn resolve(kind: PriorKind, num_classes: usize, train_labels: &[usize]) -> Result<Self> {
        match kind {
            PriorKind::Uniform => Ok(Self::Uniform(num_classes)),
            PriorKind::Empirical => {
                if train_labels.is_empty() {
                    return Err(Error::Config("empirical label prior needs training labels".into()));
                }
                let mut freq = vec![0.0; num_classes];
                for &y in train_labels {
                    *freq.get_mut(y).ok_or_else(|| Error::Index(format!("label {y} >= {num_classes}")))? += 1.0;
                }
                let total = train_labels.len() as f64;
                Ok(Self::Empirical(freq.into_iter().map(|c| c / total).collect()))
            }
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Self::Uniform(c) => *c,
            Self::Empirical(p) => p.len(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, r: &mut R, k: usize) -> Vec<usize> {
        match self {
            Self::Uniform(c) => (0..k).map(|_| r.random_range(0..*c)).collect(),
            Self::Empirical(p) => {
                let dist = WeightedIndex::new(p).expect("prior has positive mass");
                (0..k).map(|_| dist.sample(r)).collect()
            }
        }
    }
}

impl<T: Scalar> GeneratorParams<T> {
    pub fn init<R: Rng + ?Sized>(num_classes: usize, dim: usize, r: &mut R) -> Self {
        let specs = LayerSpec::chain(num_classes + dim, &[2 * dim], dim, 0.0);
        let p: ModelParams<T> = ModelParams::glorot(&specs, r);
        let mut it = p.weights.into_iter().zip(p.biases);
        let (w1, b1) = it.next().expect("two layers");
        let (w2, b2) = it.next().expect("two layers");
        Self {
            num_classes,
            dim,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn tensors(&self) -> [&Matrix<T>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix<T>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn input(&self, labels: &[usize], noise: &Matrix<T>) -> Result<Matrix<T>> {
        if noise.cols() != self.dim || noise.rows() != labels.len() {
            return Err(Error::Dimension {
                op: "generator",
                lhs: (labels.len(), self.dim),
                rhs: noise.shape(),
            });
        }
        kernels::concat_cols(&Matrix::one_hot(labels, self.num_classes)?, noise)
    }

    pub fn generate(&self, labels: &[usize], noise: &Matrix<T>) -> Result<Matrix<T>> {
        let h = kernels::relu(&kernels::add_bias(
            &kernels::matmul(&self.input(labels, noise)?, &self.w1)?,
            &self.b1,
        )?);
        kernels::add_bias(&kernels::matmul(&h, &self.w2)?, &self.b2)
    }

    /// Generator output on the tape; `vars` are handles for `tensors()`.
    pub fn on_tape(&self, tape: &mut Tape<T>, vars: &[Var; 4], labels: &[usize], noise: &Matrix<T>) -> Result<Var> {
        let x = tape.constant(self.input(labels, noise)?);
        let a = tape.matmul(x, vars[0])?;
        let a = tape.add_bias(a, vars[1])?;
        let h = tape.relu(a);
        let o = tape.matmul(h, vars[2])?;
        tape.add_bias(o, vars[3])
    }
}

pub fn init_generator<T: Scalar>(num_classes: usize, dim: usize, seed: u64) -> GeneratorParams<T> {
    GeneratorParams::init(num_classes, dim, &mut rng::stream(seed, streams::GENERATOR_INIT))
}

pub fn sample_with<T: Scalar>(
    g: &GeneratorParams<T>,
    k: usize,
    prior: &LabelPrior,
    r: &mut SeededRng,
) -> Result<GenBatch<T>> {
    if k == 0 {
        return Err(Error::SampleSize("generator batch size must be >= 1".into()));
    }
    if prior.num_classes() != g.num_classes {
        return Err(Error::Consistency(format!(
            "prior over {} classes for a generator over {}",
            prior.num_classes(),
            g.num_classes
        )));
    }
    let labels = prior.draw(r, k);
    let noise = rng::standard_normal(r, k, g.dim);
    let samples = g.generate(&labels, &noise)?;
    Ok(GenBatch { labels, noise, samples })
}

pub fn sample<T: Scalar>(g: &GeneratorParams<T>, k: usize, prior: &LabelPrior, seed: u64) -> Result<GenBatch<T>> {
    sample_with(g, k, prior, &mut rng::stream(seed, streams::KI_SAMPLES))
}

fn row_weights<T: Scalar>(e1: &Matrix<T>, e2: &Matrix<T>) -> Vec<T> {
    let d = e1.cols() as f64;
    (0..e1.rows())
        .map(|i| {
            let de: f64 = e1.row(i).iter().zip(e2.row(i)).map(|(a, b)| (*a - *b).abs().as_f64()).sum::<f64>() / d;
            T::lit(1.0 / (d * de.max(DISTANCE_FLOOR)))
        })
        .collect()
}

/// `mean_i d_z(G(y_i, ε1_i), G(y_i, ε2_i)) / max(d_ε(ε1_i, ε2_i), 1e-5)` with
/// `d` the mean absolute difference.
pub fn mode_seeking_term<T: Scalar>(
    g: &GeneratorParams<T>,
    labels: &[usize],
    e1: &Matrix<T>,
    e2: &Matrix<T>,
) -> Result<T> {
    e1.ensure_shape("mode_seeking_term", e2)?;
    let z1 = g.generate(labels, e1)?;
    let z2 = g.generate(labels, e2)?;
    let w = row_weights(e1, e2);
    let total = (0..z1.rows())
        .map(|i| w[i] * z1.row(i).iter().zip(z2.row(i)).map(|(a, b)| (*a - *b).abs()).sum::<T>())
        .sum::<T>();
    Ok(total / T::lit(z1.rows() as f64))
}

fn mode_seeking_on_tape<T: Scalar>(tape: &mut Tape<T>, z1: Var, z2: Var, e1: &Matrix<T>, e2: &Matrix<T>) -> Result<Var> {
    let diff = tape.sub(z1, z2)?;
    let a = tape.abs(diff);
    let weighted = tape.row_scale(a, row_weights(e1, e2))?;
    let s = tape.sum(weighted);
    Ok(tape.scale(s, T::lit(1.0 / e1.rows() as f64)))
}

/// `L_gen = CE(f_cls(G(y, ε1)), y) - λ·D(G)` as `(total, ce, d)` on the tape.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    g: &GeneratorParams<T>,
    vars: &[Var; 4],
    cls: (Var, Var),
    labels: &[usize],
    e1: &Matrix<T>,
    e2: &Matrix<T>,
    lambda_ms: f64,
) -> Result<(Var, Var, Var)> {
    let z1 = g.on_tape(tape, vars, labels, e1)?;
    let logits = Classifier::on_tape(tape, cls.0, cls.1, z1)?;
    let ce = tape.softmax_cross_entropy(logits, labels, None)?;
    if lambda_ms == 0.0 {
        let zero = tape.constant(Matrix::zeros(1, 1));
        return Ok((ce, ce, zero));
    }
    let z2 = g.on_tape(tape, vars, labels, e2)?;
    let d = mode_seeking_on_tape(tape, z1, z2, e1, e2)?;
    let neg = tape.scale(d, T::lit(-lambda_ms));
    Ok((tape.add(ce, neg)?, ce, d))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lambda_ms: f64,
    pub k: usize,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            lambda_ms: 1.0,
            k: 64,
        }
    }
}

/// Target representations the generator output is compared against.
#[derive(Clone, Debug)]
pub struct MmdProbe<T> {
    pub targets: Matrix<T>,
    pub labels: Vec<usize>,
    /// Generated samples per target row, label-matched.
    pub per_target: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenEpoch {
    pub total: f64,
    pub classification: f64,
    pub diversity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdCheckpoint {
    pub epoch: usize,
    pub mmd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenTrainReport {
    pub epochs: Vec<GenEpoch>,
    pub mmd: Vec<MmdCheckpoint>,
}

impl<T: Scalar> MmdProbe<T> {
    pub fn measure(&self, g: &GeneratorParams<T>) -> Result<f64> {
        let labels: Vec<usize> = self
            .labels
            .iter()
            .flat_map(|&y| std::iter::repeat_n(y, self.per_target))
            .collect();
        let noise = rng::standard_normal(&mut rng::stream(self.seed, streams::MMD_PROBE), labels.len(), g.dim);
        mmd_rbf(&g.generate(&labels, &noise)?, &self.targets, Bandwidth::Auto)
    }
}

/// Trains `g` against the frozen classifier. MMD is probed at epoch 0,
/// the midpoint and the end when a probe is given.
pub fn train_generator<T: Scalar>(
    g: &mut GeneratorParams<T>,
    classifier: &Classifier<'_, T>,
    prior: &LabelPrior,
    cfg: &GenTrainConfig,
    r: &mut SeededRng,
    probe: Option<&MmdProbe<T>>,
) -> Result<GenTrainReport> {
    if classifier.in_dim() != g.dim || classifier.num_classes() != g.num_classes {
        return Err(Error::Dimension {
            op: "train_generator",
            lhs: (g.dim, g.num_classes),
            rhs: (classifier.in_dim(), classifier.num_classes()),
        });
    }
    if cfg.lambda_ms < 0.0 {
        return Err(Error::Config(format!("lambda_ms = {} must be >= 0", cfg.lambda_ms)));
    }
    let mut adam = Adam::new(cfg.lr, 0.0);
    let mut report = GenTrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        mmd: Vec::new(),
    };
    let checkpoints = [0, cfg.epochs / 2, cfg.epochs];
    for epoch in 0..cfg.epochs {
        if let Some(p) = probe {
            if checkpoints.contains(&epoch) {
                report.mmd.push(MmdCheckpoint {
                    epoch,
                    mmd: p.measure(g)?,
                });
            }
        }
        let labels = prior.draw(r, cfg.k);
        let e1: Matrix<T> = rng::standard_normal(r, cfg.k, g.dim);
        let e2: Matrix<T> = rng::standard_normal(r, cfg.k, g.dim);
        let mut tape = Tape::new();
        let vars = g.tensors().map(|m| tape.param(m.clone()));
        let cls = (tape.constant(classifier.weight.clone()), tape.constant(classifier.bias.clone()));
        let (total, ce, d) = generator_loss_on_tape(&mut tape, g, &vars, cls, &labels, &e1, &e2, cfg.lambda_ms)?;
        let loss = tape.scalar(total);
        if !loss.is_finite() {
            return Err(Error::Training {
                phase: "generator".into(),
                epoch,
            });
        }
        report.epochs.push(GenEpoch {
            total: loss.as_f64(),
            classification: tape.scalar(ce).as_f64(),
            diversity: tape.scalar(d).as_f64(),
        });
        let grads = tape.backward(total)?;
        let gs: Vec<Option<&Matrix<T>>> = vars.iter().map(|&v| grads.get(v)).collect();
        adam.step(g.tensors_mut(), &gs)?;
    }
    if let Some(p) = probe {
        report.mmd.push(MmdCheckpoint {
            epoch: cfg.epochs,
            mmd: p.measure(g)?,
        });
    }
    Ok(report)
}

pub fn save_generator<T: Scalar>(g: &GeneratorParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_layers(&mut w, GENERATOR_MAGIC, &[(&g.w1, &g.b1), (&g.w2, &g.b2)])?;
    w.flush()?;
    Ok(())
}

pub fn load_generator<T: Scalar>(path: impl AsRef<Path>) -> Result<GeneratorParams<T>> {
    let layers = read_layers::<T>(&mut BufReader::new(fs::File::open(path)?), GENERATOR_MAGIC)?;
    let [(w1, b1), (w2, b2)]: [(Matrix<T>, Matrix<T>); 2] = layers
        .try_into()
        .map_err(|_| Error::Checkpoint("generator checkpoint must have two layers".into()))?;
    let dim = w2.cols();
    if w1.cols() != 2 * dim || w2.rows() != 2 * dim || w1.rows() <= dim {
        return Err(Error::Checkpoint("generator layer shapes are inconsistent".into()));
    }
    Ok(GeneratorParams {
        num_classes: w1.rows() - dim,
        dim,
        w1,
        b1,
        w2,
        b2,
    })
}

#[cfg(test)]
mod tests;
